"""Experiment configuration: INI parsing, full validation, and digests.

A config is a flat INI file with fixed sections.  Parsing collects every
problem it can find instead of stopping at the first, so a bad file is
fixable in one pass.  The resolved config serializes to a plain dict for
the run manifest, and a manifest can be loaded back into an equivalent
config for byte-identical reruns.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .solver import FULL_INFO, TWO_POINT

__all__ = [
    "ConfigError",
    "FailureScenario",
    "RunConfig",
    "parse_config",
    "config_from_dict",
    "config_digest",
    "load_manifest_config",
    "QCQP_KIND",
    "LOGISTIC_KIND",
]

QCQP_KIND = "qcqp"
LOGISTIC_KIND = "logistic"

DELTA_FIXED = "fixed"
DELTA_DERIVED = "derived"

FAILURE_UNIFORM = "uniform"
FAILURE_FILE = "file"
FAILURE_NONE = "none"

_SECTIONS = {
    "experiment": {"kind", "n", "d", "horizon", "radius"},
    "graph": {"p_edge", "seed", "edge_list"},
    "failure": {"mode", "scenarios", "file"},
    "solver": {"feedback", "a", "delta_mode", "delta", "beta", "r"},
    "constants": {"cost_grad", "constraint_grad", "constraint_curvature", "constraint_bound"},
    "run": {"seeds", "output_dir"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class FailureScenario:
    """One failure level: probabilities drawn uniformly from [low, high].

    The perfect-communication baseline is (0, 0) with label "perfect".
    Labels follow the reference plots' legend convention: the range upper
    bound, prefixed with p.
    """

    label: str
    low: float
    high: float

    @property
    def is_perfect(self) -> bool:
        return self.high == 0.0


def _scenario_from_token(token: str) -> FailureScenario:
    if token == "perfect":
        return FailureScenario("perfect", 0.0, 0.0)
    if ":" in token:
        lo_text, hi_text = token.split(":", 1)
        low, high = float(lo_text), float(hi_text)
    else:
        low, high = 0.0, float(token)
    if low == 0.0:
        label = f"p{high:g}"
    else:
        label = f"p{low:g}-{high:g}"
    return FailureScenario(label, low, high)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated experiment description."""

    kind: str
    n: int
    dim: int
    horizon: int
    radius: float
    graph_p_edge: float | None
    graph_seed: int | None
    edge_list: str | None
    failure_mode: str
    scenarios: tuple[FailureScenario, ...]
    failure_file: str | None
    feedback: str
    step_scale: float
    delta_mode: str
    delta: float
    beta: float | None
    interior_radius: float | None
    seeds: tuple[int, ...]
    output_dir: str
    constants: dict[str, float] = field(default_factory=dict)

    def resolved_interior_radius(self) -> float:
        """The shrink/bandit radius r; defaults to half the set radius."""
        if self.interior_radius is not None:
            return self.interior_radius
        return 0.5 * self.radius

    def as_dict(self) -> dict:
        """Plain-scalar dict, stable key order, for digests and manifests."""
        return {
            "kind": self.kind,
            "n": self.n,
            "d": self.dim,
            "horizon": self.horizon,
            "radius": self.radius,
            "graph": {
                "p_edge": self.graph_p_edge,
                "seed": self.graph_seed,
                "edge_list": self.edge_list,
            },
            "failure": {
                "mode": self.failure_mode,
                "scenarios": [
                    {"label": s.label, "low": s.low, "high": s.high}
                    for s in self.scenarios
                ],
                "file": self.failure_file,
            },
            "solver": {
                "feedback": self.feedback,
                "a": self.step_scale,
                "delta_mode": self.delta_mode,
                "delta": self.delta,
                "beta": self.beta,
                "r": self.interior_radius,
            },
            "constants": dict(sorted(self.constants.items())),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }


def _get(parser, problems, section, key, convert, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            problems.append(f"[{section}] missing required key {key!r}")
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        if required:
            problems.append(f"[{section}] key {key!r} is empty")
        return default
    try:
        return convert(raw)
    except (TypeError, ValueError):
        problems.append(f"[{section}] key {key!r} has invalid value {raw!r}")
        return None


def _parse_seeds(raw: str) -> tuple[int, ...]:
    tokens = [t for chunk in raw.split(",") for t in chunk.split()]
    if not tokens:
        raise ValueError("empty seed list")
    return tuple(int(t) for t in tokens)


def parse_config(path) -> RunConfig:
    """Read and validate an experiment config.

    Raises ConfigError carrying the full list of violations; a parsed
    return value is safe to run without further checks (file paths are
    validated for existence here, content when actually read).
    """
    path = Path(path)
    problems: list[str] = []
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc

    for section in parser.sections():
        if section not in _SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in _SECTIONS[section]:
                problems.append(f"unknown key {key!r} in section [{section}]")
    for required_section in ("experiment", "run"):
        if not parser.has_section(required_section):
            problems.append(f"missing required section [{required_section}]")

    has_exp = parser.has_section("experiment")
    kind = _get(parser, problems, "experiment", "kind", str, required=has_exp) if has_exp else None
    n = _get(parser, problems, "experiment", "n", int, required=has_exp) if has_exp else None
    dim = _get(parser, problems, "experiment", "d", int, required=has_exp) if has_exp else None
    horizon = _get(parser, problems, "experiment", "horizon", int, required=has_exp) if has_exp else None
    radius = _get(parser, problems, "experiment", "radius", float) if has_exp else None

    if kind is not None and kind not in (QCQP_KIND, LOGISTIC_KIND):
        problems.append(
            f"[experiment] kind must be {QCQP_KIND!r} or {LOGISTIC_KIND!r}, got {kind!r}"
        )
    if n is not None and n < 2:
        problems.append(f"[experiment] n must be at least 2, got {n}")
    if dim is not None and dim < 1:
        problems.append(f"[experiment] d must be at least 1, got {dim}")
    if horizon is not None and horizon < 1:
        problems.append(f"[experiment] horizon must be at least 1, got {horizon}")
    if radius is None and dim is not None and kind is not None:
        # reference defaults: sqrt(d) for the quadratic preset, 1 for logistic
        radius = float(dim) ** 0.5 if kind == QCQP_KIND else 1.0
    if radius is not None and not radius > 0:
        problems.append(f"[experiment] radius must be positive, got {radius}")

    p_edge = _get(parser, problems, "graph", "p_edge", float) if parser.has_section("graph") else None
    graph_seed = _get(parser, problems, "graph", "seed", int) if parser.has_section("graph") else None
    edge_list = _get(parser, problems, "graph", "edge_list", str) if parser.has_section("graph") else None
    if not parser.has_section("graph"):
        problems.append("missing required section [graph]")
    else:
        if edge_list is not None and (p_edge is not None or graph_seed is not None):
            problems.append("[graph] give either edge_list or p_edge+seed, not both")
        elif edge_list is None:
            if p_edge is None:
                problems.append("[graph] needs p_edge (with seed) or edge_list")
            elif not 0.0 <= p_edge <= 1.0:
                problems.append(f"[graph] p_edge must be in [0, 1], got {p_edge}")
            if p_edge is not None and graph_seed is None:
                problems.append("[graph] p_edge requires seed")
        else:
            base = path.parent / edge_list
            if not base.exists():
                problems.append(f"[graph] edge_list file not found: {base}")
            edge_list = str(base)

    failure_mode = FAILURE_NONE
    scenarios: tuple[FailureScenario, ...] = (FailureScenario("perfect", 0.0, 0.0),)
    failure_file = None
    if parser.has_section("failure"):
        failure_mode = _get(parser, problems, "failure", "mode", str, default=FAILURE_NONE)
        if failure_mode not in (FAILURE_UNIFORM, FAILURE_FILE, FAILURE_NONE):
            problems.append(f"[failure] unknown mode {failure_mode!r}")
        elif failure_mode == FAILURE_UNIFORM:
            raw = _get(parser, problems, "failure", "scenarios", str, required=True)
            if raw is not None:
                tokens = [t for chunk in raw.split(",") for t in chunk.split()]
                parsed = []
                for token in tokens:
                    try:
                        scenario = _scenario_from_token(token)
                    except ValueError:
                        problems.append(f"[failure] bad scenario token {token!r}")
                        continue
                    if not 0.0 <= scenario.low <= scenario.high:
                        problems.append(
                            f"[failure] scenario {token!r} needs 0 <= low <= high"
                        )
                    elif scenario.high >= 1.0:
                        problems.append(
                            f"[failure] scenario {token!r}: probabilities must stay below 1"
                        )
                    else:
                        parsed.append(scenario)
                if not tokens:
                    problems.append("[failure] scenarios list is empty")
                labels = [s.label for s in parsed]
                if len(set(labels)) != len(labels):
                    problems.append("[failure] duplicate scenario labels")
                scenarios = tuple(parsed)
        elif failure_mode == FAILURE_FILE:
            failure_file = _get(parser, problems, "failure", "file", str, required=True)
            if failure_file is not None:
                base = path.parent / failure_file
                if not base.exists():
                    problems.append(f"[failure] probability file not found: {base}")
                failure_file = str(base)
                scenarios = (FailureScenario("file", 0.0, 0.0),)

    feedback = FULL_INFO
    step_scale = None
    delta_mode = DELTA_FIXED
    delta = 1.0
    beta = None
    interior = None
    if parser.has_section("solver"):
        feedback = _get(parser, problems, "solver", "feedback", str, default=FULL_INFO)
        if feedback not in (FULL_INFO, TWO_POINT):
            problems.append(
                f"[solver] feedback must be {FULL_INFO!r} or {TWO_POINT!r}, got {feedback!r}"
            )
        step_scale = _get(parser, problems, "solver", "a", float, required=True)
        if step_scale is not None and not step_scale > 0:
            problems.append(f"[solver] a must be positive, got {step_scale}")
        delta_mode = _get(parser, problems, "solver", "delta_mode", str, default=DELTA_FIXED)
        if delta_mode not in (DELTA_FIXED, DELTA_DERIVED):
            problems.append(f"[solver] delta_mode must be fixed or derived, got {delta_mode!r}")
        delta = _get(parser, problems, "solver", "delta", float, default=1.0)
        if delta is not None and delta_mode == DELTA_FIXED and not delta > 0:
            problems.append(f"[solver] delta must be positive, got {delta}")
        beta = _get(parser, problems, "solver", "beta", float)
        if beta is not None and not beta > 0:
            problems.append(f"[solver] beta must be positive, got {beta}")
        interior = _get(parser, problems, "solver", "r", float)
        if interior is not None and radius is not None and not 0 < interior < radius:
            problems.append(
                f"[solver] r must lie strictly between 0 and the set radius, got {interior}"
            )
    else:
        problems.append("missing required section [solver]")

    constants: dict[str, float] = {}
    if parser.has_section("constants"):
        for key in _SECTIONS["constants"]:
            value = _get(parser, problems, "constants", key, float)
            if value is not None:
                if not value > 0:
                    problems.append(f"[constants] {key} must be positive, got {value}")
                else:
                    constants[key] = value

    seeds: tuple[int, ...] = ()
    output_dir = "."
    if parser.has_section("run"):
        seeds = _get(parser, problems, "run", "seeds", _parse_seeds, required=True) or ()
        output_dir = _get(parser, problems, "run", "output_dir", str, default=".")
        if seeds and len(set(seeds)) != len(seeds):
            problems.append("[run] duplicate seeds")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        kind=kind,
        n=n,
        dim=dim,
        horizon=horizon,
        radius=radius,
        graph_p_edge=p_edge,
        graph_seed=graph_seed,
        edge_list=edge_list,
        failure_mode=failure_mode,
        scenarios=scenarios,
        failure_file=failure_file,
        feedback=feedback,
        step_scale=step_scale,
        delta_mode=delta_mode,
        delta=delta,
        beta=beta,
        interior_radius=interior,
        seeds=seeds,
        output_dir=output_dir,
        constants=constants,
    )


def config_from_dict(data: dict) -> RunConfig:
    """Rebuild a RunConfig from its ``as_dict`` form (manifest round trip)."""
    return RunConfig(
        kind=data["kind"],
        n=int(data["n"]),
        dim=int(data["d"]),
        horizon=int(data["horizon"]),
        radius=float(data["radius"]),
        graph_p_edge=data["graph"]["p_edge"],
        graph_seed=data["graph"]["seed"],
        edge_list=data["graph"]["edge_list"],
        failure_mode=data["failure"]["mode"],
        scenarios=tuple(
            FailureScenario(s["label"], float(s["low"]), float(s["high"]))
            for s in data["failure"]["scenarios"]
        ),
        failure_file=data["failure"]["file"],
        feedback=data["solver"]["feedback"],
        step_scale=float(data["solver"]["a"]),
        delta_mode=data["solver"]["delta_mode"],
        delta=float(data["solver"]["delta"]),
        beta=data["solver"]["beta"],
        interior_radius=data["solver"]["r"],
        seeds=tuple(int(s) for s in data["seeds"]),
        output_dir=data["output_dir"],
        constants={k: float(v) for k, v in data["constants"].items()},
    )


def config_digest(config: RunConfig) -> str:
    """sha256 over the canonical JSON form of the resolved config."""
    canonical = json.dumps(config.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_manifest_config(path) -> RunConfig:
    """Config embedded in a previously written run manifest."""
    with open(path) as fh:
        manifest = json.load(fh)
    if "config" not in manifest:
        raise ConfigError(["manifest has no embedded config"])
    return config_from_dict(manifest["config"])
