"""Cyclic Jacobi eigendecomposition for small dense symmetric matrices.

The cost matrices here are tiny (d <= 16), so a plain cyclic Jacobi sweep
is plenty: quadratic convergence once the off-diagonal mass is small, no
workspace, and fully deterministic arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "jacobi_eigh",
    "jacobi_eigh_stack",
    "clamp_eigenvalues",
    "clamp_eigenvalues_stack",
    "off_diagonal_norm",
]


def off_diagonal_norm(a: np.ndarray) -> float:
    """Frobenius norm of the strict off-diagonal part."""
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(
    a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate every upper-triangular entry to zero in turn until the
    off-diagonal Frobenius norm drops below ``tol``.

    Args:
        a: symmetric (d, d) matrix.
        tol: off-diagonal norm at which to stop.
        max_sweeps: safety cap on full sweeps.

    Returns:
        (w, v): eigenvalues ascending and the matching orthonormal
        eigenvector columns, so ``a ~= v @ diag(w) @ v.T``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-9, rtol=0.0):
        raise ValueError("matrix is not symmetric")
    d = a.shape[0]
    m = 0.5 * (a + a.T)
    v = np.eye(d)
    if d == 1:
        return np.array([m[0, 0]]), v

    for _ in range(max_sweeps):
        if off_diagonal_norm(m) <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                # rotation angle that annihilates m[p, q]
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * m[:, p] - s * m[:, q]
                rot_q = s * m[:, p] + c * m[:, q]
                m[:, p], m[:, q] = rot_p, rot_q
                rot_p = c * m[p, :] - s * m[q, :]
                rot_q = s * m[p, :] + c * m[q, :]
                m[p, :], m[q, :] = rot_p, rot_q
                m[p, q] = 0.0
                m[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    else:
        raise RuntimeError(
            f"Jacobi failed to reach tol={tol} in {max_sweeps} sweeps "
            f"(off-diagonal norm {off_diagonal_norm(m):.3e})"
        )

    w = np.diag(m).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def jacobi_eigh_stack(
    mats: np.ndarray, tol: float = 1e-10, max_sweeps: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobi eigendecomposition of a whole stack of symmetric matrices.

    Same rotation schedule as :func:`jacobi_eigh`, applied to every
    matrix of the stack at once; matrices whose off-diagonal norm has
    already dropped below ``tol`` sit out the remaining sweeps.  Returns
    (w, v) with shapes (k, d) and (k, d, d), eigenvalues ascending.
    """
    m = np.array(mats, dtype=float)
    if m.ndim != 3 or m.shape[1] != m.shape[2]:
        raise ValueError(f"need a (k, d, d) stack, got shape {m.shape}")
    if not np.allclose(m, m.transpose(0, 2, 1), atol=1e-9, rtol=0.0):
        raise ValueError("stack contains an asymmetric matrix")
    k, d = m.shape[0], m.shape[1]
    m = 0.5 * (m + m.transpose(0, 2, 1))
    v = np.broadcast_to(np.eye(d), (k, d, d)).copy()
    if d == 1 or k == 0:
        return m[:, 0, 0].reshape(k, d).copy() if d == 1 else np.empty((0, d)), v

    off = m - np.einsum("kij,ij->kij", m, np.eye(d))
    active = np.sqrt(np.einsum("kij,kij->k", off, off)) > tol
    for _ in range(max_sweeps):
        if not active.any():
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = m[:, p, q]
                use = active & (apq != 0.0)
                if not use.any():
                    continue
                safe = np.where(use, apq, 1.0)
                theta = (m[:, q, q] - m[:, p, p]) / (2.0 * safe)
                t = np.copysign(1.0, theta) / (
                    np.abs(theta) + np.sqrt(theta * theta + 1.0)
                )
                c = np.where(use, 1.0 / np.sqrt(t * t + 1.0), 1.0)
                s = np.where(use, t * c, 0.0)
                cc, ss = c[:, None], s[:, None]
                col_p, col_q = m[:, :, p].copy(), m[:, :, q].copy()
                m[:, :, p] = cc * col_p - ss * col_q
                m[:, :, q] = ss * col_p + cc * col_q
                row_p, row_q = m[:, p, :].copy(), m[:, q, :].copy()
                m[:, p, :] = cc * row_p - ss * row_q
                m[:, q, :] = ss * row_p + cc * row_q
                m[use, p, q] = 0.0
                m[use, q, p] = 0.0
                vec_p, vec_q = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = cc * vec_p - ss * vec_q
                v[:, :, q] = ss * vec_p + cc * vec_q
        off = m - np.einsum("kij,ij->kij", m, np.eye(d))
        active = np.sqrt(np.einsum("kij,kij->k", off, off)) > tol
    else:
        if active.any():
            raise RuntimeError(
                f"Jacobi failed to reach tol={tol} in {max_sweeps} sweeps "
                f"for {int(active.sum())} of {k} matrices"
            )

    w = np.einsum("kii->ki", m).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w, v


def _inband_tolerance(lo: float, hi: float) -> float:
    # eigenvalues are only certified to the Jacobi convergence level, so a
    # spectrum this close to the band counts as inside; without the slack
    # a matrix clamped exactly onto a bound would be rebuilt every call
    # from its own rounding noise instead of passing through unchanged
    return 1e-9 * max(1.0, abs(lo), abs(hi))


def clamp_eigenvalues(a: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Project the eigenvalues of a symmetric matrix onto [lo, hi].

    Returns the input array untouched when every eigenvalue already lies
    in range (to the solver's precision), so an unperturbed matrix passes
    through bit-identically and the clamp is idempotent.
    """
    if lo > hi:
        raise ValueError(f"empty clamp range [{lo}, {hi}]")
    w, v = jacobi_eigh(a)
    wc = np.clip(w, lo, hi)
    if np.abs(wc - w).max(initial=0.0) <= _inband_tolerance(lo, hi):
        return a
    out = (v * wc) @ v.T
    return 0.5 * (out + out.T)


def clamp_eigenvalues_stack(mats: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Eigenvalue clamp of :func:`clamp_eigenvalues`, over a stack.

    Matrices already within range come back bit-identical; the rest are
    rebuilt from their clipped spectra and re-symmetrized.
    """
    if lo > hi:
        raise ValueError(f"empty clamp range [{lo}, {hi}]")
    w, v = jacobi_eigh_stack(mats)
    wc = np.clip(w, lo, hi)
    changed = np.abs(wc - w).max(axis=1) > _inband_tolerance(lo, hi)
    out = np.array(mats, dtype=float)
    if changed.any():
        recon = (v[changed] * wc[changed, None, :]) @ v[changed].transpose(0, 2, 1)
        out[changed] = 0.5 * (recon + recon.transpose(0, 2, 1))
    return out
