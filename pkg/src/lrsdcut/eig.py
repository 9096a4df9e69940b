"""Partial symmetric eigendecomposition of implicit operators.

The solver repeatedly needs the positive spectral part of a symmetric
operator that is only available through matrix-vector products.  ARPACK's
implicitly restarted Lanczos (``scipy.sparse.linalg.eigsh``) computes the
leading eigenpairs; this module wraps it with a seeded start vector,
adaptive subspace growth until the positive spectrum is provably captured,
and a dense fallback for operators too small for ARPACK.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh


@dataclass(frozen=True)
class SymmetricOperator:
    """A symmetric linear map given by its dimension and matvec closure."""

    n: int
    apply: Callable

    def matvec(self, d):
        return self.apply(np.asarray(d, dtype=np.float64).ravel())


@dataclass(frozen=True)
class PsdFactor:
    """Eigenpairs (vectors, values) of the positive spectral part.

    ``vectors`` has orthonormal columns, ``values`` is strictly positive
    and descending; the represented matrix is
    ``vectors @ diag(values) @ vectors.T``.  ``truncated`` marks factors
    whose positive spectrum may extend past the rank cap, in which case
    dual values derived from them are not certified lower bounds.
    Downstream code must depend only on the projector and the eigenvalue
    multiset, never on individual eigenvectors (clusters may rotate).
    """

    vectors: np.ndarray
    values: np.ndarray
    truncated: bool = False

    @property
    def rank(self):
        return self.values.size

    def frob_norm_sq(self):
        return float(np.sum(self.values ** 2))

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


class EigenConvergenceError(RuntimeError):
    """Eigensolver failed to converge; carries the best-effort factor."""

    def __init__(self, message, factor, residuals):
        super().__init__(message)
        self.factor = factor
        self.residuals = residuals


def psd_frob_norm_sq(factor):
    """Squared Frobenius norm of the represented PSD matrix, sum(values^2)."""
    return factor.frob_norm_sq()


def symmetry_defect(op, n_probes=8, seed=0):
    """max |d'(A e) - e'(A d)| / (|d||e|) over random probe pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        d = rng.standard_normal(op.n)
        e = rng.standard_normal(op.n)
        gap = abs(d @ op.apply(e) - e @ op.apply(d))
        worst = max(worst, gap / (np.linalg.norm(d) * np.linalg.norm(e)))
    return worst


def _dense_spectrum(op):
    mat = np.column_stack([op.apply(col) for col in np.eye(op.n)])
    mat = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(mat)
    return vals[::-1].copy(), vecs[:, ::-1].copy()  # descending


def leading_eigpairs(op, k, tol=1e-8, seed=0, restarts=50, v0=None):
    """Top-k algebraic eigenpairs of a symmetric operator, descending.

    Uses ARPACK with a seeded pseudo-random unit start vector (or the
    caller's ``v0``, e.g. a warm start from a nearby operator) and Krylov
    dimension 2k + 10; falls back to a dense eigendecomposition built from
    n matvecs when k >= n - 1 (ARPACK requires k < n).  Deterministic for
    fixed (op, seed, v0) in single-threaded mode.
    """
    n = op.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    if k >= n - 1:
        vals, vecs = _dense_spectrum(op)
        return vals[:k], vecs[:, :k]

    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(n)
    norm = np.linalg.norm(v0)
    v0 = v0 / norm if norm > 0 else np.full(n, n ** -0.5)
    scipy_op = LinearOperator((n, n), matvec=op.matvec, dtype=np.float64)
    ncv = min(n, 2 * k + 10)
    try:
        vals, vecs = eigsh(scipy_op, k=k, which="LA", v0=v0, ncv=ncv,
                           tol=tol, maxiter=restarts)
    except ArpackNoConvergence as exc:
        got = np.asarray(exc.eigenvalues, dtype=np.float64)
        got_vecs = np.asarray(exc.eigenvectors, dtype=np.float64)
        order = np.argsort(got)[::-1]
        vals, vecs = got[order], got_vecs[:, order]
        pos = vals > 0.0
        factor = PsdFactor(vecs[:, pos], vals[pos], truncated=True)
        residuals = np.array([np.linalg.norm(op.apply(vecs[:, i]) - vals[i] * vecs[:, i])
                              for i in range(vals.size)])
        raise EigenConvergenceError(
            f"eigensolver converged to only {vals.size} of {k} requested pairs "
            f"after {restarts} restarts", factor, residuals) from exc
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def leading_psd_part(op, max_rank, tol=1e-8, seed=0, k0=None, restarts=50,
                     v0=None):
    """All eigenpairs with eigenvalue above ``tol * max(|lambda|, 1)``, up
    to ``max_rank`` of them, as a :class:`PsdFactor`.

    The request size starts at ``k0`` (default min(10, max_rank)) and
    doubles until the smallest returned eigenvalue drops below the
    positivity threshold (proof that the whole positive spectrum is in
    hand) or the rank cap is reached, in which case the factor is marked
    truncated.
    """
    n = op.n
    if not 1 <= max_rank <= n:
        raise ValueError(f"need 1 <= max_rank <= {n}, got {max_rank}")
    cap = max_rank
    k = min(k0 if k0 is not None else min(10, cap), cap)
    while True:
        vals, vecs = leading_eigpairs(op, k, tol=tol, seed=seed,
                                      restarts=restarts, v0=v0)
        thresh = tol * max(np.abs(vals).max(initial=0.0), 1.0)
        full_spectrum = vals.size >= n  # dense fallback returned everything
        if vals[-1] <= thresh or full_spectrum:
            keep = vals > thresh
            return PsdFactor(vecs[:, keep][:, :cap], vals[keep][:cap],
                             truncated=bool(np.count_nonzero(keep) > cap))
        if k >= cap:
            return PsdFactor(vecs, vals, truncated=True)
        k = min(2 * k, cap)
