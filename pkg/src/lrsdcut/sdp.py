"""Low-rank dual quasi-Newton solver for the SDP relaxation of MAP inference.

The lifted binary program is relaxed to a penalized SDP whose Lagrangian
dual eliminates the matrix variable:

    d_gamma(u) = -(gamma/2) ||(C(u))_+||_F^2 - u'b - eta^2 / (2 gamma),
    C(u) = -A - sum_i u_i B_i,

so one dual evaluation only needs the positive eigenpairs of C(u), which a
matrix-free Lanczos solver obtains from structured O(N) matvecs.  The
solver ascends the dual with limited-memory BFGS, rounds the implicit
primal matrix ``Y = gamma (C(u))_+`` to a feasible labeling at every
iteration, keeps the best, and stops early once the relative dual
improvement falls below a threshold.  Any untruncated dual value is a
certified lower bound on the optimal lifted energy.

Two liftings are supported: the compact (N+L)-dimensional one for Potts
compatibility and the (N*L)-dimensional one for a general symmetric label
compatibility matrix (the latter is experimental).
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .crf import energy_offset, lifted_energy, lifted_energy_general, to_indicator
from .eig import (EigenConvergenceError, SymmetricOperator, leading_eigpairs,
                  leading_psd_part)


def _ltri(values, size, rows, cols):
    """Symmetric zero-diagonal matrix with lower triangle filled from a vector."""
    m = np.zeros((size, size))
    m[rows, cols] = values
    return m + m.T


class PottsSdp:
    """Penalized SDP data for the compact Potts lifting.

    The matrix variable has dimension n = N + L and represents
    ``[I_L; X] [I_L; X]'``.  Constraints pin the label block to the
    identity (diagonal ones, symmetrized off-diagonals zero), couple each
    variable row to the label block with row-sum one, and fix the variable
    diagonal to one; q = 2N + L(L+1)/2 in total, and the constraints force
    trace(Y) = eta = N + L.  Dual variables are packed as
    ``u = [u1 (L); u2 (L(L-1)/2, lower-triangle order); u3 (N); u4 (N)]``.
    """

    def __init__(self, problem, gamma=1000.0):
        if not problem.is_potts:
            raise ValueError("PottsSdp requires a Potts problem")
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        self.problem = problem
        self.gamma = float(gamma)
        n_vars, n_labels = problem.n_vars, problem.n_labels
        self.n_vars = n_vars
        self.n_labels = n_labels
        self.n = n_vars + n_labels
        self.eta = float(n_vars + n_labels)
        self.tril_rows, self.tril_cols = np.tril_indices(n_labels, -1)
        n_pairs = self.tril_rows.size
        self.q = 2 * n_vars + n_labels + n_pairs
        self.b = np.concatenate([np.ones(n_labels), np.zeros(n_pairs),
                                 np.ones(n_vars), np.ones(n_vars)])
        self.nu = 0.0  # spectral shift applied to A, set by spectral_shift_init

    def split_u(self, u):
        L, N = self.n_labels, self.n_vars
        p = self.tril_rows.size
        return (u[:L], u[L:L + p], u[L + p:L + p + N], u[L + p + N:])

    def a_matvec(self, d, shifted=True):
        """Product with A = [[0, H']; [H, -K]] / 2 (minus nu*I when shifted)."""
        L = self.n_labels
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {d.shape}")
        d1, d2 = d[:L], d[L:]
        h = self.problem.unary
        out = np.concatenate([0.5 * (h.T @ d2),
                              0.5 * (h @ d1 - self.problem.kernel_matvec(d2))])
        if shifted and self.nu != 0.0:
            out -= self.nu * d
        return out

    def constraint_matvec(self, u, d):
        """Product with sum_i u_i B_i exploiting the block structure."""
        L = self.n_labels
        d1, d2 = d[:L], d[L:]
        u1, u2, u3, u4 = self.split_u(u)
        ltri = _ltri(u2, L, self.tril_rows, self.tril_cols)
        top = u1 * d1 + 0.5 * (ltri @ d1) + 0.5 * (u3 @ d2) * np.ones(L)
        bottom = 0.5 * np.sum(d1) * u3 + u4 * d2
        return np.concatenate([top, bottom])

    def c_matvec(self, u, d):
        """C(u) d = -(A - nu I) d - (sum_i u_i B_i) d in O(NL + N R_K)."""
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {d.shape}")
        return -self.a_matvec(d) - self.constraint_matvec(u, d)

    def operator(self, u):
        u = np.asarray(u, dtype=np.float64)
        return SymmetricOperator(self.n, lambda d: self.c_matvec(u, d))

    def dual_objective(self, u, psd):
        """Dual value at u given the positive part of C(u) for that exact u.

        The spectral shift moves every feasible objective by -nu*eta, so
        nu*eta is added back here; the returned value is a lower bound on
        the optimal lifted energy whenever the factor is untruncated (the
        ``truncated`` flag on the factor marks the exceptions).
        """
        raw = (-0.5 * self.gamma * psd.frob_norm_sq() - u @ self.b
               - self.eta ** 2 / (2.0 * self.gamma))
        return raw + self.nu * self.eta

    def dual_gradient(self, u, psd):
        """Gradient entries gamma <(C(u))_+, B_i> - b_i from the factor.

        Inner products against the structured constraint matrices read off
        weighted row norms and small bilinear forms of the eigenvector
        blocks; the projection is never materialized.
        """
        L = self.n_labels
        lam = psd.values
        if lam.size == 0:
            return -self.b.copy()
        g_lab = psd.vectors[:L]
        g_var = psd.vectors[L:]
        inner_u1 = (g_lab ** 2) @ lam
        label_gram = (g_lab * lam) @ g_lab.T
        inner_u2 = label_gram[self.tril_rows, self.tril_cols]
        col_sums = g_lab.sum(axis=0)
        inner_u3 = g_var @ (lam * col_sums)
        inner_u4 = (g_var ** 2) @ lam
        inner = np.concatenate([inner_u1, inner_u2, inner_u3, inner_u4])
        return self.gamma * inner - self.b

    def primal_objective(self, psd):
        """<Y, A> for Y = gamma (C(u))_+ against the *unshifted* A."""
        total = 0.0
        for r in range(psd.rank):
            v = psd.vectors[:, r]
            total += psd.values[r] * (v @ self.a_matvec(v, shifted=False))
        return self.gamma * total

    def constraint_values(self, psd):
        """<Y, B_i> for Y = gamma (C(u))_+, ordered like the dual vector."""
        return self.dual_gradient(np.zeros(self.q), psd) + self.b

    def rounding_rows(self, psd):
        """Rows of the implicit square root corresponding to variables."""
        return psd.vectors[self.n_labels:]

    def rounded_energy(self, labels):
        return lifted_energy(self.problem, to_indicator(labels, self.n_labels))


class GeneralSdp:
    """Penalized SDP data for the general label-compatibility lifting.

    The matrix variable has dimension n = N*L and represents ``y y'`` for
    the one-hot vectorization y.  Per-variable constraints fix the
    diagonal block trace to one and zero its symmetrized off-diagonals;
    q = N + N L(L-1)/2 and trace(Y) = eta = N.  Dual variables are packed
    as ``u = [u1 (N); u2 (N blocks of L(L-1)/2)]``.
    """

    def __init__(self, problem, gamma=1000.0):
        if problem.is_potts:
            raise ValueError("GeneralSdp requires an explicit compatibility matrix")
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        self.problem = problem
        self.gamma = float(gamma)
        n_vars, n_labels = problem.n_vars, problem.n_labels
        self.n_vars = n_vars
        self.n_labels = n_labels
        self.n = n_vars * n_labels
        self.eta = float(n_vars)
        self.tril_rows, self.tril_cols = np.tril_indices(n_labels, -1)
        self.n_pairs = self.tril_rows.size
        self.q = n_vars + n_vars * self.n_pairs
        self.b = np.concatenate([np.ones(n_vars),
                                 np.zeros(n_vars * self.n_pairs)])
        self.u_mat = problem.mu - 1.0
        self.h = problem.unary.reshape(-1)
        self.nu = 0.0

    def split_u(self, u):
        n_vars = self.n_vars
        return u[:n_vars], u[n_vars:].reshape(n_vars, self.n_pairs)

    def a_matvec(self, d, shifted=True):
        """Product with A = Diag(h) + (Kronecker-structured pairwise)/2.

        The pairwise part applies K to the N x L unfolding of d per label
        column and multiplies by U = mu - 11' on the right, costing
        O(N L R_K + N L^2) without forming the Kronecker product.
        """
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {d.shape}")
        unfolded = d.reshape(self.n_vars, self.n_labels)
        kd = np.column_stack([self.problem.kernel_matvec(unfolded[:, l])
                              for l in range(self.n_labels)])
        out = self.h * d + 0.5 * (kd @ self.u_mat).reshape(-1)
        if shifted and self.nu != 0.0:
            out -= self.nu * d
        return out

    def constraint_matvec(self, u, d):
        u1, u2 = self.split_u(u)
        unfolded = d.reshape(self.n_vars, self.n_labels)
        out = unfolded * u1[:, None]
        tri = np.zeros_like(unfolded)
        for k in range(self.n_pairs):
            a, c = self.tril_rows[k], self.tril_cols[k]
            tri[:, a] += u2[:, k] * unfolded[:, c]
            tri[:, c] += u2[:, k] * unfolded[:, a]
        return (out + 0.5 * tri).reshape(-1)

    def c_matvec(self, u, d):
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {d.shape}")
        return -self.a_matvec(d) - self.constraint_matvec(u, d)

    def operator(self, u):
        u = np.asarray(u, dtype=np.float64)
        return SymmetricOperator(self.n, lambda d: self.c_matvec(u, d))

    def dual_objective(self, u, psd):
        raw = (-0.5 * self.gamma * psd.frob_norm_sq() - u @ self.b
               - self.eta ** 2 / (2.0 * self.gamma))
        return raw + self.nu * self.eta

    def dual_gradient(self, u, psd):
        lam = psd.values
        if lam.size == 0:
            return -self.b.copy()
        g = psd.vectors.reshape(self.n_vars, self.n_labels, lam.size)
        inner_u1 = np.einsum("ilr,r->i", g ** 2, lam)
        block_gram = np.einsum("ilr,r,imr->ilm", g, lam, g)
        inner_u2 = block_gram[:, self.tril_rows, self.tril_cols].reshape(-1)
        inner = np.concatenate([inner_u1, inner_u2])
        return self.gamma * inner - self.b

    def primal_objective(self, psd):
        total = 0.0
        for r in range(psd.rank):
            v = psd.vectors[:, r]
            total += psd.values[r] * (v @ self.a_matvec(v, shifted=False))
        return self.gamma * total

    def constraint_values(self, psd):
        return self.dual_gradient(np.zeros(self.q), psd) + self.b

    def rounding_rows(self, psd):
        return psd.vectors

    def rounded_energy(self, labels):
        x = to_indicator(labels, self.n_labels)
        return lifted_energy_general(self.problem, x.reshape(-1))


def make_sdp(problem, gamma=1000.0):
    """The SDP lifting matching the problem's compatibility function."""
    return PottsSdp(problem, gamma) if problem.is_potts else GeneralSdp(problem, gamma)


def spectral_shift_init(sdp, r, tol=1e-8, seed=0):
    """Shift A by its r-th smallest eigenvalue so rank((C(0))_+) <= r.

    At u = 0 the operator is C(0) = -A + nu I, whose positive eigenvalues
    correspond to eigenvalues of A strictly below nu; choosing nu as the
    r-th smallest eigenvalue of A (computed by Lanczos on -A) caps the
    initial positive rank at r (exactly r - 1 for a simple spectrum).  The
    shift does not change the optimizer because the constraints fix
    trace(Y); it is stored on the problem and undone in reported values.
    """
    if not 1 <= r <= sdp.n:
        raise ValueError(f"need 1 <= r <= {sdp.n}, got {r}")
    sdp.nu = 0.0
    neg_a = SymmetricOperator(sdp.n, lambda d: -sdp.a_matvec(d, shifted=False))
    vals, _ = leading_eigpairs(neg_a, r, tol=tol, seed=seed)
    sdp.nu = float(-vals[r - 1])
    return sdp.nu


@dataclass
class AscentStep:
    """Outcome of one quasi-Newton step (u unchanged when stalled)."""

    u: np.ndarray
    value: float
    grad: np.ndarray
    payload: object
    converged: bool
    stalled: bool
    n_evals: int


class LbfgsAscent:
    """Limited-memory BFGS ascent with backtracking line search.

    Maximizes a concave objective through the equivalent minimization of
    its negation.  Each :meth:`step` builds a direction from the two-loop
    recursion over at most ``memory`` curvature pairs (pairs with
    ``s'y <= 1e-12`` are skipped), then backtracks from a unit step,
    halving until the sufficient-increase condition with constant 1e-4
    holds.  Thirty failed halvings mark the step stalled and leave the
    iterate unchanged; a gradient below ``step_tol`` marks convergence.
    """

    def __init__(self, obj_grad, u0, memory=10, step_tol=1e-10,
                 armijo=1e-4, max_halvings=30):
        if memory < 1:
            raise ValueError("memory must be >= 1")
        self._eval = obj_grad
        self.memory = int(memory)
        self.step_tol = float(step_tol)
        self.armijo = float(armijo)
        self.max_halvings = int(max_halvings)
        self._s = []
        self._y = []
        self.u = np.asarray(u0, dtype=np.float64).copy()
        self.value, self.grad, self.payload = obj_grad(self.u)
        self.n_evals = 1

    def _direction(self, g_min):
        """Two-loop recursion for the minimization gradient ``g_min``."""
        if not self._s:
            return -g_min / max(np.linalg.norm(g_min), 1.0)
        q = g_min.copy()
        alphas = []
        rhos = [1.0 / (y @ s) for s, y in zip(self._s, self._y)]
        for s, y, rho in zip(reversed(self._s), reversed(self._y),
                             reversed(rhos)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        s_last, y_last = self._s[-1], self._y[-1]
        q *= (s_last @ y_last) / (y_last @ y_last)
        for (s, y, rho), a in zip(zip(self._s, self._y, rhos),
                                  reversed(alphas)):
            beta = rho * (y @ q)
            q += (a - beta) * s
        return -q

    def step(self):
        g_min = -self.grad
        if np.linalg.norm(g_min, np.inf) <= self.step_tol:
            return AscentStep(self.u, self.value, self.grad, self.payload,
                              converged=True, stalled=False, n_evals=0)
        direction = self._direction(g_min)
        slope = g_min @ direction
        if slope >= 0.0:  # stale curvature produced a non-descent direction
            self._s.clear()
            self._y.clear()
            direction = -g_min / max(np.linalg.norm(g_min), 1.0)
            slope = g_min @ direction

        f0 = -self.value
        rho = 1.0
        n_evals = 0
        for _ in range(self.max_halvings + 1):
            u_try = self.u + rho * direction
            value, grad, payload = self._eval(u_try)
            n_evals += 1
            if -value <= f0 + self.armijo * rho * slope:
                s = u_try - self.u
                y = self.grad - grad  # gradient of -d increases by this
                if s @ y > 1e-12:
                    self._s.append(s)
                    self._y.append(y)
                    if len(self._s) > self.memory:
                        self._s.pop(0)
                        self._y.pop(0)
                self.u, self.value, self.grad, self.payload = (
                    u_try, value, grad, payload)
                self.n_evals += n_evals
                return AscentStep(self.u, self.value, self.grad, self.payload,
                                  converged=False, stalled=False,
                                  n_evals=n_evals)
            rho *= 0.5
        self.n_evals += n_evals
        return AscentStep(self.u, self.value, self.grad, self.payload,
                          converged=False, stalled=True, n_evals=n_evals)


def round_solution(psd, sdp, seed=0, n_samples=20):
    """Draw feasible labelings from the implicit primal matrix, keep the best.

    ``Y = gamma (C(u))_+`` factors as ``Psi Psi'`` with
    ``Psi = vectors * sqrt(gamma * values)``.  Each sample projects the
    variable rows of Psi onto Gaussian directions and discretizes by row
    argmax (ties fall to the smallest label); the sample with the lowest
    lifted energy wins.  Returns ``(labels, lifted_energy)``.
    """
    n_vars, n_labels = sdp.n_vars, sdp.n_labels
    if psd.rank == 0:
        labels = np.zeros(n_vars, dtype=np.int64)
        return labels, sdp.rounded_energy(labels)
    psi = sdp.rounding_rows(psd) * np.sqrt(sdp.gamma * psd.values)
    rng = np.random.default_rng(seed)
    best_labels = None
    best_energy = np.inf
    for _ in range(max(1, int(n_samples))):
        if isinstance(sdp, PottsSdp):
            scores = psi @ rng.standard_normal((psd.rank, n_labels))
        else:
            scores = (psi @ rng.standard_normal(psd.rank)).reshape(n_vars,
                                                                   n_labels)
        labels = np.argmax(scores, axis=1)
        value = sdp.rounded_energy(labels)
        if value < best_energy:
            best_energy = value
            best_labels = labels
    return best_labels, best_energy


@dataclass
class SolveParams:
    """Solver parameters; the defaults follow the reference configuration
    (gamma = 1000, at most 10 ascent iterations, initial rank 20)."""

    gamma: float = 1000.0
    k_max: int = 10
    rank_init: int = 20
    tau: float = 1e-5
    memory: int = 10
    n_samples: int = 20
    seed: int = 0
    eig_tol: float = 1e-8
    lanczos_restarts: int = 50


@dataclass
class IterationRecord:
    iteration: int
    dual: float
    rounded_energy: float
    rank: int
    truncated: bool
    ms: float

    def to_dict(self):
        return {"iter": self.iteration, "dual": self.dual,
                "rounded_energy": self.rounded_energy, "rank": self.rank,
                "truncated": self.truncated, "ms": self.ms}


@dataclass
class SolveReport:
    """Result of a solve.

    Energies and dual values include the constant pairwise offset
    ``0.5 * 1'K1`` (and undo the spectral shift), so ``best_energy``,
    ``lower_bound`` and every trajectory entry are directly comparable to
    full CRF energies of labelings and across methods.  ``lower_bound`` is
    the best dual value among iterations whose eigenfactor was not
    truncated; it is None when every iteration was truncated.
    """

    method: str
    best_energy: float
    lower_bound: float | None
    labels: np.ndarray
    trajectory: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "best_energy": self.best_energy,
            "lower_bound": self.lower_bound,
            "labels": np.asarray(self.labels).tolist(),
            "trajectory": [rec.to_dict() if isinstance(rec, IterationRecord)
                           else rec for rec in self.trajectory],
            "warnings": list(self.warnings),
            **self.extras,
        }


def lr_sdcut_solve(problem, params=None, **overrides):
    """Run the full low-rank dual ascent (initial shift, per-iteration
    quasi-Newton step + rounding + best-keeping, relative-improvement exit).

    All randomness (Lanczos start vectors, rounding projections) derives
    from ``params.seed`` through a splittable seed sequence, so results
    reproduce regardless of internal threading.  Eigensolver and line
    search stalls surface in ``report.warnings``, never silently.
    """
    params = replace(params or SolveParams(), **overrides)
    if params.k_max < 1:
        raise ValueError("k_max must be >= 1")
    sdp = make_sdp(problem, params.gamma)
    warnings = []
    if not problem.is_potts:
        warnings.append("general label-compatibility path is experimental")

    seed_seq = np.random.SeedSequence(params.seed)
    shift_ss, eig_ss, round_ss = seed_seq.spawn(3)
    eig_seed_rng = np.random.default_rng(eig_ss)
    round_seed_rng = np.random.default_rng(round_ss)

    def next_seed(rng):
        return int(rng.integers(0, 2 ** 63 - 1))

    offset = energy_offset(problem)
    rank_init = min(params.rank_init, sdp.n)
    spectral_shift_init(sdp, rank_init, tol=params.eig_tol,
                        seed=next_seed(np.random.default_rng(shift_ss)))
    rank_cap = min(sdp.n, 8 * rank_init)
    # warm state across dual evaluations: consecutive C(u) are close, so the
    # previous positive part both sizes the next request and starts Lanczos
    warm = {"k0": min(rank_init + 10, rank_cap), "v0": None}

    def obj_grad(u):
        op = sdp.operator(u)
        try:
            factor = leading_psd_part(op, rank_cap, tol=params.eig_tol,
                                      seed=next_seed(eig_seed_rng),
                                      k0=warm["k0"], v0=warm["v0"],
                                      restarts=params.lanczos_restarts)
        except EigenConvergenceError as exc:
            warnings.append(f"eigensolver stall: {exc}")
            factor = exc.factor
        if factor.rank:
            warm["k0"] = int(np.clip(factor.rank + 6, 10, rank_cap))
            warm["v0"] = factor.vectors @ factor.values
        return sdp.dual_objective(u, factor), sdp.dual_gradient(u, factor), factor

    trajectory = []
    best_labels = None
    best_lifted = np.inf

    def record(iteration, value, factor, started):
        nonlocal best_labels, best_lifted
        labels, lifted = round_solution(factor, sdp,
                                        seed=next_seed(round_seed_rng),
                                        n_samples=params.n_samples)
        if lifted < best_lifted:
            best_lifted = lifted
            best_labels = labels
        trajectory.append(IterationRecord(
            iteration=iteration, dual=value + offset,
            rounded_energy=lifted + offset, rank=factor.rank,
            truncated=factor.truncated,
            ms=1e3 * (time.perf_counter() - started)))

    started = time.perf_counter()
    optimizer = LbfgsAscent(obj_grad, np.zeros(sdp.q), memory=params.memory)
    record(0, optimizer.value, optimizer.payload, started)
    previous = optimizer.value
    for k in range(1, params.k_max + 1):
        started = time.perf_counter()
        step = optimizer.step()
        if step.converged:
            break
        if step.stalled:
            warnings.append(f"line search stalled at iteration {k}")
            break
        record(k, step.value, step.payload, started)
        improvement = ((step.value - previous)
                       / max(abs(step.value), abs(previous), 1.0))
        previous = step.value
        if improvement <= params.tau:
            break

    untruncated = [rec.dual for rec in trajectory if not rec.truncated]
    if not untruncated:
        warnings.append("all iterations truncated; no certified lower bound")
    return SolveReport(
        method="lrsdcut",
        best_energy=best_lifted + offset,
        lower_bound=max(untruncated) if untruncated else None,
        labels=best_labels,
        trajectory=trajectory,
        warnings=warnings,
        extras={"gamma": params.gamma, "nu": sdp.nu, "offset": offset,
                "dual_evals": optimizer.n_evals},
    )
