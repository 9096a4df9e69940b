"""SPSD kernels, Nystrom low-rank factors, and fast factored matrix-vector products.

Every kernel used by the solvers is represented through a tall factor
``phi`` with ``K ~= phi @ phi.T`` so that products ``K @ d`` cost
``O(N * R)`` instead of ``O(N^2)``.  Three factored forms are supported:

* plain low-rank:        ``K = phi @ phi.T``
* Hadamard pair:         ``K = (phi_p phi_p') o (phi_c phi_c')``
* centered inverse form: ``K = (Omega - phi phi') / (kappa N)`` with
  ``Omega = I - 11'/N`` (row/column sums of K are exactly zero)

An optional block partition restricts any kernel to be block-diagonal
(entries across blocks treated as zero), stored as an offset array
``[0, n_1, n_1+n_2, ..., N]``.
"""

import struct

import numpy as np
from scipy.spatial.distance import cdist

_MAGIC = b"LRKF"


class LowRankFactor:
    """Tall factor ``phi`` (N x R) representing the PSD matrix ``phi @ phi.T``."""

    __slots__ = ("phi",)

    def __init__(self, phi):
        phi = np.ascontiguousarray(np.atleast_2d(np.asarray(phi, dtype=np.float64)))
        if phi.ndim != 2:
            raise ValueError("factor must be a 2-D array")
        if not np.all(np.isfinite(phi)):
            raise ValueError("factor entries must be finite")
        self.phi = phi

    @property
    def n(self):
        return self.phi.shape[0]

    @property
    def rank(self):
        return self.phi.shape[1]

    def __repr__(self):
        return f"LowRankFactor(n={self.n}, rank={self.rank})"


def save_factor(path, factor):
    """Write a factor cache file: header {magic 'LRKF', u32 N, u32 R}, then
    N*R little-endian float64 values in row-major order."""
    phi = factor.phi
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, phi.shape[0], phi.shape[1]))
        fh.write(phi.astype("<f8", copy=False).tobytes(order="C"))


def load_factor(path):
    """Read a factor cache file written by :func:`save_factor`."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise ValueError(f"truncated factor file: {path}")
        magic, n, r = struct.unpack("<4sII", header)
        if magic != _MAGIC:
            raise ValueError(f"bad factor file magic {magic!r} in {path}")
        data = np.frombuffer(fh.read(8 * n * r), dtype="<f8")
        if data.size != n * r:
            raise ValueError(f"truncated factor payload in {path}")
    return LowRankFactor(data.reshape(n, r).astype(np.float64))


def _check_blocks(blocks, n):
    offsets = np.asarray(blocks, dtype=np.int64)
    if offsets.ndim != 1 or offsets.size < 2:
        raise ValueError("block offsets must be a 1-D array with >= 2 entries")
    if offsets[0] != 0 or offsets[-1] != n or np.any(np.diff(offsets) <= 0):
        raise ValueError(f"block offsets must increase from 0 to {n}")
    return offsets


def _as_feature_blocks(blocks):
    out = []
    n = None
    for b in blocks:
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if b.ndim != 2 or b.shape[1] < 1:
            raise ValueError("each feature block must be an N x D array with D >= 1")
        if not np.all(np.isfinite(b)):
            raise ValueError("feature entries must be finite")
        if n is None:
            n = b.shape[0]
        elif b.shape[0] != n:
            raise ValueError("feature blocks must share the same number of rows")
        out.append(b)
    if not out:
        raise ValueError("at least one feature block is required")
    return out


def gaussian_eval(fi_blocks, fj_blocks, thetas):
    """Evaluate exp(-sum_b |fi_b - fj_b|^2 / (2 theta_b^2)) for one pair.

    ``fi_blocks`` and ``fj_blocks`` are sequences of 1-D feature blocks
    aligned with the per-block bandwidths ``thetas``.  The value lies in
    (0, 1].
    """
    if len(fi_blocks) != len(fj_blocks) or len(fi_blocks) != len(thetas):
        raise ValueError("feature blocks and bandwidths must align")
    expo = 0.0
    for fi, fj, theta in zip(fi_blocks, fj_blocks, thetas):
        fi = np.asarray(fi, dtype=np.float64).ravel()
        fj = np.asarray(fj, dtype=np.float64).ravel()
        if fi.shape != fj.shape:
            raise ValueError("feature dimensions do not match")
        theta = float(theta)
        if theta <= 0.0:
            raise ValueError("bandwidths must be positive")
        diff = fi - fj
        expo += diff @ diff / (2.0 * theta * theta)
    return float(np.exp(-expo))


def select_landmarks(features, n_landmarks, n_iters=25, seed=0):
    """Pick landmark indices as the data points nearest to k-means centroids.

    Runs seeded k-means (k-means++ initialization, squared-Euclidean
    distance, at most ``n_iters`` Lloyd rounds) on the raw feature rows and
    returns the sorted indices of the distinct points closest to the final
    centroids.  Deterministic for a fixed seed.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = x.shape[0]
    if not 1 <= n_landmarks <= n:
        raise ValueError(f"need 1 <= n_landmarks <= {n}, got {n_landmarks}")
    if n_landmarks == n:
        return np.arange(n)

    rng = np.random.default_rng(seed)
    centers = np.empty((n_landmarks, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for k in range(1, n_landmarks):
        total = d2.sum()
        if total <= 0.0:
            centers[k] = x[rng.integers(n)]
        else:
            centers[k] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[k]) ** 2, axis=1))

    assign = np.full(n, -1)
    for _ in range(n_iters):
        new_assign = np.argmin(cdist(x, centers, "sqeuclidean"), axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(n_landmarks):
            members = x[assign == k]
            if members.shape[0]:
                centers[k] = members.mean(axis=0)

    # Nearest distinct data point per centroid.
    dist = cdist(centers, x, "sqeuclidean")
    chosen = []
    used = np.zeros(n, dtype=bool)
    for k in range(n_landmarks):
        order = np.argsort(dist[k], kind="stable")
        for idx in order:
            if not used[idx]:
                used[idx] = True
                chosen.append(idx)
                break
    return np.sort(np.asarray(chosen, dtype=np.int64))


def nystrom_factor(column_oracle, landmarks, rank, eig_floor=0.0):
    """Build a rank-<=``rank`` factor from sampled kernel columns.

    ``column_oracle(j)`` must return the j-th column of the SPSD kernel
    matrix.  With landmark set S, let C = K[:, S] and W = K[S, S]; the
    factor is ``phi = C @ G_R @ diag(s_R)^(-1/2)`` where (s_R, G_R) are the
    leading eigenpairs of W with eigenvalue above the floor
    ``max(eig_floor, 1e-10 * lambda_max(W))``.  The effective rank can be
    lower than requested when W has fewer eigenvalues above the floor.

    Raises ValueError when W is indefinite beyond that tolerance, which
    signals a non-PSD kernel input.
    """
    landmarks = np.asarray(landmarks, dtype=np.int64)
    if landmarks.ndim != 1 or landmarks.size == 0:
        raise ValueError("landmarks must be a non-empty index vector")
    if np.unique(landmarks).size != landmarks.size:
        raise ValueError("landmark indices must be distinct")
    if rank > landmarks.size:
        raise ValueError(f"rank {rank} exceeds number of landmarks {landmarks.size}")

    cols = np.column_stack([np.asarray(column_oracle(int(j)), dtype=np.float64)
                            for j in landmarks])
    w = cols[landmarks, :]
    w = 0.5 * (w + w.T)
    vals, vecs = np.linalg.eigh(w)
    floor = max(float(eig_floor), 1e-10 * max(vals[-1], 0.0))
    if vals[0] < -max(floor, 1e-10):
        raise ValueError(
            f"landmark kernel block is indefinite (min eigenvalue {vals[0]:.3e}); "
            "the kernel input is not positive semidefinite")
    keep = np.flatnonzero(vals > floor)[::-1][:rank]  # descending order
    phi = cols @ (vecs[:, keep] / np.sqrt(vals[keep]))
    return LowRankFactor(phi)


def lowrank_matvec(factor, d, blocks=None):
    """Return ``(phi phi') d`` in O(N R); block-diagonal when ``blocks`` given."""
    phi = factor.phi
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (phi.shape[0],):
        raise ValueError(f"vector length {d.shape} does not match factor n={phi.shape[0]}")
    if blocks is None:
        return phi @ (phi.T @ d)
    offsets = _check_blocks(blocks, phi.shape[0])
    out = np.empty_like(d)
    for a, b in zip(offsets[:-1], offsets[1:]):
        pb = phi[a:b]
        out[a:b] = pb @ (pb.T @ d[a:b])
    return out


def hadamard_matvec(factor_p, factor_c, d, blocks=None):
    """Return ``((phi_p phi_p') o (phi_c phi_c')) d`` in O(N R_p R_c).

    Uses the separated evaluation
    ``((phi_p (phi_p' (Diag(d) phi_c))) o phi_c) 1`` so neither kernel
    matrix is ever materialized.  With ``blocks``, the product is applied
    per block (cross-block entries are zero).
    """
    pp, pc = factor_p.phi, factor_c.phi
    if pp.shape[0] != pc.shape[0]:
        raise ValueError("factors must share the same number of rows")
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (pp.shape[0],):
        raise ValueError(f"vector length {d.shape} does not match n={pp.shape[0]}")
    if blocks is None:
        t = pp @ (pp.T @ (d[:, None] * pc))
        return np.sum(t * pc, axis=1)
    offsets = _check_blocks(blocks, pp.shape[0])
    out = np.empty_like(d)
    for a, b in zip(offsets[:-1], offsets[1:]):
        t = pp[a:b] @ (pp[a:b].T @ (d[a:b, None] * pc[a:b]))
        out[a:b] = np.sum(t * pc[a:b], axis=1)
    return out


def centered_discriminative_factor(phi_tilde, kappa):
    """Turn a factor of the raw kernel into the centered inverse form.

    Given ``K_raw ~= phi_tilde @ phi_tilde.T`` and ``kappa > 0``, the
    matrix ``Omega (kappa N I + K_raw)^(-1) Omega`` equals
    ``(Omega - phi phi') / (kappa N)`` with
    ``phi = Omega phi_tilde (kappa N I_R + phi_tilde' phi_tilde)^(-1/2)``
    (a symmetric R x R square root, so only small matrices are inverted).
    Returns ``(factor, scale)`` with ``scale = 1 / (kappa N)``; the factor
    satisfies ``phi' 1 = 0`` exactly up to roundoff.
    """
    kappa = float(kappa)
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    pt = phi_tilde.phi
    n = pt.shape[0]
    m = kappa * n * np.eye(pt.shape[1]) + pt.T @ pt
    vals, vecs = np.linalg.eigh(m)
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    centered = pt - pt.mean(axis=0, keepdims=True)
    return LowRankFactor(centered @ inv_sqrt), 1.0 / (kappa * n)


class LowRankKernel:
    """Weighted PSD kernel ``w * (phi phi')``, optionally block-diagonal."""

    def __init__(self, factor, weight=1.0, blocks=None):
        if weight < 0.0:
            raise ValueError("kernel weight must be non-negative")
        self.factor = factor
        self.weight = float(weight)
        self.blocks = None if blocks is None else _check_blocks(blocks, factor.n)

    @property
    def n(self):
        return self.factor.n

    def matvec(self, d):
        return self.weight * lowrank_matvec(self.factor, d, self.blocks)

    def diag(self):
        return self.weight * np.sum(self.factor.phi ** 2, axis=1)


class HadamardKernel:
    """Weighted elementwise product of two independently factored kernels.

    Keeping the two factors separate costs R_p + R_c memory instead of
    R_p * R_c, and lets one of them (e.g. a shared position kernel) be
    reused across instances.
    """

    def __init__(self, factor_p, factor_c, weight=1.0, blocks=None):
        if weight < 0.0:
            raise ValueError("kernel weight must be non-negative")
        if factor_p.n != factor_c.n:
            raise ValueError("factors must share the same number of rows")
        self.factor_p = factor_p
        self.factor_c = factor_c
        self.weight = float(weight)
        self.blocks = None if blocks is None else _check_blocks(blocks, factor_p.n)

    @property
    def n(self):
        return self.factor_p.n

    def matvec(self, d):
        return self.weight * hadamard_matvec(self.factor_p, self.factor_c, d,
                                             self.blocks)

    def diag(self):
        return self.weight * (np.sum(self.factor_p.phi ** 2, axis=1)
                              * np.sum(self.factor_c.phi ** 2, axis=1))


class CenteredDiscriminativeKernel:
    """Weighted centered inverse kernel ``w (Omega - phi phi') / (kappa N)``.

    Built from a factor of the raw similarity kernel; rows and columns sum
    to zero, so this kernel contributes nothing to constant vectors.
    Entries may be negative even though the matrix is PSD.
    """

    def __init__(self, phi_tilde, kappa, weight=1.0):
        if weight < 0.0:
            raise ValueError("kernel weight must be non-negative")
        self.factor, self.scale = centered_discriminative_factor(phi_tilde, kappa)
        self.kappa = float(kappa)
        self.weight = float(weight)

    @property
    def n(self):
        return self.factor.n

    def matvec(self, d):
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.n,):
            raise ValueError(f"vector length {d.shape} does not match n={self.n}")
        phi = self.factor.phi
        centered = d - d.mean()
        return self.weight * self.scale * (centered - phi @ (phi.T @ d))

    def diag(self):
        omega_diag = 1.0 - 1.0 / self.n
        return self.weight * self.scale * (omega_diag
                                           - np.sum(self.factor.phi ** 2, axis=1))


class GaussianKernel:
    """Diagonal-bandwidth Gaussian kernel over block-partitioned features.

    ``k(f_i, f_j) = exp(-sum_b |f_i^b - f_j^b|^2 / (2 theta_b^2))``.  This
    class only provides exact column evaluation (the Nystrom oracle) and
    :meth:`factorize`; it deliberately has no ``matvec`` so the O(N^2)
    dense product can never sneak into a solver.
    """

    def __init__(self, blocks, thetas, weight=1.0, mask_blocks=None):
        self.feature_blocks = _as_feature_blocks(blocks)
        self.thetas = [float(t) for t in thetas]
        if len(self.thetas) != len(self.feature_blocks):
            raise ValueError("one bandwidth per feature block is required")
        if any(t <= 0.0 for t in self.thetas):
            raise ValueError("bandwidths must be positive")
        if weight < 0.0:
            raise ValueError("kernel weight must be non-negative")
        self.weight = float(weight)
        self.n = self.feature_blocks[0].shape[0]
        self.mask_blocks = (None if mask_blocks is None
                            else _check_blocks(mask_blocks, self.n))

    def scaled_features(self):
        """Features divided by their bandwidths and concatenated, so that the
        kernel is the unit-bandwidth Gaussian of these rows."""
        return np.hstack([b / t for b, t in
                          zip(self.feature_blocks, self.thetas)])

    def column(self, j):
        """Exact (unmasked) kernel column j."""
        expo = np.zeros(self.n)
        for b, t in zip(self.feature_blocks, self.thetas):
            diff = b - b[j]
            expo += np.sum(diff * diff, axis=1) / (2.0 * t * t)
        return np.exp(-expo)

    def factorize(self, n_landmarks, rank, seed=0, kmeans_iters=25,
                  eig_floor=0.0):
        """Nystrom-factorize into a :class:`LowRankKernel`.

        Landmarks come from k-means on the raw concatenated feature rows;
        any block mask carries over to the factored kernel (the factor
        itself approximates the unmasked kernel).
        """
        feats = np.hstack(self.feature_blocks)
        landmarks = select_landmarks(feats, n_landmarks, kmeans_iters, seed)
        factor = nystrom_factor(self.column, landmarks, rank, eig_floor)
        return LowRankKernel(factor, self.weight, self.mask_blocks)
