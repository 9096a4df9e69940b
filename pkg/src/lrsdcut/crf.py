"""Problem definition, energy evaluation, and indicator liftings.

A labeling ``x`` (length-N integer vector with entries in 0..L-1), its
one-hot indicator matrix ``X`` (N x L), and the row-major vectorization
``y`` (length N*L, ``y[i*L + l] = X[i, l]``) describe the same assignment.
Energies are always evaluated on the factored (approximated) kernels, so
solver bounds and reported energies refer to one consistent objective.
"""

import hashlib
import json
import os

import numpy as np

from .kernels import (CenteredDiscriminativeKernel, GaussianKernel,
                      LowRankKernel, load_factor)


class InstanceFormatError(ValueError):
    """Raised when an instance file violates the JSON schema."""


class CrfProblem:
    """Fully-connected pairwise CRF with unary matrix H and a kernel stack.

    ``mu=None`` selects the Potts compatibility (penalty 1 for any pair of
    distinct labels); otherwise ``mu`` is a symmetric L x L matrix with
    zero diagonal and entries in [0, 1].  Kernel weights are folded into
    the kernel objects; the combined pairwise kernel is their sum.
    Instances are immutable after construction and all evaluations are
    pure functions.
    """

    def __init__(self, unary, kernels, mu=None):
        unary = np.asarray(unary, dtype=np.float64)
        if unary.ndim != 2 or unary.shape[1] < 2:
            raise ValueError("unary must be an N x L matrix with L >= 2")
        if not np.all(np.isfinite(unary)):
            raise ValueError("unary entries must be finite")
        self.unary = unary
        self.kernels = list(kernels)
        for k in self.kernels:
            if not callable(getattr(k, "matvec", None)):
                raise TypeError(
                    f"kernel {type(k).__name__} has no matvec; factorize gaussian "
                    "kernels before building a problem")
            if k.n != unary.shape[0]:
                raise ValueError("kernel size does not match number of variables")
        if mu is None:
            self.mu = None
        else:
            mu = np.asarray(mu, dtype=np.float64)
            L = unary.shape[1]
            if mu.shape != (L, L):
                raise ValueError(f"mu must be {L} x {L}")
            if not np.allclose(mu, mu.T):
                raise ValueError("mu must be symmetric")
            if np.any(np.diag(mu) != 0.0):
                raise ValueError("mu must have a zero diagonal")
            if np.any(mu < 0.0) or np.any(mu > 1.0):
                raise ValueError("mu entries must lie in [0, 1]")
            self.mu = mu

    @property
    def n_vars(self):
        return self.unary.shape[0]

    @property
    def n_labels(self):
        return self.unary.shape[1]

    @property
    def is_potts(self):
        return self.mu is None

    def mu_matrix(self):
        """The compatibility matrix (the Potts matrix 11' - I when mu is None)."""
        if self.mu is not None:
            return self.mu
        L = self.n_labels
        return np.ones((L, L)) - np.eye(L)

    def kernel_matvec(self, d):
        """Combined weighted kernel product ``K d`` in O(N R)."""
        out = np.zeros(self.n_vars)
        for k in self.kernels:
            out += k.matvec(d)
        return out

    def kernel_diag(self):
        """diag(K) of the combined weighted kernel."""
        out = np.zeros(self.n_vars)
        for k in self.kernels:
            out += k.diag()
        return out


def to_indicator(labels, n_labels):
    """One-hot N x L indicator matrix of an integer labeling."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labeling must be a 1-D integer vector")
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise ValueError(f"labels must lie in 0..{n_labels - 1}")
    x = np.zeros((labels.size, n_labels))
    x[np.arange(labels.size), labels] = 1.0
    return x


def to_labeling(indicator):
    """Integer labeling from a one-hot indicator matrix."""
    x = np.asarray(indicator, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("indicator must be an N x L matrix")
    if not np.array_equal(np.sort(x, axis=1)[:, :-1], np.zeros_like(x[:, :-1])) \
            or not np.allclose(x.max(axis=1), 1.0):
        raise ValueError("indicator rows must be one-hot")
    return np.argmax(x, axis=1)


def to_vectorized(indicator):
    """Row-major vectorization y with ``y[i*L + l] = X[i, l]``."""
    return np.asarray(indicator, dtype=np.float64).reshape(-1)


def lifted_energy(problem, indicator):
    """Quadratic lifted energy ``<H, X> - 0.5 <X X', K>`` (Potts only).

    The quadratic term is evaluated per label column through factored
    matvecs, never through the dense kernel.
    """
    if not problem.is_potts:
        raise ValueError("lifted_energy is the Potts form; use lifted_energy_general")
    x = np.asarray(indicator, dtype=np.float64)
    quad = sum(x[:, l] @ problem.kernel_matvec(x[:, l])
               for l in range(problem.n_labels))
    return float(np.sum(problem.unary * x) - 0.5 * quad)


def lifted_energy_general(problem, y):
    """Lifted energy ``h' y + 0.5 y' (U (x) K) y`` with ``U = mu - 11'``.

    The Kronecker-structured quadratic reduces to
    ``0.5 sum_{l,l'} U[l,l'] (X[:,l]' K X[:,l'])`` and is evaluated with L
    factored matvecs; the L x L Gram of label columns is the only dense
    object formed.
    """
    if problem.is_potts:
        raise ValueError("problem has Potts compatibility; use lifted_energy")
    n, L = problem.n_vars, problem.n_labels
    x = np.asarray(y, dtype=np.float64).reshape(n, L)
    u = problem.mu - 1.0
    kx = np.column_stack([problem.kernel_matvec(x[:, l]) for l in range(L)])
    gram = x.T @ kx
    return float(np.sum(problem.unary * x) + 0.5 * np.sum(u * gram))


def energy_offset(problem):
    """The constant ``0.5 * 1' K 1`` linking lifted and full energies,
    computed in factored form."""
    ones = np.ones(problem.n_vars)
    return float(0.5 * (ones @ problem.kernel_matvec(ones)))


def energy(problem, labels):
    """Full CRF energy of a labeling on the approximated kernel stack.

    Equals ``sum_i psi_i(x_i) + sum_{i<j} mu(x_i, x_j) K_ij`` and is
    computed as lifted energy plus offset in O(N L R).
    """
    x = to_indicator(labels, problem.n_labels)
    if problem.is_potts:
        lifted = lifted_energy(problem, x)
    else:
        lifted = lifted_energy_general(problem, to_vectorized(x))
    return lifted + energy_offset(problem)


def _require(cond, message):
    if not cond:
        raise InstanceFormatError(message)


def build_problem(instance, base_dir="."):
    """Build a :class:`CrfProblem` from a decoded instance dict.

    Gaussian kernels are Nystrom-factorized using their embedded
    ``nystrom`` parameters; ``factor_file`` paths resolve relative to
    ``base_dir``.  An instance-level ``image_blocks`` offset array makes
    gaussian kernels block-diagonal per image (the discriminative kernel
    stays cross-image by construction).
    """
    _require(isinstance(instance, dict), "instance must be a JSON object")
    for key in ("n_vars", "n_labels", "unary", "kernels", "compatibility"):
        _require(key in instance, f"instance is missing key {key!r}")
    n, L = int(instance["n_vars"]), int(instance["n_labels"])
    unary = np.asarray(instance["unary"], dtype=np.float64)
    _require(unary.shape == (n, L), "unary shape does not match n_vars/n_labels")

    blocks = instance.get("image_blocks")
    kernels = []
    for entry in instance["kernels"]:
        _require(isinstance(entry, dict) and "type" in entry,
                 "each kernel entry must be an object with a 'type'")
        ktype = entry["type"]
        weight = float(entry.get("weight", 1.0))
        if ktype == "gaussian":
            for key in ("feature_blocks", "thetas", "nystrom"):
                _require(key in entry, f"gaussian kernel missing {key!r}")
            gk = GaussianKernel(entry["feature_blocks"], entry["thetas"],
                                weight, mask_blocks=blocks)
            _require(gk.n == n, "gaussian feature rows do not match n_vars")
            ny = entry["nystrom"]
            kernels.append(gk.factorize(int(ny["landmarks"]), int(ny["rank"]),
                                        seed=int(ny.get("seed", 0))))
        elif ktype == "lowrank":
            _require("factor_file" in entry, "lowrank kernel missing 'factor_file'")
            factor = load_factor(os.path.join(base_dir, entry["factor_file"]))
            _require(factor.n == n, "factor rows do not match n_vars")
            kernels.append(LowRankKernel(factor, weight))
        elif ktype == "centered_discriminative":
            for key in ("factor_file", "kappa"):
                _require(key in entry, f"centered_discriminative kernel missing {key!r}")
            factor = load_factor(os.path.join(base_dir, entry["factor_file"]))
            _require(factor.n == n, "factor rows do not match n_vars")
            kernels.append(CenteredDiscriminativeKernel(factor,
                                                        float(entry["kappa"]),
                                                        weight))
        else:
            raise InstanceFormatError(f"unknown kernel type {ktype!r}")

    compat = instance["compatibility"]
    mu = None if compat == "potts" else np.asarray(compat, dtype=np.float64)
    try:
        return CrfProblem(unary, kernels, mu)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(str(exc)) from exc


def load_instance(path):
    """Load an instance JSON file.

    Returns ``(problem, instance_dict, sha256_hex)``; the hash is of the
    raw file bytes and identifies the instance in solve reports.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        instance = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"not valid JSON: {path}: {exc}") from exc
    problem = build_problem(instance, base_dir=os.path.dirname(path) or ".")
    return problem, instance, digest
