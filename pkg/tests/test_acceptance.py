"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and recorded regression values.  Every criterion is seeded and
carries its stated tolerance and runtime budget.
"""

import time

import numpy as np
import pytest

from conftest import random_general_problem, random_potts_problem
from lrsdcut.crf import build_problem, energy
from lrsdcut.eig import PsdFactor, SymmetricOperator, leading_psd_part
from lrsdcut.generate import gen_clusters, gen_grid
from lrsdcut.kernels import (CenteredDiscriminativeKernel, LowRankFactor,
                             hadamard_matvec, nystrom_factor,
                             select_landmarks)
from lrsdcut.meanfield import mf_free_energy, mf_init, mf_site_update, mf_solve
from lrsdcut.oracle import brute_force_map, dense_sdp_pieces
from lrsdcut.sdp import (LbfgsAscent, lr_sdcut_solve, make_sdp,
                         spectral_shift_init)

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # timing criteria still run, just unpinned
    threadpool_limits = None


def report(number, name, detail, elapsed, budget):
    print(f"\nACCEPTANCE {number} ({name}): PASS: {detail} "
          f"[{elapsed:.1f}s / budget {budget:.0f}s]")
    assert elapsed < budget, f"criterion {number} exceeded its runtime budget"


def exact_factor(sdp, u):
    return leading_psd_part(sdp.operator(u), max_rank=sdp.n, seed=0)


def test_01_lower_bound_sandwich():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    checked = 0
    for trial in range(50):
        n = int(rng.integers(4, 9))
        n_labels = int(rng.integers(2, 4))
        problem = random_potts_problem(n, n_labels, seed=5000 + trial,
                                       weight=float(rng.uniform(0.5, 2.0)))
        _, optimum = brute_force_map(problem)
        solved = lr_sdcut_solve(problem, seed=trial)
        assert optimum <= solved.best_energy + 1e-6
        for record in solved.trajectory:
            if not record.truncated:
                assert record.dual <= optimum + 1e-6
                checked += 1
    report(1, "lower-bound sandwich",
           f"{checked} untruncated dual values below 50 brute-force optima",
           time.perf_counter() - started, 60)


def test_02_gradient_vs_finite_differences():
    started = time.perf_counter()
    step = 1e-5
    worst = 0.0
    cases = [(random_potts_problem(6, 2, seed=777, weight=1.0), 100.0),
             (random_general_problem(4, 3, seed=778, weight=1.0), 100.0)]
    rng = np.random.default_rng(202)
    for problem, gamma in cases:
        sdp = make_sdp(problem, gamma=gamma)
        spectral_shift_init(sdp, min(4, sdp.n))
        for _ in range(20):
            u = 0.4 * rng.standard_normal(sdp.q)
            grad = sdp.dual_gradient(u, exact_factor(sdp, u))
            fd = np.zeros(sdp.q)
            for i in range(sdp.q):
                up, um = u.copy(), u.copy()
                up[i] += step
                um[i] -= step
                fd[i] = (dense_sdp_pieces(sdp, up)["dual"]
                         - dense_sdp_pieces(sdp, um)["dual"]) / (2 * step)
            rel = np.linalg.norm(grad - fd, np.inf) / max(
                np.linalg.norm(fd, np.inf), 1.0)
            worst = max(worst, rel)
    assert worst < 1e-4
    report(2, "gradient correctness",
           f"max relative error vs central differences {worst:.2e}",
           time.perf_counter() - started, 30)


def test_03_matvec_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0

    def check(got, ref):
        nonlocal worst
        err = np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1.0)
        worst = max(worst, err)
        assert err <= 1e-8

    potts = make_sdp(random_potts_problem(95, 5, seed=808), gamma=50.0)
    spectral_shift_init(potts, 10)
    general = make_sdp(random_general_problem(20, 5, seed=809), gamma=50.0)
    spectral_shift_init(general, 10)
    for sdp in (potts, general):
        u = rng.standard_normal(sdp.q)
        dense = dense_sdp_pieces(sdp, u)["C"]
        for _ in range(20):
            d = rng.standard_normal(sdp.n)
            check(sdp.c_matvec(u, d), dense @ d)

    n = 100
    phi_p = rng.standard_normal((n, 3))
    phi_c = rng.standard_normal((n, 4))
    blocks = [0, 40, n]
    dense_had = (phi_p @ phi_p.T) * (phi_c @ phi_c.T)
    mask = np.zeros((n, n))
    for a, b in zip(blocks[:-1], blocks[1:]):
        mask[a:b, a:b] = 1.0
    fp, fc = LowRankFactor(phi_p), LowRankFactor(phi_c)
    for _ in range(20):
        d = rng.standard_normal(n)
        check(hadamard_matvec(fp, fc, d), dense_had @ d)
        check(hadamard_matvec(fp, fc, d, blocks), (dense_had * mask) @ d)

    phi_tilde = rng.standard_normal((n, 6))
    kernel = CenteredDiscriminativeKernel(LowRankFactor(phi_tilde), kappa=0.2)
    omega = np.eye(n) - np.full((n, n), 1.0 / n)
    dense_disc = omega @ np.linalg.inv(0.2 * n * np.eye(n)
                                       + phi_tilde @ phi_tilde.T) @ omega
    for _ in range(20):
        d = rng.standard_normal(n)
        check(kernel.matvec(d), dense_disc @ d)

    report(3, "matvec equivalence",
           f"worst relative error {worst:.2e} over 80 probes",
           time.perf_counter() - started, 30)


def test_04_lanczos_fidelity():
    started = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = 0.0
    matrices = []
    for _ in range(29):
        n = int(rng.integers(20, 61))
        a = rng.standard_normal((n, n))
        matrices.append(0.5 * (a + a.T))
    basis, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    degenerate_vals = np.concatenate([[6.0, 6.0, 6.0],
                                      np.linspace(2.0, -5.0, 37)])
    matrices.append((basis * degenerate_vals) @ basis.T)
    for a in matrices:
        n = a.shape[0]
        factor = leading_psd_part(SymmetricOperator(n, lambda d, m=a: m @ d),
                                  max_rank=n, seed=7)
        vals, vecs = np.linalg.eigh(a)
        dense_pos = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        err = np.linalg.norm(factor.reconstruct() - dense_pos)
        worst = max(worst, err)
        assert err < 1e-7
    report(4, "partial-eig fidelity",
           f"worst Frobenius error {worst:.2e} over 30 matrices "
           "(3-fold degenerate case included)",
           time.perf_counter() - started, 30)


def test_05_spectral_shift_rank():
    started = time.perf_counter()
    measured = []
    exact_hits = 0
    simple_count = 0
    for trial in range(10):
        problem = random_potts_problem(10, 2, seed=6000 + trial, weight=1.0)
        sdp = make_sdp(problem, gamma=100.0)
        spectral_shift_init(sdp, r=5)
        pieces = dense_sdp_pieces(sdp, np.zeros(sdp.q))
        c_vals = np.linalg.eigvalsh(pieces["C"])
        scale = max(np.abs(c_vals).max(), 1.0)
        rank = int(np.sum(c_vals > 1e-8 * scale))
        measured.append(rank)
        assert rank <= 5
        a_vals = np.sort(np.linalg.eigvalsh(pieces["A"] + sdp.nu * np.eye(sdp.n)))
        gaps = np.diff(a_vals)[3:5]  # around the 5th smallest
        if np.all(gaps > 1e-9 * scale):
            simple_count += 1
            assert rank == 4
            exact_hits += 1
    report(5, "spectral-shift rank",
           f"measured ranks {measured}; rank = 4 in all {exact_hits}/"
           f"{simple_count} simple-spectrum cases",
           time.perf_counter() - started, 20)


def test_06_energy_comparison_vs_meanfield():
    started = time.perf_counter()
    sd_vals, mf_vals = [], []
    for trial in range(20):
        instance = gen_clusters(200, 2, seed=7000 + trial, noise=1.5,
                                weight=3.0)
        problem = build_problem(instance)
        solved = lr_sdcut_solve(problem, seed=trial)
        baseline = mf_solve(problem, restarts=5, seed=trial)
        sd_vals.append(solved.best_energy)
        mf_vals.append(baseline.energy)
    sd_vals = np.asarray(sd_vals)
    mf_vals = np.asarray(mf_vals)
    med_sd, med_mf = np.median(sd_vals), np.median(mf_vals)
    frac = float(np.mean(sd_vals <= mf_vals + 1e-6))
    assert med_sd <= med_mf
    assert frac >= 0.6
    report(6, "energy comparison",
           f"median {med_sd:.4f} vs mean-field {med_mf:.4f} "
           f"(margin {med_mf - med_sd:.2e}, at-most-equal on {frac:.0%})",
           time.perf_counter() - started, 300)


def test_07_meanfield_coordinate_monotonicity():
    started = time.perf_counter()
    worst_rise = -np.inf
    for trial in range(10):
        problem = random_potts_problem(10, 3, seed=8000 + trial, weight=1.2)
        marginals = mf_init(problem, seed=trial, mode="random")
        value = mf_free_energy(problem, marginals)
        for step in range(200):
            marginals = mf_site_update(problem, marginals, step % 10)
            new_value = mf_free_energy(problem, marginals)
            worst_rise = max(worst_rise, new_value - value)
            assert new_value <= value + 1e-9
            value = new_value
    report(7, "mean-field coordinate monotonicity",
           f"largest free-energy rise {worst_rise:.2e} over 2000 site updates",
           time.perf_counter() - started, 10)


def test_08_linear_scaling():
    started = time.perf_counter()
    # same scene sampled at two resolutions: pitch 1.0 vs 0.5 on one axis,
    # so L, the kernel rank, and the initial-rank shift are all identical
    small = build_problem(gen_grid(50, 50, 2, seed=5, theta_pos=16.0))
    large = build_problem(gen_grid(100, 50, 2, seed=5, theta_pos=16.0,
                                   spacing_x=0.5))
    assert small.n_vars == 2500 and large.n_vars == 5000

    def median_iteration_ms(problem):
        solved = lr_sdcut_solve(problem, seed=1, k_max=5, tau=0.0,
                                n_samples=60)
        return float(np.median([rec.ms for rec in solved.trajectory[1:]]))

    if threadpool_limits is not None:
        with threadpool_limits(limits=1):
            med_small = median_iteration_ms(small)
            med_large = median_iteration_ms(large)
    else:
        med_small = median_iteration_ms(small)
        med_large = median_iteration_ms(large)
    ratio = med_large / med_small
    assert ratio < 2.5
    report(8, "linear per-iteration scaling",
           f"median iteration {med_small:.0f} ms (N=2500) vs "
           f"{med_large:.0f} ms (N=5000), ratio {ratio:.2f}",
           time.perf_counter() - started, 180)


def test_09_gamma_monotonicity():
    started = time.perf_counter()
    problem = random_potts_problem(6, 2, seed=900, weight=1.0)
    primals = []
    for gamma in (10.0, 100.0, 1000.0):
        sdp = make_sdp(problem, gamma=gamma)
        spectral_shift_init(sdp, sdp.n)

        def evaluate(u, sdp=sdp):
            factor = exact_factor(sdp, u)
            return (sdp.dual_objective(u, factor),
                    sdp.dual_gradient(u, factor), factor)

        optimizer = LbfgsAscent(evaluate, np.zeros(sdp.q))
        previous = optimizer.value
        for _ in range(20000):
            step = optimizer.step()
            if step.converged or step.stalled:
                break
            improvement = ((step.value - previous)
                           / max(abs(step.value), abs(previous), 1.0))
            previous = step.value
            if improvement <= 1e-9:
                break
        primals.append(sdp.primal_objective(optimizer.payload))
    assert primals[0] >= primals[1] - 1e-3
    assert primals[1] >= primals[2] - 1e-3
    report(9, "gamma-monotonicity",
           "primal objectives " + ", ".join(f"{p:.6f}" for p in primals)
           + " non-increasing in gamma",
           time.perf_counter() - started, 60)


def test_10_nystrom_quality():
    started = time.perf_counter()
    rng = np.random.default_rng(505)

    # planted low-rank kernel: landmarks spanning the range recover exactly
    base = rng.standard_normal((40, 5))
    planted = base @ base.T
    landmarks = select_landmarks(base, 10, seed=3)
    factor = nystrom_factor(lambda j: planted[:, j], landmarks, rank=5)
    rel = (np.linalg.norm(planted - factor.phi @ factor.phi.T)
           / np.linalg.norm(planted))
    assert rel <= 1e-8

    pts = rng.standard_normal((50, 2))
    sq = np.sum(pts * pts, axis=1)
    gauss = np.exp(-np.clip(sq[:, None] + sq[None, :] - 2 * pts @ pts.T,
                            0.0, None) / 2.0)
    marks = select_landmarks(pts, 25, seed=9)
    factor = nystrom_factor(lambda j: gauss[:, j], marks, rank=15)
    err = np.linalg.norm(gauss - factor.phi @ factor.phi.T)
    opt = np.sqrt(np.sum(np.sort(np.linalg.eigvalsh(gauss))[:-15] ** 2))
    slack = err - opt
    # frozen regression bound: measured slack 1.423e-1 on this seeded
    # configuration
    assert slack <= 1.5e-1
    report(10, "nystrom quality",
           f"planted-rank relative error {rel:.2e}; "
           f"gaussian rank-15 slack {slack:.2e} over optimal {opt:.2e}",
           time.perf_counter() - started, 10)
