"""Acceptance criteria, each printed as one PASS/FAIL line.

Run with pytest, or directly: ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from ntkstop.experiments import ExperimentConfig, run_experiment
from ntkstop.ntk_kls import kappa_from_cosine, kernel_matrix, kls_closed_form_onsample, kls_gd_run, ntf_gram
from ntkstop.relu_net import NetworkParams, forward, grad_risk, init_params, output_signs, risk, train_gd
from ntkstop.rng import derive_seed, gaussian, stream
from ntkstop.slopes import loglog_slope
from ntkstop.spectral_stop import PolynomialDecay, SpectrumView, empirical_critical_radius, population_critical_radius
from ntkstop.sphere_data import NoiseSpec, TargetSpec, generate_dataset, sample_sphere

SEED = 20240601
COUPLING_WIDTHS = tuple(2**k for k in range(8, 15))
RATE_GRID = (32, 64, 128, 256, 512)


def _dataset(n, d, seed, sigma=0.5):
    target = TargetSpec.random("abs-linear", d, 1.0, derive_seed(seed, 1))
    return generate_dataset(n, d, target, NoiseSpec("rademacher", sigma), seed)


def criterion_1():
    rng = stream(SEED, "c1")
    worst = 0.0
    for i in range(100):
        m = 2 * int(rng.integers(1, 33))
        d = int(rng.choice([2, 3, 5]))
        p = init_params(m, d, derive_seed(SEED, 1, i))
        x = sample_sphere(1, d, derive_seed(SEED, 2, i))[0]
        worst = max(worst, abs(forward(p, x)))
    return worst <= 1e-10, f"zero-init max |f| = {worst:.1e} over 100 triples (tol 1e-10)", 1.0


def criterion_2():
    worst = 0.0
    for i in range(20):
        data = _dataset(10, 3, derive_seed(SEED, 20, i))
        W = gaussian(stream(derive_seed(SEED, 21, i), "w"), (6, 3))
        while np.min(np.abs(data.X @ W.T)) <= 1e-4:  # stay off activation boundaries
            W = W + 1e-3
        p = NetworkParams(W, output_signs(6))
        G = grad_risk(p, data)
        h = 1e-5
        for k in range(6):
            for j in range(3):
                plus, minus = p.copy(), p.copy()
                plus.W[k, j] += h
                minus.W[k, j] -= h
                fd = (risk(plus, data) - risk(minus, data)) / (2 * h)
                worst = max(worst, abs(fd - G[k, j]))
    data = _dataset(16, 3, SEED)
    traj = train_gd(init_params(512, 3, SEED), data, 0.5, 200)
    ratio = float(np.max(traj.grad_norm_sq / np.maximum(traj.risk, 1e-300)))
    ok = worst <= 1e-5 and np.all(traj.grad_norm_sq <= 4 * traj.risk * (1 + 1e-12))
    return ok, f"finite-difference error {worst:.1e} (tol 1e-5); max |grad|^2/L over 200 steps = {ratio:.3f} (<= 4)", 10.0


def criterion_3():
    X = sample_sphere(32, 3, SEED)
    K = kernel_matrix(X).K
    Khat = ntf_gram(init_params(2**16, 3, SEED), X)
    err = float(np.max(np.abs(Khat - K)))
    diag = float(np.max(np.abs(np.diag(K) - 0.5)))
    half = abs(kappa_from_cosine(0.5) - 1 / 6)
    ok = err <= 0.02 and diag <= 1e-12 and half <= 1e-12
    return ok, f"max |Khat - K| = {err:.4f} (tol 0.02); |kappa(x,x) - 1/2| = {diag:.0e}; |kappa(1/2) - 1/6| = {half:.0e}", 30.0


def criterion_4():
    worst = 0.0
    for i in range(5):
        data = _dataset(64, 3, derive_seed(SEED, 40, i))
        K = kernel_matrix(data.X).K
        for t in (1, 10, 100, 1000):
            a = kls_gd_run(K, data.y, 0.5, t).onsample()
            b = kls_closed_form_onsample(K, data.y, 0.5, t)
            worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    return worst <= 1e-8, f"closed form vs iteration, max relative difference {worst:.1e} (tol 1e-8)", 10.0


def coupling_config(widths=COUPLING_WIDTHS, trials=10):
    return ExperimentConfig("coupling", n_grid=(32,), m_grid=widths, d=3, sigma=0.5, eta=0.25, trials=trials, seed=SEED)


def criterion_5():
    result = run_experiment(coupling_config())
    med = result.extra["median_sup_gap"]
    slope = result.fits["sup_gap_vs_m"].slope
    ok = med[2**14] < med[2**8] and slope <= -0.15
    return ok, f"median sup-gap {med[2**8]:.4f} at m=2^8 -> {med[2**14]:.4f} at m=2^14, slope {slope:.3f} (<= -0.15)", 15 * 60.0


def criterion_6():
    cfg = ExperimentConfig("convergence", n_grid=(16,), m_grid=(4096,), d=3, eta=0.25, steps=500, trials=10, seed=SEED)
    result = run_experiment(cfg)
    risk_t = result.column("risk").reshape(10, 501)
    env = result.column("theory_envelope").reshape(10, 501)
    good = sum(bool(np.all(np.diff(r) <= 0) and np.all(r <= 1.5 * e)) for r, e in zip(risk_t, env))
    return good >= 9, f"{good}/10 seeds monotone and within 1.5x the envelope for t <= 500 (need 9)", 5 * 60.0


def stopping_config(n_grid=(32, 64, 128), trials=10):
    return ExperimentConfig("stopping", n_grid=n_grid, sigma_grid=(0.25, 0.5, 1.0), d=3, eta=0.25, trials=trials, seed=SEED)


def criterion_7():
    result = run_experiment(stopping_config())
    T = result.column("T_hat")
    finite = bool(np.all(np.isfinite(T.astype(float))))
    med = result.extra["median_T_hat"]
    monotone = all(
        med[f"n={n},sigma=0.25"] >= med[f"n={n},sigma=0.5"] >= med[f"n={n},sigma=1"] for n in (32, 64, 128)
    )
    flow = bool(np.all(result.column("flow_radius_ok")))
    ok = finite and monotone and flow
    return ok, f"T-hat finite: {finite}; median nonincreasing in sigma: {monotone}; (eta T)^-1 <= 2 r-hat in all {len(T)} rows: {flow}", 5 * 60.0


def criterion_8():
    worst = 0.0
    for sigma in (0.01, 0.1, 0.37, 1.0, 2.5):
        b2 = (2 * math.e * sigma) ** 2
        for excess in (1.0, 3.0, 100.0):
            s = SpectrumView.from_eigenvalues([b2 * excess], n=1)
            worst = max(worst, abs(empirical_critical_radius(s, sigma) - b2))
    slopes = {}
    for beta in (1.5, 2.0):
        decay = PolynomialDecay(1.0, beta)
        pts = [(2**k, population_critical_radius(decay, 2**k, 1.0)) for k in range(6, 13)]
        slopes[beta] = loglog_slope(pts).slope
    ok = worst <= 1e-10 and all(abs(s + b / (b + 1)) <= 0.1 for b, s in slopes.items())
    detail = ", ".join(f"beta={b}: {s:.3f} vs {-b / (b + 1):.3f}" for b, s in slopes.items())
    return ok, f"scalar radius error {worst:.1e} (tol 1e-10); population slopes {detail} (+-0.1)", 60.0


def criterion_9():
    result = run_experiment(ExperimentConfig("spectrum", n_grid=(512,), d=3, trials=3, seed=SEED))
    slope = result.fits["lambda_over_n_vs_k@n=512"].slope
    trace = max(abs(v - 0.5) for v in result.extra["trace_over_n"].values())
    ok = -2.2 <= slope <= -0.9 and trace <= 1e-9
    return ok, f"eigenvalue slope over k in [4, 64] = {slope:.3f} (window [-2.2, -0.9]); |trace/n - 1/2| = {trace:.1e}", 120.0


@lru_cache(maxsize=1)
def _rate_run():
    cfg = ExperimentConfig("rate", n_grid=RATE_GRID, d=3, sigma=0.5, eta=0.25, lipschitz=1.0, target="abs-linear", trials=10, seed=SEED)
    start = time.perf_counter()
    result = run_experiment(cfg)
    return result, time.perf_counter() - start


def criterion_10():
    result, _ = _rate_run()
    slope = result.fits["excess_risk_vs_n"].slope
    return -0.7 <= slope <= -0.15, f"median excess-risk slope {slope:.3f} (window [-0.7, -0.15], theory -0.4)", 10 * 60.0


def criterion_11():
    result, _ = _rate_run()
    slope = result.fits["r_hat_vs_n"].slope
    return abs(slope + 0.6) <= 0.2, f"median r-hat slope {slope:.3f} (window -0.6 +- 0.2)", 10 * 60.0


def criterion_12():
    same = []
    for cfg in (coupling_config(widths=(2**8, 2**10), trials=3), stopping_config(n_grid=(32, 64), trials=3)):
        same.append(run_experiment(cfg).to_csv().encode() == run_experiment(cfg).to_csv().encode())
    return all(same), f"byte-identical CSVs on rerun: coupling {same[0]}, stopping {same[1]}", 3 * 60.0


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def _evaluate(number):
    start = time.perf_counter()
    ok, detail, limit = CRITERIA[number]()
    elapsed = time.perf_counter() - start
    if number in (10, 11):
        elapsed = _rate_run()[1]
    if elapsed > limit:
        ok, detail = False, f"{detail}; runtime {elapsed:.0f}s exceeds {limit:.0f}s"
    return bool(ok), detail, elapsed


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, report):
    ok, detail, elapsed = _evaluate(number)
    report(number, ok, detail, elapsed)
    assert ok, detail


if __name__ == "__main__":
    failures = 0
    for number in sorted(CRITERIA):
        ok, detail, elapsed = _evaluate(number)
        failures += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail} ({elapsed:.1f}s)", flush=True)
    sys.exit(1 if failures else 0)
