"""Desk-scale experiments comparing measurements against the theory.

Each ``run_*`` function is a pure function of its :class:`ExperimentConfig`:
the same config (including the master seed) always yields the same rows and
byte-identical CSV text.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import bounds
from .ntk_kls import (
    coupling_gap,
    kernel_matrix,
    kls_closed_form_dual,
    kls_gd_run,
    kls_predict,
    ntf_gram,
    sup_test_points,
)
from .relu_net import forward, init_params, train_gd
from .rng import derive_seed
from .slopes import SlopeFit, loglog_slope
from .spectral_stop import (
    SpectrumView,
    dieuleveut_rule,
    eigh_symmetric,
    rwy_stopping_time,
    yao_rule,
)
from .sphere_data import NoiseSpec, TargetSpec, eval_target, generate_dataset, sample_sphere

log = logging.getLogger(__name__)

KINDS = ("coupling", "convergence", "rate", "spectrum", "stopping")
MAX_N = 2048
MAX_M = 2**15

# fixed stream words so target directions and test sets never collide with trial seeds
_TARGET_WORD = 0x7A5
_TESTSET_WORD = 0x5E7


class ResourceCapError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_grid: tuple = (32,)
    m_grid: tuple = (4096,)
    d: int = 3
    eta: float = 0.25
    sigma: float = 0.5
    sigma_grid: tuple = ()
    target: str = "abs-linear"
    lipschitz: float = 1.0
    noise: str = "rademacher"
    rule: str = "rwy"
    trials: int = 10
    seed: int = 0
    steps: int | None = None
    mc_points: int = 4096
    test_points: int = 512
    k_range: tuple = (4, 64)
    nu: float = 1.0
    network_width: int = 0

    def __post_init__(self):
        for name in ("n_grid", "m_grid", "sigma_grid", "k_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.n_grid or not self.m_grid:
            raise ValueError("grids must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 < self.eta <= 0.5:
            raise ValueError(f"eta must lie in (0, 1/2], got {self.eta}")
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if any(n < 1 for n in self.n_grid):
            raise ValueError("sample sizes must be positive")
        if max(self.n_grid) > MAX_N:
            raise ResourceCapError(f"n = {max(self.n_grid)} exceeds the cap {MAX_N}")
        if any(m < 2 or m % 2 for m in self.m_grid):
            raise ValueError("widths must be even and at least 2")
        if max(self.m_grid) > MAX_M or self.network_width > MAX_M:
            raise ResourceCapError(f"width exceeds the cap {MAX_M}")
        if self.network_width % 2:
            raise ValueError("network_width must be even")
        if self.sigma < 0 or any(s < 0 for s in self.sigma_grid):
            raise ValueError("sigma must be nonnegative")
        if self.rule not in ("rwy", "dieuleveut", "yao"):
            raise ValueError(f"unknown stopping rule {self.rule!r}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class ExperimentResult:
    kind: str
    columns: list
    rows: list
    fits: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    cfg: ExperimentConfig | None = None

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        digest = self.cfg.digest() if self.cfg else "none"
        buf.write(f"# cfg_digest={digest} version={__version__} kind={self.kind}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


# --------------------------------------------------------------------------
# measurement helpers


def mc_excess_risk(predictor: Callable, target: TargetSpec, d: int, M: int, seed: int) -> float:
    """Monte Carlo estimate of ||f - f*||_2^2 under the uniform measure on the sphere."""
    if M < 1:
        raise ValueError("need at least one Monte Carlo point")
    Z = sample_sphere(M, d, seed, tag="mc-risk")
    diff = np.asarray(predictor(Z)) - eval_target(target, Z)
    return float(np.mean(diff * diff))


def empirical_norm_sq(f: Callable, g: Callable, X) -> float:
    """(1/n) sum_i (f(x_i) - g(x_i))^2."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empirical norm over an empty input set")
    diff = np.asarray(f(X)) - np.asarray(g(X))
    return float(np.mean(diff * diff))


def _target(cfg: ExperimentConfig) -> TargetSpec:
    return TargetSpec.random(cfg.target, cfg.d, cfg.lipschitz, derive_seed(cfg.seed, _TARGET_WORD))


def _median_fit(xs, groups) -> SlopeFit:
    return loglog_slope([(x, float(np.median(g))) for x, g in zip(xs, groups)])


def _decision(cfg: ExperimentConfig, spectrum: SpectrumView, n: int, sigma: float):
    if cfg.rule == "rwy":
        return rwy_stopping_time(spectrum, cfg.eta, sigma)
    if cfg.rule == "dieuleveut":
        return dieuleveut_rule(n, cfg.d / 2.0)
    dec = yao_rule(n)
    return replace(dec, eta=cfg.eta)


# --------------------------------------------------------------------------
# experiments


def run_coupling_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Sup-norm gap between GD-trained network and GD-trained KLS across widths.

    Data for trial r is shared by every width so the sweep is paired; the
    network initialization is seeded per (width, trial).
    """
    _expect(cfg, "coupling")
    if not cfg.sigma > 0 and cfg.steps is None:
        raise ValueError("the RWY stopping step needs sigma > 0 (or pass steps)")
    target = _target(cfg)
    noise = NoiseSpec(cfg.noise, cfg.sigma)
    test = sup_test_points(cfg.d, derive_seed(cfg.seed, _TESTSET_WORD), cfg.test_points)
    columns = ["m", "n", "d", "eta", "t", "sup_gap", "lambda_min_K", "lambda_min_Khat", "trial", "theory_sq_gap_bound"]
    rows, seeds = [], []
    n = cfg.n_grid[0]
    gaps = {m: [] for m in cfg.m_grid}
    for trial in range(cfg.trials):
        data_seed = derive_seed(cfg.seed, 0, trial)
        data = generate_dataset(n, cfg.d, target, noise, data_seed)
        K = kernel_matrix(data.X)
        lam, V = eigh_symmetric(K.K)
        lam_min = float(lam[-1])
        if cfg.steps is None:
            T = rwy_stopping_time(SpectrumView.from_eigenvalues(lam), cfg.eta, cfg.sigma).T
        else:
            T = cfg.steps
        kls = kls_gd_run(K, data.y, cfg.eta, T)
        for j, m in enumerate(cfg.m_grid):
            init_seed = derive_seed(cfg.seed, 1 + j, trial)
            seeds.append({"m": m, "trial": trial, "data_seed": data_seed, "init_seed": init_seed})
            p0 = init_params(m, cfg.d, init_seed)
            traj = train_gd(p0, data, cfg.eta, T)
            net = traj.final
            gap = coupling_gap(lambda Z: forward(net, Z), lambda Z: kls_predict(kls, Z), test)
            lam_hat = float(eigh_symmetric(ntf_gram(p0, data.X))[0][-1])
            theory = bounds.coupling_bound(data.B_y, n, lam_min, m, cfg.nu) if lam_min > 0 else float("nan")
            rows.append((m, n, cfg.d, cfg.eta, T, gap, lam_min, lam_hat, trial, theory))
            gaps[m].append(gap)
        log.info("coupling trial %d: T=%d lambda_min=%.3e", trial, T, lam_min)
    fits = {}
    if len(cfg.m_grid) >= 2:
        fits["sup_gap_vs_m"] = _median_fit(cfg.m_grid, [gaps[m] for m in cfg.m_grid])
    medians = {int(m): float(np.median(gaps[m])) for m in cfg.m_grid}
    return ExperimentResult("coupling", columns, rows, fits, {"median_sup_gap": medians}, seeds, cfg)


def run_convergence_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Training risk along GD against the exponential envelope, with drift overlays."""
    _expect(cfg, "convergence")
    T = 500 if cfg.steps is None else cfg.steps
    target = _target(cfg)
    noise = NoiseSpec(cfg.noise, cfg.sigma)
    columns = [
        "n", "m", "trial", "step", "risk", "theory_envelope", "max_drift",
        "theory_drift_bound", "max_pattern_changes", "grad_norm_sq", "lambda0",
    ]
    rows, seeds = [], []
    cell = 0
    for n in cfg.n_grid:
        for m in cfg.m_grid:
            for trial in range(cfg.trials):
                seed = derive_seed(cfg.seed, cell, trial)
                seeds.append({"n": n, "m": m, "trial": trial, "seed": seed})
                data = generate_dataset(n, cfg.d, target, noise, seed)
                lam0 = max(float(eigh_symmetric(kernel_matrix(data.X).K)[0][-1]), 0.0)
                traj = train_gd(init_params(m, cfg.d, seed), data, cfg.eta, T)
                drift_cap = bounds.drift_bound(data.B_y, n, lam0, m) if lam0 > 0 else float("inf")
                for t in range(T + 1):
                    rows.append((
                        n, m, trial, t, traj.risk[t],
                        bounds.convergence_envelope(data.B_y, cfg.eta, lam0, n, t),
                        traj.max_drift[t], drift_cap, int(traj.max_pattern_changes[t]),
                        traj.grad_norm_sq[t], lam0,
                    ))
                log.info("convergence n=%d m=%d trial=%d final risk %.3e", n, m, trial, traj.risk[-1])
            cell += 1
    return ExperimentResult("convergence", columns, rows, {}, {}, seeds, cfg)


def run_rate_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Excess risk of early-stopped KLS-GD as n grows, plus the stopping radius.

    With ``network_width`` > 0 a network of that width is trained for the
    same number of steps and its excess risk is reported alongside.
    """
    _expect(cfg, "rate")
    if cfg.rule == "rwy" and not cfg.sigma > 0:
        raise ValueError("the RWY rule is undefined for sigma = 0")
    if len(cfg.n_grid) < 2:
        raise ValueError("a rate fit needs at least two sample sizes in n_grid")
    target = _target(cfg)
    noise = NoiseSpec(cfg.noise, cfg.sigma)
    columns = ["n", "trial", "rule", "eta", "T_hat", "r_hat", "excess_risk", "theory_rate"]
    if cfg.network_width:
        columns.append("net_excess_risk")
    rows, seeds = [], []
    risks, radii = [], []
    for cell, n in enumerate(cfg.n_grid):
        cell_risk, cell_rad = [], []
        for trial in range(cfg.trials):
            seed = derive_seed(cfg.seed, cell, trial)
            seeds.append({"n": n, "trial": trial, "seed": seed})
            data = generate_dataset(n, cfg.d, target, noise, seed)
            K = kernel_matrix(data.X)
            eig = eigh_symmetric(K.K)
            spectrum = SpectrumView.from_eigenvalues(eig[0])
            dec = _decision(cfg, spectrum, n, cfg.sigma)
            r_hat = dec.r_hat if dec.r_hat is not None else float("nan")
            state = kls_closed_form_dual(K, data.y, dec.eta, dec.T, eig=eig)
            risk = mc_excess_risk(lambda Z: kls_predict(state, Z), target, cfg.d, cfg.mc_points, seed)
            row = [n, trial, dec.rule, dec.eta, dec.T, r_hat, risk, bounds.rate_prediction(n, cfg.d)]
            if cfg.network_width:
                traj = train_gd(init_params(cfg.network_width, cfg.d, seed), data, dec.eta, dec.T)
                net = traj.final
                row.append(mc_excess_risk(lambda Z: forward(net, Z), target, cfg.d, cfg.mc_points, seed))
            rows.append(tuple(row))
            cell_risk.append(risk)
            cell_rad.append(r_hat)
        risks.append(cell_risk)
        radii.append(cell_rad)
        log.info("rate n=%d median excess risk %.4e", n, float(np.median(cell_risk)))
    fits = {"excess_risk_vs_n": _median_fit(cfg.n_grid, risks)}
    if cfg.rule == "rwy":
        fits["r_hat_vs_n"] = _median_fit(cfg.n_grid, radii)
    extra = {
        "median_excess_risk": {int(n): float(np.median(r)) for n, r in zip(cfg.n_grid, risks)},
        "theory_exponent": -2.0 / (2.0 + cfg.d),
        "theory_radius_exponent": -cfg.d / (cfg.d + 2.0),
    }
    return ExperimentResult("rate", columns, rows, fits, extra, seeds, cfg)


def run_spectrum_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Eigenvalue decay of the kernel matrix on uniform sphere inputs."""
    _expect(cfg, "spectrum")
    columns = ["n", "trial", "k", "lambda_k", "lambda_k_over_n"]
    rows, seeds, fits, traces = [], [], {}, {}
    for cell, n in enumerate(cfg.n_grid):
        scaled = []
        for trial in range(cfg.trials):
            seed = derive_seed(cfg.seed, cell, trial)
            seeds.append({"n": n, "trial": trial, "seed": seed})
            X = sample_sphere(n, cfg.d, seed)
            spectrum = SpectrumView.from_eigenvalues(eigh_symmetric(kernel_matrix(X).K)[0])
            for k, (lam, s) in enumerate(zip(spectrum.eigenvalues, spectrum.scaled), start=1):
                rows.append((n, trial, k, lam, s))
            scaled.append(spectrum.scaled)
            traces[f"n={n},trial={trial}"] = float(spectrum.scaled.sum())
        med = np.median(np.array(scaled), axis=0)
        k_lo, k_hi = cfg.k_range
        k_hi = min(k_hi, max(n // 4, k_lo + 1), n)
        ks = np.arange(k_lo, k_hi + 1)
        pts = [(k, med[k - 1]) for k in ks if med[k - 1] > 0]
        if len(pts) >= 2:
            fits[f"lambda_over_n_vs_k@n={n}"] = loglog_slope(pts)
        log.info("spectrum n=%d done", n)
    extra = {"trace_over_n": traces, "theory_exponent": -cfg.d / 2.0}
    return ExperimentResult("spectrum", columns, rows, fits, extra, seeds, cfg)


def run_stopping_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """RWY stopping times and empirical critical radii across (n, sigma)."""
    _expect(cfg, "stopping")
    sigmas = cfg.sigma_grid or (cfg.sigma,)
    if any(not s > 0 for s in sigmas):
        raise ValueError("the RWY rule is undefined for sigma = 0")
    target = _target(cfg)
    columns = ["n", "sigma", "trial", "T_hat", "eta", "r_hat", "inv_eta_T", "flow_radius_ok"]
    rows, seeds = [], []
    radii = {s: [] for s in sigmas}
    medians_T = {}
    for cell_n, n in enumerate(cfg.n_grid):
        per_sigma = {s: [] for s in sigmas}
        for trial in range(cfg.trials):
            # inputs and noise signs are shared across sigma so the sigma sweep is paired
            seed = derive_seed(cfg.seed, cell_n, trial)
            seeds.append({"n": n, "trial": trial, "seed": seed})
            X = sample_sphere(n, cfg.d, seed)
            spectrum = SpectrumView.from_eigenvalues(eigh_symmetric(kernel_matrix(X).K)[0])
            for s in sigmas:
                dec = rwy_stopping_time(spectrum, cfg.eta, s)
                inv = 1.0 / (cfg.eta * dec.T) if dec.T >= 1 else float("inf")
                ok = dec.T < 1 or inv <= 2.0 * dec.r_hat
                rows.append((n, s, trial, dec.T, cfg.eta, dec.r_hat, inv, ok))
                per_sigma[s].append(dec.T)
                radii[s].append(dec.r_hat)
        for s in sigmas:
            medians_T[f"n={n},sigma={s:g}"] = float(np.median(per_sigma[s]))
        log.info("stopping n=%d done", n)
    fits = {}
    if len(cfg.n_grid) >= 2:
        for s in sigmas:
            groups = [radii[s][i * cfg.trials : (i + 1) * cfg.trials] for i in range(len(cfg.n_grid))]
            fits[f"r_hat_vs_n@sigma={s:g}"] = _median_fit(cfg.n_grid, groups)
    extra = {"median_T_hat": medians_T, "theory_radius_exponent": -cfg.d / (cfg.d + 2.0)}
    return ExperimentResult("stopping", columns, rows, fits, extra, seeds, cfg)


RUNNERS = {
    "coupling": run_coupling_experiment,
    "convergence": run_convergence_experiment,
    "rate": run_rate_experiment,
    "spectrum": run_spectrum_experiment,
    "stopping": run_stopping_experiment,
}


def _expect(cfg: ExperimentConfig, kind: str) -> None:
    if cfg.kind != kind:
        raise ValueError(f"config kind is {cfg.kind!r}, expected {kind!r}")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)


def write_outputs(result: ExperimentResult, out_dir, manifest_extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<kind>.csv`` and ``<kind>_manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{result.kind}.csv"
    manifest_path = out / f"{result.kind}_manifest.json"
    csv_path.write_text(result.to_csv())
    manifest = {
        "kind": result.kind,
        "version": __version__,
        "cfg": asdict(result.cfg) if result.cfg else None,
        "cfg_digest": result.cfg.digest() if result.cfg else None,
        "seed_derivation": "SeedSequence([master_seed, cell_index, trial_index]) -> 63-bit seed",
        "seeds": result.seeds,
        "fits": {k: asdict(v) for k, v in result.fits.items()},
        "extra": result.extra,
        "csv": csv_path.name,
        "written_at_unix": time.time(),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return csv_path, manifest_path
