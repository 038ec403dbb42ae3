"""Command-line entry point: ``ntkstop <subcommand> [flags]``.

Every experiment needs an explicit ``--seed``.  Settings come from an
optional ``key = value`` file (``--config``) overridden by inline flags;
both sources are recorded in the run manifest.  Failures print one line

    error: kind=<usage|value|resource|io> [flag=<flag>] message=<text>

on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import KINDS, ExperimentConfig, ResourceCapError, run_experiment, write_outputs

log = logging.getLogger("ntkstop")

SUBCOMMANDS = KINDS + ("kernel-eval", "selftest")

EXIT_USAGE = 2
EXIT_VALUE = 3
EXIT_RESOURCE = 4
EXIT_IO = 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, flag: str | None = None):
        super().__init__(message)
        self.kind = kind
        self.flag = flag

    @property
    def exit_code(self) -> int:
        return {"usage": EXIT_USAGE, "value": EXIT_VALUE, "resource": EXIT_RESOURCE, "io": EXIT_IO}[self.kind]

    def line(self) -> str:
        msg = " ".join(str(self).split())
        flag = f" flag={self.flag}" if self.flag else ""
        return f"error: kind={self.kind}{flag} message={msg}"


@dataclass
class CliInvocation:
    subcommand: str
    seed: int | None = None
    out: Path | None = None
    config_path: Path | None = None
    file_values: dict = field(default_factory=dict)
    inline_values: dict = field(default_factory=dict)
    cfg: ExperimentConfig | None = None
    dot: float | None = None
    argv: list = field(default_factory=list)


# --------------------------------------------------------------------------
# value parsing


def _int_list(text: str) -> tuple:
    return tuple(_int(v) for v in text.split(",") if v.strip())


def _float_list(text: str) -> tuple:
    return tuple(_float(v) for v in text.split(",") if v.strip())


def _int(text: str) -> int:
    text = str(text).strip()
    try:
        return int(text)
    except ValueError:
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"{text!r} is not an integer")
        return int(v)


def _float(text: str) -> float:
    # float() is locale-independent and accepts scientific notation
    v = float(str(text).strip())
    if not math.isfinite(v):
        raise ValueError(f"{text!r} is not a finite number")
    return v


def _optional_int(text: str):
    return None if str(text).strip().lower() in ("", "none") else _int(text)


# config key -> (flag, parser)
_SETTINGS = {
    "n_grid": ("--n-grid", _int_list),
    "m_grid": ("--m-grid", _int_list),
    "d": ("--d", _int),
    "eta": ("--eta", _float),
    "sigma": ("--sigma", _float),
    "sigma_grid": ("--sigma-grid", _float_list),
    "target": ("--target", str),
    "lipschitz": ("--lipschitz", _float),
    "noise": ("--noise", str),
    "rule": ("--rule", str),
    "trials": ("--trials", _int),
    "steps": ("--steps", _optional_int),
    "mc_points": ("--mc-points", _int),
    "test_points": ("--test-points", _int),
    "k_range": ("--k-range", _int_list),
    "nu": ("--nu", _float),
    "network_width": ("--network-width", _int),
    "seed": ("--seed", _int),
    "out": ("--out", str),
}


def read_config_file(path: Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys may use - or _."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"cannot read config file {path}: {exc.strerror}", "--config") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("usage", f"{path}:{lineno}: expected 'key = value'", "--config")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _SETTINGS:
            raise CliError("usage", f"{path}:{lineno}: unknown key {key!r}", "--config")
        if key in values:
            raise CliError("usage", f"{path}:{lineno}: key {key!r} set twice", "--config")
        values[key] = value
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flag = None
        for token in message.replace(",", " ").replace("/", " ").split():
            if token.startswith("--"):
                flag = token.rstrip(":")
                break
        raise CliError("usage", message, flag)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ntkstop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ntkstop {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per cell to stderr")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", action="append", help="key = value settings file")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        for key, (flag, _) in _SETTINGS.items():
            p.add_argument(flag, dest=key, default=None, metavar=key.upper())
    ke = sub.add_parser("kernel-eval", help="print kappa at a given cosine")
    ke.add_argument("--dot", required=True, help="cosine between two unit vectors, in [-1, 1]")
    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("--seed", default=None, help="master seed for the randomized checks (default 0)")
    return parser


def parse_invocation(argv) -> CliInvocation:
    argv = list(argv)
    ns = _build_parser().parse_args(argv)
    if ns.subcommand is None:
        raise CliError("usage", f"a subcommand is required: one of {', '.join(SUBCOMMANDS)}")
    if ns.subcommand == "kernel-eval":
        try:
            dot = _float(ns.dot)
        except ValueError as exc:
            raise CliError("usage", str(exc), "--dot") from exc
        if not -1.0 <= dot <= 1.0:
            raise CliError("value", f"cosine must lie in [-1, 1], got {dot}", "--dot")
        return CliInvocation("kernel-eval", dot=dot)
    if ns.subcommand == "selftest":
        seed = 0 if ns.seed is None else _parse_setting("seed", ns.seed)
        return CliInvocation("selftest", seed=seed)

    config_path, file_values = None, {}
    if ns.config:
        if len(ns.config) > 1:
            raise CliError("usage", "conflicting config sources: --config given more than once", "--config")
        config_path = Path(ns.config[0])
        file_values = read_config_file(config_path)
    inline = {k: getattr(ns, k) for k in _SETTINGS if getattr(ns, k) is not None}
    merged = {**file_values, **inline}
    parsed = {k: _parse_setting(k, v) for k, v in merged.items()}
    if "seed" not in parsed:
        raise CliError("usage", "missing required --seed (no default seed is used)", "--seed")
    seed = parsed.pop("seed")
    out = Path(parsed.pop("out", "results"))
    try:
        cfg = ExperimentConfig(kind=ns.subcommand, seed=seed, **parsed)
    except ResourceCapError as exc:
        raise CliError("resource", str(exc)) from exc
    except ValueError as exc:
        raise CliError("value", str(exc), _flag_for_message(str(exc))) from exc
    return CliInvocation(ns.subcommand, seed, out, config_path, file_values, inline, cfg, argv=argv)


def _parse_setting(key: str, value):
    flag, conv = _SETTINGS[key]
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise CliError("usage", f"bad value {value!r} for {flag}: {exc}", flag) from exc


def _flag_for_message(message: str) -> str | None:
    head = message.split()[0] if message else ""
    for key, (flag, _) in _SETTINGS.items():
        if head == key or message.startswith(key + " "):
            return flag
    return None


# --------------------------------------------------------------------------
# execution


def _selftest(seed: int) -> tuple[int, int, list[str]]:
    from .ntk_kls import kappa_from_cosine, kernel_matrix, kls_closed_form_onsample, kls_gd_run
    from .relu_net import forward, grad_risk, init_params, risk
    from .spectral_stop import SpectrumView, eigh_symmetric, empirical_critical_radius, rwy_stopping_time
    from .sphere_data import NoiseSpec, TargetSpec, generate_dataset, sample_sphere

    X = sample_sphere(24, 3, seed)
    data = generate_dataset(24, 3, TargetSpec.random("abs-linear", 3, 1.0, seed), NoiseSpec("rademacher", 0.5), seed)
    K = kernel_matrix(X).K
    lam, V = eigh_symmetric(K)
    p0 = init_params(16, 3, seed)

    def closed_vs_iter():
        a = kls_gd_run(K, data.y, 0.25, 50).onsample()
        b = kls_closed_form_onsample(K, data.y, 0.25, 50, eig=(lam, V))
        return np.linalg.norm(a - b) <= 1e-8 * max(np.linalg.norm(b), 1e-300)

    def flow_radius():
        dec = rwy_stopping_time(SpectrumView.from_eigenvalues(lam), 0.25, 0.5)
        return dec.T < 1 or 1.0 / (0.25 * dec.T) <= 2.0 * dec.r_hat

    def scalar_radius():
        s = SpectrumView.from_eigenvalues([1.0], n=1)
        return abs(empirical_critical_radius(s, 0.1) - (2 * math.e * 0.1) ** 2) <= 1e-10

    checks = {
        "zero-init": lambda: np.max(np.abs(forward(p0, X))) <= 1e-10,
        "kappa-diagonal": lambda: abs(kappa_from_cosine(1.0) - 0.5) <= 1e-12,
        "kappa-cosine-half": lambda: abs(kappa_from_cosine(0.5) - 1.0 / 6.0) <= 1e-12,
        "kernel-trace": lambda: abs(np.trace(K) / 24 - 0.5) <= 1e-12,
        "jacobi-reconstruction": lambda: np.linalg.norm(V @ np.diag(lam) @ V.T - K) <= 1e-8 * np.linalg.norm(K),
        "jacobi-orthonormal": lambda: np.max(np.abs(V.T @ V - np.eye(24))) <= 1e-9,
        "kernel-psd": lambda: lam[-1] >= -1e-10,
        "grad-bound": lambda: float(np.sum(grad_risk(p0, data) ** 2)) <= 4.0 * risk(p0, data) + 1e-12,
        "kls-closed-form": closed_vs_iter,
        "flow-radius": flow_radius,
        "scalar-radius": scalar_radius,
        "seeded-draws": lambda: np.array_equal(sample_sphere(24, 3, seed), X),
    }
    failed = []
    for name, check in checks.items():
        try:
            ok = bool(check())
        except Exception as exc:  # a crashing check counts as a failure
            log.debug("selftest %s raised %r", name, exc)
            ok = False
        if not ok:
            failed.append(name)
    return len(checks) - len(failed), len(failed), failed


def run(inv: CliInvocation) -> int:
    try:
        return _run(inv)
    except CliError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.exit_code


def _run(inv: CliInvocation) -> int:
    if inv.subcommand == "kernel-eval":
        from .ntk_kls import kappa_from_cosine

        print(repr(kappa_from_cosine(inv.dot)))
        return 0
    if inv.subcommand == "selftest":
        passed, failed, names = _selftest(inv.seed)
        print(f"selftest: {passed} passed, {failed} failed" + (f" ({', '.join(names)})" if names else ""))
        return 0 if failed == 0 else 1
    try:
        inv.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"cannot create output directory {inv.out}: {exc.strerror}", "--out") from exc
    start = time.perf_counter()
    try:
        result = run_experiment(inv.cfg)
    except ResourceCapError as exc:
        raise CliError("resource", str(exc)) from exc
    except ValueError as exc:
        raise CliError("value", str(exc)) from exc
    elapsed = time.perf_counter() - start
    extra = {
        "timing_seconds": elapsed,
        "config_file": str(inv.config_path) if inv.config_path else None,
        "config_file_values": inv.file_values,
        "inline_values": inv.inline_values,
        "argv": inv.argv,
    }
    try:
        csv_path, manifest_path = write_outputs(result, inv.out, extra)
    except OSError as exc:
        raise CliError("io", f"cannot write into {inv.out}: {exc.strerror}", "--out") from exc
    for name, fit in result.fits.items():
        print(f"{name}: slope={fit.slope:.4f} intercept={fit.intercept:.4f} r2={fit.r2:.4f} points={fit.count}")
    print(f"wrote {csv_path} and {manifest_path} in {elapsed:.1f}s")
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        inv = parse_invocation(argv)
    except CliError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.exit_code
    return run(inv)


if __name__ == "__main__":
    sys.exit(main())
