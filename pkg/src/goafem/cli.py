"""Command-line driver: one adaptive run per invocation.

Artifacts written to ``--out``:

``history.csv``
    one row per level.
``mesh_L.txt``
    mesh of level ``L`` with its indicators (only with ``--emit-mesh``).
``ratefit.txt``
    least-squares slopes over the final levels and the optimal target.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .adaptivity import ConvergenceHistory, optimal_slope, rate_fit, run_adaptive
from .estimators import EstimatorKind
from .linear_solve import SingularSystemError
from .problems import catalog


class ConfigError(ValueError):
    """Malformed or out-of-range configuration value."""


@dataclass(frozen=True)
class RunConfig:
    problem: str = "cross_diffusion"
    estimator: str = "goa-residual"
    p: int = 1
    dp: int = 0
    epsilon: int = -1
    gamma: float = 0.0
    theta: float = 0.2
    levels: int | None = None  # None: the catalog default
    ndof_cap: int | None = None
    out: str = "."
    emit_mesh: bool = False

    def validate(self) -> "RunConfig":
        names = catalog()
        if self.problem not in names:
            raise ConfigError(
                f"unknown problem {self.problem!r}; catalog: {', '.join(sorted(names))}"
            )
        try:
            EstimatorKind.parse(self.estimator)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.dp not in (0, 1):
            raise ConfigError("dp must be 0 or 1")
        if self.epsilon not in (-1, 1):
            raise ConfigError("epsilon must be -1 (SIP) or 1 (NIP)")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError("theta must lie in (0, 1]")
        if self.levels is not None and self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.ndof_cap is not None and self.ndof_cap < 1:
            raise ConfigError("ndof-cap must be positive")
        if not (math.isfinite(self.gamma) and self.gamma >= 0.0):
            raise ConfigError("gamma must be a finite nonnegative number")
        return self


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


_CONVERTERS = {
    "problem": str,
    "estimator": str,
    "p": int,
    "dp": int,
    "epsilon": int,
    "gamma": float,
    "theta": float,
    "levels": _optional_int,
    "ndof_cap": _optional_int,
    "out": str,
    "emit_mesh": _bool,
}


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{n}: bad value for {key}: {exc}") from None
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="goafem", description="Goal-oriented adaptive residual minimization.")
    # defaults are None so that only explicit flags override the config file
    ap.add_argument("--problem")
    ap.add_argument("--estimator", choices=[k.value for k in EstimatorKind])
    ap.add_argument("--p", type=int)
    ap.add_argument("--dp", type=int)
    ap.add_argument("--epsilon", type=int)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--theta", type=float)
    ap.add_argument("--levels", type=int)
    ap.add_argument("--ndof-cap", dest="ndof_cap", type=int)
    ap.add_argument("--out")
    ap.add_argument("--emit-mesh", dest="emit_mesh", action="store_const", const=True)
    ap.add_argument("--config", help="flat 'key = value' file; flags take precedence")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_config(args=None, config_file=None) -> RunConfig:
    """Merge defaults, config file values and command-line flags, in that order."""
    ns = build_parser().parse_args([] if args is None else list(args))
    values = {}
    path = config_file or ns.config
    if path is not None:
        values.update(read_config_file(path))
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    return replace(RunConfig(), **values).validate()


def _write_ratefit(path, hist, p, r) -> None:
    errs = hist.column("rel_err")
    label = "rel_err"
    if not any(math.isfinite(e) and e > 0 for e in errs):
        errs, label = hist.column("estimate"), "estimate"
    ndofs = hist.column("ndofs")
    k = min(6, len(ndofs))
    s_sqrt = rate_fit(ndofs, errs, last=6)
    target = optimal_slope(p, r)
    lines = [
        f"quantity = {label}",
        f"levels_used = {k}",
        f"slope_vs_sqrt_ndofs = {s_sqrt:.6g}",
        f"slope_vs_ndofs = {0.5 * s_sqrt:.6g}",
        f"optimal_slope_vs_sqrt_ndofs = {target:.6g}",
        f"optimal_slope_vs_ndofs = {0.5 * target:.6g}",
        f"status = {hist.status}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def run(config: RunConfig) -> int:
    """Execute one adaptive run; returns the process exit status."""
    entry = catalog()[config.problem]
    kw = {"epsilon": config.epsilon, "gamma": config.gamma}
    prob = entry.problem(**kw)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    levels = config.levels or entry.default_levels
    status = 0
    hist = ConvergenceHistory()
    try:
        run_adaptive(
            prob,
            config.estimator,
            p=config.p,
            delta_p=config.dp,
            theta=config.theta,
            max_levels=levels,
            initial_mesh=entry.initial_mesh(),
            ndof_cap=config.ndof_cap,
            mesh_dir=out if config.emit_mesh else None,
            history=hist,
        )
    except (SingularSystemError, MemoryError) as exc:
        print(f"goafem: solver failure: {exc}", file=sys.stderr)
        status = 3
    hist.write_csv(out / "history.csv")
    if hist.records:
        _write_ratefit(out / "ratefit.txt", hist, config.p, entry.regime(**kw))
    if status == 0 and hist.status != "completed":
        print(f"goafem: stopped early ({hist.status})", file=sys.stderr)
        status = 1
    return status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"goafem: {exc}", file=sys.stderr)
        return 2
    if "-v" in argv or "--verbose" in argv:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
