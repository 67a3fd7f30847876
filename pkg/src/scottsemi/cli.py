"""Command-line entry point: scottsemi {tf,scott,hydrogen,local-sc,verify}.

Every command writes its results plus ``manifest.json`` (configuration
echo and library versions) into ``--out``. Output is deterministic for a
given configuration and seed. Exit status: 0 success, 1 invalid
parameters, 2 numerical accuracy failure, 3 failed verification checks.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .errors import CheckFailure, ParameterError, ScottSemiError
from .scott import DEFAULT_SWEEP, emit_report, local_sc_study, scott_fit
from .spectral import (
    RadialGridConfig,
    RadialPotential,
    hydrogen_negative_sum_exact,
    phase_space_neg_integral,
    radial_negative_sum,
    semiclassical_density,
)
from .tf import TFAtom, poisson_residual, scaling_check, solve_tf_universal, tf_charge, tf_energy
from .verify import run_suite

log = logging.getLogger("scottsemi")

COMMANDS = ("tf", "scott", "hydrogen", "local-sc", "verify")


@dataclass
class RunConfig:
    """Merged configuration of one command run."""

    command: str
    z: float = 1.0
    h_list: tuple = DEFAULT_SWEEP
    grid: Optional[int] = None
    lmax_cap: int = 2000
    spin: int = 1
    a_exponent: float = 0.8
    out: str = "out"
    seed: int = 0
    threads: int = 1
    suite: str = "all"
    tolerance: Optional[float] = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}")
        if not (math.isfinite(self.z) and self.z > 0):
            raise ParameterError("z must be positive")
        if not self.h_list:
            raise ParameterError("h list is empty")
        for h in self.h_list:
            if not 0 < h < 1:
                raise ParameterError(f"h={h} must lie in (0, 1)")
        if self.grid is not None and self.grid < 64:
            raise ParameterError("grid sizes must be >= 64")
        if self.lmax_cap < 0:
            raise ParameterError("lmax cap must be nonnegative")
        if self.spin not in (1, 2):
            raise ParameterError("spin must be 1 or 2")
        if not 0 < self.a_exponent <= 1:
            raise ParameterError("a exponent must lie in (0, 1]")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["h_list"] = list(self.h_list)
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParameterError(message)


def _h_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise ParameterError(f"invalid h list {text!r}") from exc


_CASTS = {
    "z": float,
    "h_list": _h_list,
    "grid": int,
    "lmax_cap": int,
    "spin": int,
    "a_exponent": float,
    "out": str,
    "seed": int,
    "threads": int,
    "suite": str,
    "tolerance": float,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CASTS[key](value)
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: bad value for {key}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags take precedence")
    common.add_argument("--z", type=float, help="nuclear charge (default 1)")
    common.add_argument("--h-list", type=_h_list, help="comma separated h values")
    common.add_argument("--grid", type=int, help="node count override (>= 64)")
    common.add_argument("--lmax-cap", type=int, help="angular momentum cap (default 2000)")
    common.add_argument("--spin", type=int, choices=(1, 2), help="spin factor for densities (default 1)")
    common.add_argument("--a-exponent", type=float, help="a = h^-exponent (default 0.8)")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--seed", type=int, help="seed for randomized checks (default 0)")
    common.add_argument("--threads", type=int, help="worker cap (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="scottsemi", description="Semiclassical trace experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("tf", parents=[common], help="Thomas-Fermi table, energy and scaling check")
    sub.add_parser("scott", parents=[common], help="Scott coefficient from an h sweep")
    sub.add_parser("hydrogen", parents=[common], help="hydrogen solver against the closed form")
    sub.add_parser("local-sc", parents=[common], help="localized 3-D semiclassics study")
    v = sub.add_parser("verify", parents=[common], help="run property suites")
    v.add_argument("--suite", choices=("coherent", "localization", "spectral", "all"))
    v.add_argument("--tolerance", type=float, help="override every check tolerance")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if args.command == "local-sc" and "h_list" not in values:
        values["h_list"] = (0.2, 0.1, 0.05)
    if args.command == "hydrogen" and "h_list" not in values:
        values["h_list"] = (0.4, 0.2, 0.1)
    return RunConfig(command=args.command, **values).validate()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _manifest(cfg: RunConfig, outputs) -> dict:
    return {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "outputs": sorted(outputs),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def _write(out: Path, name: str, text: str, written: list):
    (out / name).write_text(text)
    written.append(name)


def _radial_config(cfg: RunConfig) -> RadialGridConfig:
    return RadialGridConfig(nodes=cfg.grid, l_max_cap=cfg.lmax_cap, threads=cfg.threads)


def cmd_tf(cfg: RunConfig, out: Path) -> int:
    uni = solve_tf_universal()
    atom = TFAtom(cfg.z, uni)
    count = cfg.grid or 6000
    energy = tf_energy(atom, count)
    r = np.geomspace(1e-3, 10.0, 41) * atom.length_scale
    h = 2.0**-0.5
    v = atom.potential(r)
    # semiclassical density at h = 2^-1/2 reproduces rho^TF (spin 2) or half of it
    rho_sc = semiclassical_density(-v, h, 3, spin=cfg.spin)
    target = atom.density(r) * cfg.spin / 2.0
    summary = {
        "z": cfg.z,
        "energy": energy,
        "energy_per_z73": energy / cfg.z ** (7.0 / 3.0),
        "charge": tf_charge(atom, count),
        "initial_slope": uni.initial_slope,
        "length_scale": atom.length_scale,
        "scaling_deviation": scaling_check(atom, 0.5),
        "poisson_residual_max": float(np.max(poisson_residual(atom, r))),
        "spin": cfg.spin,
        "density_identity_deviation": float(np.max(np.abs(rho_sc - target) / target)),
    }
    written = []
    _write(out, "tf_universal.csv", uni.to_csv(), written)
    _write(out, "tf_summary.json", _dump(summary), written)
    _write(out, "manifest.json", _dump(_manifest(cfg, written + ["manifest.json"])), [])
    print(f"E_TF({cfg.z:g}) = {energy:.10f}  E/z^(7/3) = {summary['energy_per_z73']:.10f}")
    return 0


def cmd_scott(cfg: RunConfig, out: Path) -> int:
    report = scott_fit(cfg.z, cfg.h_list, threads=cfg.threads, config=_radial_config(cfg))
    emit_report(report, out)
    written = ["scott.csv", "scott.json"]
    _write(out, "manifest.json", _dump(_manifest(cfg, written + ["manifest.json"])), [])
    if report.fitted is None:
        print(f"fit refused ({'; '.join(report.warnings)}); target {report.target:.6f}")
    else:
        print(f"fitted {report.fitted:.6f}  target {report.target:.6f}  rel_error {report.rel_error:.3e}")
    return 0


def cmd_hydrogen(cfg: RunConfig, out: Path) -> int:
    pot = RadialPotential.hydrogen(cfg.z)
    rows = []
    for h in sorted(cfg.h_list, reverse=True):
        s = radial_negative_sum(pot, h, _radial_config(cfg))
        ex = hydrogen_negative_sum_exact(cfg.z, h)
        sc = phase_space_neg_integral(pot, h, 3)
        rows.append(
            {
                "h": h,
                "solver_trace": s.weighted_sum,
                "exact_trace": ex.exact,
                "asymptotic": ex.asymptotic,
                "sc_integral": sc,
                "rel_error": abs(s.weighted_sum - ex.exact) / abs(ex.exact) if ex.exact else abs(s.weighted_sum),
                "h2_deficit": h * h * (ex.exact - sc),
                "l_max": s.l_max,
            }
        )
    cols = list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) for c in cols])
    written = []
    _write(out, "hydrogen.csv", buf.getvalue(), written)
    _write(out, "hydrogen.json", _dump({"z": cfg.z, "rows": rows}), written)
    _write(out, "manifest.json", _dump(_manifest(cfg, written + ["manifest.json"])), [])
    worst = max(r["rel_error"] for r in rows)
    print(f"max relative deviation from the closed form: {worst:.3e}")
    return 0


def cmd_local_sc(cfg: RunConfig, out: Path) -> int:
    study = local_sc_study(h_list=cfg.h_list, nodes=cfg.grid or 2000, threads=cfg.threads)
    written = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "trace", "sc_integral", "error"])
    for row in zip(study.h_list, study.traces, study.sc_integrals, study.errors):
        w.writerow([repr(float(v)) for v in row])
    _write(out, "local_sc.csv", buf.getvalue(), written)
    _write(out, "local_sc.json", _dump(study.to_dict()), written)
    _write(out, "manifest.json", _dump(_manifest(cfg, written + ["manifest.json"])), [])
    print(f"e(h) = {[f'{e:.4g}' for e in study.errors]}  slope {study.fitted_slope}")
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    records = run_suite(cfg.suite, cfg.seed, cfg.tolerance, exponent=cfg.a_exponent)
    failed = [r for r in records if not r.passed]
    written = []
    _write(out, "verify.json", _dump({"suite": cfg.suite, "seed": cfg.seed, "records": [r.to_dict() for r in records]}), written)
    _write(out, "manifest.json", _dump(_manifest(cfg, written + ["manifest.json"])), [])
    print(f"{len(records) - len(failed)}/{len(records)} checks passed")
    if failed:
        for r in failed:
            print(f"FAIL {r.check} {r.params} deviation={r.deviation:.3e} tolerance={r.tolerance:.1e}", file=sys.stderr)
        raise CheckFailure(f"{len(failed)} checks failed")
    return 0


HANDLERS = {
    "tf": cmd_tf,
    "scott": cmd_scott,
    "hydrogen": cmd_hydrogen,
    "local-sc": cmd_local_sc,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[cfg.command](cfg, out)
    except ScottSemiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
