"""Command-line front end: reproducible experiments with CSV/JSON/SVG output.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical-quality
failure (rejected basis, diverged solve, kernel tolerance unreachable).
Partial outputs are removed when a command fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .asymptotics import boundary_scan
from .config import ConfigError, ExperimentConfig, parse_config
from .domains import DomainError, boundary_point_at_depth
from .geodesics import estimate_epsilon, integrate, unit_speed_velocity
from .kernels import (
    KernelError,
    build_basis,
    midpoint_quadrature,
    polar_quadrature,
    save_basis,
)
from .metric import (
    MetricError,
    a_potential,
    bergman_metric,
    kf_metric,
    ricci,
)
from .spirals import LoopOptions, SpiralError, construct_spiral, find_loop
from .svg import render_svg

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


class _Emitter:
    """Tracks written files so failures leave no partial outputs."""

    def __init__(self, out_dir: Path, quiet: bool):
        self.out_dir = out_dir
        self.quiet = quiet
        self.written: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(path)
        if not self.quiet:
            print(f"wrote {path}")
        return path

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv(header: list[str], rows: list[list[str]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_metric_eval(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    provider = cfg.provider(domain)
    n = cfg["grid"]
    x0, y0, x1, y1 = domain.bounding_box
    rows = []
    for y in np.linspace(y0, y1, n):
        for x in np.linspace(x0, x1, n):
            z = complex(x, y)
            rho = domain.rho(z) if domain.in_neighborhood(z) else float("nan")
            cols = [float("nan")] * 6
            if domain.in_neighborhood(z) and rho < 0.0:
                try:
                    kj = provider.kernel.jet(z)
                    cols = [kj.k[0, 0].real, bergman_metric(kj),
                            a_potential(kj), kf_metric(kj), ricci(kj),
                            kj.truncation_error]
                except (KernelError, MetricError):
                    pass
            rows.append([_fmt(x), _fmt(y), _fmt(rho)] + [_fmt(c) for c in cols])
    em.write("metric_eval.csv",
             _csv(["x", "y", "rho", "K", "g", "A", "gtilde", "ric", "err"], rows))


def _trajectory_csv(traj, domain) -> str:
    rows = []
    n = len(traj.times)
    for i in range(n):
        z, v = complex(traj.zs[i]), complex(traj.vs[i])
        rho = domain.rho(z) if domain.in_neighborhood(z) else float("nan")
        reason = ""
        if i == n - 1 and traj.termination != "horizon":
            reason = traj.termination
        rows.append([
            _fmt(float(traj.times[i])), _fmt(z.real), _fmt(z.imag),
            _fmt(v.real), _fmt(v.imag), _fmt(rho), _fmt(float(traj.energy[i])),
            reason,
        ])
    return _csv(["t", "re_z", "im_z", "re_v", "im_v", "rho", "energy", "reason"],
                rows)


def cmd_geodesic(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    provider = cfg.cached_provider(domain)
    z0, theta = cfg["z0"], cfg["theta"]
    v0 = unit_speed_velocity(
        z0, complex(math.cos(theta), math.sin(theta)), provider)
    traj = integrate(domain, provider, z0, v0, (0.0, cfg["t_end"]),
                     rtol=cfg["rtol"], atol=cfg["atol"])
    em.write("trajectory.csv", _trajectory_csv(traj, domain))
    if len(traj.times) > 1:
        em.write("geodesic.svg", render_svg(domain, trajectory=traj))


def cmd_loops(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    provider = cfg.cached_provider(domain)
    opts = LoopOptions(t_max=cfg["t_max"], n_theta=cfg["n_theta"],
                       seg_time=cfg["seg_time"])
    lp = find_loop(domain, provider, cfg["z0"], cfg["winding"], opts)
    if not lp.converged:
        raise SpiralError(
            f"loop solve stagnated at residual {lp.residual:.3e}")
    em.write("loops.json", _json({
        "z0": [lp.z0.real, lp.z0.imag],
        "theta": lp.theta,
        "T": lp.T,
        "winding": list(lp.winding),
        "residual": lp.residual,
        "tangent_gap": lp.tangent_gap,
        "seed": cfg["seed"],
    }))


def cmd_spiral(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    provider = cfg.provider(domain)
    eps_hat = cfg["eps_hat"] if cfg["eps_hat"] > 0.0 else None
    traj, cert = construct_spiral(
        domain, provider, cfg["z0"], w_max=cfg["w_max"],
        horizon=cfg["horizon"], eps_hat=eps_hat,
        opts=LoopOptions(seg_time=cfg["seg_time"]),
    )
    em.write("spiral.json", _json({
        "z0": [cfg["z0"].real, cfg["z0"].imag],
        "theta": cert.theta_inf,
        "T": cert.horizon,
        "winding": None,
        "loop_thetas": list(cert.loop_thetas),
        "eps1": cert.eps1,
        "t0": cert.t0,
        "confinement_ok": cert.confinement_ok,
        "recurrence_gap": cert.recurrence_gap,
        "omega_radius_band": list(cert.omega_radius_band),
        "n_corrections": cert.n_corrections,
        "max_correction": cert.max_correction,
        "seed": cfg["seed"],
    }))
    em.write("spiral.svg",
             render_svg(domain, trajectory=traj, level=-cert.eps1 / 2.0))


def cmd_asymptotics(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    provider = cfg.provider(domain)
    depths = list(cfg["depths"]) or [10 ** e for e in np.linspace(-1, -3, 9)]
    report = boundary_scan(domain, provider, cfg["boundary_point"], depths)
    rows = []
    for r in report.rows:
        s = r.sample
        vals = ["nan"] * 9
        if s is not None:
            vals = [_fmt(v) for v in (
                s.abs_rho, s.h2, abs(s.frak_h_z), abs(s.frak_h_zzbar),
                abs(s.frak_h_z2zbar), abs(s.lemma23_i), abs(s.lemma23_ii),
                s.lemma23_iii, s.trunc_err)]
        rows.append([_fmt(r.depth)] + vals + ["1" if r.excluded else "0"])
    em.write("asymptotics.csv", _csv(
        ["depth", "abs_rho", "h2", "frak_h_z_abs", "frak_h_zzbar_abs",
         "frak_h_z2zbar_abs", "lemma23_i_abs", "lemma23_ii_abs",
         "lemma23_iii_abs", "trunc_err", "excluded"], rows))
    em.write("asymptotics.json", _json({"fits": report.fits,
                                        "seed": cfg["seed"]}))


def cmd_epsilon(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    provider = cfg.provider(domain)
    depths = list(cfg["depths"]) or None
    est = estimate_epsilon(domain, provider, depths,
                           n_angles=cfg["n_angles"])
    em.write("epsilon.json", _json({
        "eps_hat": est.eps_hat,
        "samples": est.samples,
        "min_second_derivative": est.min_second_derivative,
        "profile": [[d, v, [bp.real, bp.imag]] for d, v, bp in est.profile],
        "seed": cfg["seed"],
    }))


def cmd_basis_build(cfg: ExperimentConfig, em: _Emitter) -> None:
    domain = cfg.domain()
    if domain.kind == "generic":
        quad = midpoint_quadrature(domain, cfg["quad_nx"], cfg["quad_ny"])
    else:
        r_in = domain.r if domain.r is not None else 0.0
        quad = polar_quadrature(r_in, 1.0, cfg["quad_nr"], cfg["quad_ntheta"])
    basis = build_basis(domain, cfg["onb_n"], quad)
    path = save_basis(basis)
    if not em.quiet:
        print(f"saved basis to {path}")
    em.write("basis.json", _json({
        "path": str(path),
        "n_basis": int(basis.coeffs.shape[0]),
        "n_raw": int(basis.coeffs.shape[1]),
        "gram_residual": basis.gram_residual,
        "truncation": basis.truncation,
        "quadrature": basis.quadrature_spec,
        "domain_hash": basis.domain_hash,
        "seed": cfg["seed"],
    }))


_COMMANDS = {
    "metric-eval": cmd_metric_eval,
    "geodesic": cmd_geodesic,
    "loops": cmd_loops,
    "spiral": cmd_spiral,
    "asymptotics": cmd_asymptotics,
    "epsilon": cmd_epsilon,
    "basis-build": cmd_basis_build,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="kofuks", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--provider", type=str, default=None)
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config is not None:
            cfg = parse_config(Path(args.config).read_text())
        else:
            cfg = ExperimentConfig()
        if args.seed is not None:
            cfg.set("seed", args.seed)
        if args.provider is not None:
            cfg.set("provider", args.provider)
        if args.out is not None:
            cfg.set("out", str(args.out))
        out_dir = Path(cfg["out"])
    except (_UsageError, ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    em = _Emitter(out_dir, args.quiet)
    try:
        _COMMANDS[args.command](cfg, em)
    except (ConfigError, DomainError) as exc:
        em.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KernelError, MetricError, SpiralError, ValueError,
            np.linalg.LinAlgError) as exc:
        em.rollback()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
