"""Command line interface.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (including a
domain that is not pseudoconvex on the sampled boundary).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .crmap import (MapSpec, check_alpha_invariance, check_levi_pushforward, check_rescaling,
                    invariance_experiment, negative_control, pullback_domain, transport_sigma)
from .dangelo import alpha_at
from .domains import DomainSpec, load_domain, load_map_text, parse_builtin_arg, worm
from .errors import CrIndexError, NotPseudoconvexError, NumericalError, ValidationError
from .expr import parse
from .geometry import (DEFAULT_TOL_LEVI, classify, find_weak_points, frame_at, levi_at,
                       sample_boundary)
from .indices import (TOL_A, TOL_B, PsiFamily, SigmaData, df_threshold, index_report,
                      oracle_exponent, oracle_samples, steinness_threshold, weak_set)
from .jet import fd_check

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class RunConfig:
    command: str
    builtin: str | None = None
    domain: str | None = None
    map: str | None = None
    samples: int = 2000
    seed: int = 0
    strategy: str = "random"
    tol_levi: float = DEFAULT_TOL_LEVI
    tol_a: float = TOL_A
    tol_b: float = TOL_B
    fd_step: float = 1e-4
    bisect_tol: float = 1e-3
    optimize: bool = False
    budget: int = 2000
    psi_basis: str = "default"
    psi: str | None = None
    side: str = "both"
    beta: list = field(default_factory=list)
    out: str | None = None
    format: str = "json"

    def validate(self):
        for name in ("tol_levi", "tol_a", "tol_b", "fd_step", "bisect_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.samples <= 0:
            raise ValidationError("samples must be positive")
        if self.budget < 0:
            raise ValidationError("budget must be nonnegative")


# ------------------------------------------------------------ serialization


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        if math.isnan(x):
            return "NaN"
        return x
    if hasattr(obj, "__dataclass_fields__"):
        return to_jsonable(asdict(obj))
    return obj


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _coord_columns(n: int, prefix: str = "") -> list[str]:
    out = []
    for j in range(1, n + 1):
        out += [f"{prefix}x{j}", f"{prefix}y{j}"]
    return out


def _coords(z, prefix: str = "") -> dict:
    out = {}
    for j, c in enumerate(z, 1):
        out[f"{prefix}x{j}"] = float(c.real)
        out[f"{prefix}y{j}"] = float(c.imag)
    return out


# ------------------------------------------------------------ commands


def _domain(cfg: RunConfig) -> DomainSpec:
    if (cfg.builtin is None) == (cfg.domain is None):
        raise ValidationError("give exactly one of --builtin or --domain")
    if cfg.builtin is not None:
        return parse_builtin_arg(cfg.builtin)
    return load_domain(cfg.domain)


def _family(cfg: RunConfig, spec: DomainSpec) -> PsiFamily:
    if cfg.psi_basis == "none":
        return PsiFamily([], [])
    return PsiFamily.for_domain(spec, cfg.psi_basis)


def _sigma_records(spec, sigma, psi=None, tolA=TOL_A, tolB=TOL_B):
    data = SigmaData(spec, sigma)
    A, B = data.ab(psi=psi)
    records = []
    k = 0
    for p, c in zip(sigma.points, sigma.classes):
        for v in c.null_dirs:
            records.append({"p": p, "eigenvalue_min": c.lambda_min, "null_dir": v,
                            "A": A[k], "B": B[k],
                            "df_threshold": df_threshold(A[k], B[k], tolA, tolB),
                            "st_threshold": steinness_threshold(A[k], B[k], tolA, tolB)})
            k += 1
    return records


def cmd_index(cfg: RunConfig, spec: DomainSpec):
    which = ("df",) if cfg.command == "df" else ("steinness",)
    sigma = weak_set(spec, cfg.samples, cfg.seed, cfg.strategy, cfg.tol_levi)
    family = _family(cfg, spec) if cfg.optimize else PsiFamily([], [])
    budget = cfg.budget if cfg.optimize else 0
    rep = index_report(spec, cfg.samples, cfg.seed, family, budget, which,
                       cfg.tol_a, cfg.tol_b, cfg.tol_levi, cfg.strategy, sigma)
    theta = rep.df_theta if cfg.command == "df" else rep.st_theta
    psi = family.expr(theta) if family.dim and any(theta) else None
    records = _sigma_records(spec, sigma, psi, cfg.tol_a, cfg.tol_b)
    report = {"pseudoconvex": True, "sample_count": rep.sample_count,
              "sigma_count": rep.sigma_count, "pair_count": rep.pair_count,
              "psi_labels": rep.psi_labels, "sigma_points": records,
              "warnings": rep.warnings}
    if cfg.command == "df":
        report.update(df_lower=rep.df_lower, theta=rep.df_theta, witness=rep.df_witness,
                      baseline=rep.baseline_df)
    else:
        report.update(st_upper=rep.st_upper, theta=rep.st_theta, witness=rep.st_witness,
                      baseline=rep.baseline_st)
    cols = _coord_columns(spec.n) + [f"v{j}_{part}" for j in range(1, spec.n + 1)
                                     for part in ("re", "im")] + \
        ["eigenvalue_min", "A", "B", "df_threshold", "st_threshold"]
    rows = []
    for r in records:
        row = _coords(r["p"])
        for j, c in enumerate(r["null_dir"], 1):
            row[f"v{j}_re"], row[f"v{j}_im"] = float(c.real), float(c.imag)
        row.update({k: r[k] for k in ("eigenvalue_min", "A", "B", "df_threshold",
                                      "st_threshold")})
        rows.append(row)
    return report, rows, cols


def cmd_analyze(cfg: RunConfig, spec: DomainSpec):
    bs = sample_boundary(spec, cfg.strategy, cfg.samples, cfg.seed)
    pts = bs.points
    w = spec.wirtinger(pts, order=2)
    f = frame_at(w, pts)
    levi = levi_at(w, f)
    classes = classify(levi, cfg.tol_levi, seed=cfg.seed)
    form = alpha_at(w, f)
    alpha_T = form.on(f.Ln, -np.conj(f.Ln))
    omega_t = np.einsum("mj,mja->ma", form.a, f.tangent_basis)
    rows = []
    for i, c in enumerate(classes):
        row = _coords(pts[i])
        row.update(kind=c.kind, lambda_min=float(levi.lambda_min[i]),
                   lambda_scale=float(levi.lambda_scale[i]),
                   grad_norm=float(f.grad_norm[i]), alpha_T=float(abs(alpha_T[i])),
                   omega_tangent=float(np.linalg.norm(omega_t[i])))
        rows.append(row)
    sigma = find_weak_points(spec, bs, cfg.tol_levi, seed=cfg.seed)
    fd = max((fd_check(spec.rho, z, spec.params, cfg.fd_step) for z in pts[:10]), default=0.0)
    counts = {k: sum(1 for c in classes if c.kind == k)
              for k in ("strict", "weak", "nonpseudoconvex")}
    report = {"boundary_points": len(pts), "max_nn_gap": bs.max_nn_gap, "counts": counts,
              "refined_weak_points": len(sigma), "jet_fd_check": fd,
              "pseudoconvex": not sigma.nonpseudoconvex and counts["nonpseudoconvex"] == 0,
              "nonpseudoconvex_witnesses": [{"p": p, "eigenvalue": lam}
                                            for p, lam in sigma.nonpseudoconvex[:10]],
              "sigma_points": _sigma_records(spec, sigma, None, cfg.tol_a, cfg.tol_b),
              "warnings": bs.warnings}
    cols = _coord_columns(spec.n) + ["kind", "lambda_min", "lambda_scale", "grad_norm",
                                     "alpha_T", "omega_tangent"]
    return report, rows, cols


def cmd_oracle(cfg: RunConfig, spec: DomainSpec):
    psi = parse(cfg.psi, spec.n) if cfg.psi else None
    bs = sample_boundary(spec, cfg.strategy, cfg.samples, cfg.seed)
    sigma = find_weak_points(spec, bs, cfg.tol_levi, seed=cfg.seed)
    boundary = np.concatenate([bs.points, sigma.points])
    sides = ("interior", "exterior") if cfg.side == "both" else (cfg.side,)
    report = {"psi": cfg.psi or "0", "oracle": {}}
    rows = []
    for side in sides:
        z = oracle_samples(spec, side, boundary, cfg.samples, cfg.seed)
        res = oracle_exponent(spec, psi, side, z, cfg.bisect_tol)
        key = "oracle_df" if side == "interior" else "oracle_st"
        report["oracle"][key] = asdict(res)
        rows.append({"side": side, "exponent": res.exponent, "samples": res.samples,
                     "iterations": res.iterations, "monotone": res.monotone})
    return report, rows, ["side", "exponent", "samples", "iterations", "monotone"]


def cmd_cr_check(cfg: RunConfig, spec2: DomainSpec):
    if cfg.map is None:
        raise ValidationError("cr-check needs --map")
    m = MapSpec.from_text(load_map_text(cfg.map))
    spec1 = pullback_domain(m, spec2)
    sigma2 = weak_set(spec2, cfg.samples, cfg.seed, cfg.strategy, cfg.tol_levi)
    bs1 = sample_boundary(spec1, cfg.strategy, max(cfg.samples // 4, 50), cfg.seed)
    m.validate(bs1.points)
    sigma1 = transport_sigma(m, spec1, sigma2, cfg.tol_levi, cfg.seed)
    suites = [check_levi_pushforward(m, spec1, spec2, bs1.points, seed=cfg.seed),
              check_alpha_invariance(m, spec1, spec2, sigma1),
              negative_control(m, spec1, spec2, bs1.points, seed=cfg.seed)]
    if cfg.psi:
        suites.append(check_rescaling(spec2, parse(cfg.psi, spec2.n), sigma2))
    report = {"residual_suites": {s.name: s.to_dict() for s in suites},
              "max_residual": max(s.max_residual for s in suites
                                  if s.name != "negative_control"),
              "sigma_counts": [len(sigma1), len(sigma2)]}
    if cfg.optimize:
        res = invariance_experiment(m, spec2, _family(cfg, spec2), cfg.budget, cfg.seed,
                                    cfg.samples, cfg.tol_levi)
        report["invariance"] = {"df": res.df, "st": res.st, "delta_df": res.delta_df,
                                "delta_st": res.delta_st}
    rows = [{"suite": s.name, "max_residual": s.max_residual, "count": s.count,
             "vacuous": s.vacuous} for s in suites]
    return report, rows, ["suite", "max_residual", "count", "vacuous"]


def cmd_worm_sweep(cfg: RunConfig, _spec=None):
    if not cfg.beta:
        raise ValidationError("worm-sweep needs --beta")
    rows = []
    for beta in cfg.beta:
        spec = worm(beta)
        family = _family(cfg, spec) if cfg.optimize else PsiFamily([], [])
        rep = index_report(spec, cfg.samples, cfg.seed, family,
                           cfg.budget if cfg.optimize else 0, ("df", "steinness"),
                           cfg.tol_a, cfg.tol_b, cfg.tol_levi, cfg.strategy)
        df, st = rep.df_lower, rep.st_upper
        recip = (1 / df if df > 0 else math.inf) + (1 / st if st > 0 else math.inf)
        rows.append({"beta": beta, "df_lower": df, "st_upper": st, "sum_reciprocal": recip,
                     "sigma_count": rep.sigma_count})
    report = {"rows": rows}
    return report, rows, ["beta", "df_lower", "st_upper", "sum_reciprocal", "sigma_count"]


COMMANDS = {"analyze": cmd_analyze, "df": cmd_index, "steinness": cmd_index,
            "oracle": cmd_oracle, "cr-check": cmd_cr_check, "worm-sweep": cmd_worm_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crindex", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"crindex {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--builtin", help="e.g. ball, complex_ellipsoid:m=2, worm:beta=2.0")
        s.add_argument("--domain", help="domain file")
        s.add_argument("--map", help="map file (cr-check)")
        s.add_argument("--samples", type=int, default=2000)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--strategy", choices=("random", "grid"), default="random")
        s.add_argument("--tol-levi", type=float, default=DEFAULT_TOL_LEVI)
        s.add_argument("--tol-a", type=float, default=TOL_A)
        s.add_argument("--tol-b", type=float, default=TOL_B)
        s.add_argument("--bisect-tol", type=float, default=1e-3)
        s.add_argument("--fd-step", type=float, default=1e-4)
        s.add_argument("--optimize", action="store_true")
        s.add_argument("--budget", type=int, default=2000)
        s.add_argument("--psi-basis", default="default",
                       choices=("default", "poly1", "poly2", "worm", "none"))
        s.add_argument("--psi", help="fixed psi expression (oracle, cr-check rescaling suite)")
        s.add_argument("--side", choices=("interior", "exterior", "both"), default="both")
        s.add_argument("--beta", type=_float_list, default=[],
                       help="comma separated worm parameters (worm-sweep)")
        s.add_argument("--out", help="output file (default: stdout)")
        s.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    try:
        cfg.validate()
        spec = None if cfg.command == "worm-sweep" else _domain(cfg)
        report, rows, cols = COMMANDS[cfg.command](cfg, spec)
        payload = {"tool": "crindex", "version": __version__, "config": asdict(cfg),
                   "seed": cfg.seed, "domain": spec.describe() if spec else None, **report}
        if cfg.format == "csv":
            _emit(write_csv(rows, cols), cfg.out)
        else:
            _emit(json.dumps(to_jsonable(payload), indent=2) + "\n", cfg.out)
        return EXIT_OK
    except ValidationError as exc:
        _error(cfg, exc, EXIT_INVALID)
        return EXIT_INVALID
    except NotPseudoconvexError as exc:
        _error(cfg, exc, EXIT_NUMERICAL, {"pseudoconvex": False, "witness": exc.witness})
        return EXIT_NUMERICAL
    except NumericalError as exc:
        _error(cfg, exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except BrokenPipeError:
        return EXIT_OK
    except OSError as exc:
        _error(cfg, exc, EXIT_INVALID)
        return EXIT_INVALID


def _error(cfg, exc, code, extra=None):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code,
               "config": asdict(cfg), **(extra or {})}
    sys.stderr.write(json.dumps(to_jsonable(payload)) + "\n")


def main():  # pragma: no cover
    sys.exit(run())


__all__ = ["run", "main", "RunConfig", "build_parser", "CrIndexError"]
