"""Command-line front end: ``mcrelax synth | solve | round | certify | coarea``.

Exit codes: 0 success, 2 invalid input or configuration, 3 solver did not
converge or the rounding budget was exhausted, 4 file system error.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numba
import numpy as np

from . import __version__
from .certify import CertificateError, check_bound, coarea_check_two_class
from .core import ValidationError, uniform_metric
from .io import (read_dual, read_ppm, read_problem, read_solution, write_dual, write_pgm,
                 write_problem, write_solution)
from .phantoms import (PHANTOMS, noisy_prototypes, random_costs, stripes, triple_junction,
                       two_class_split)
from .regularizer import (AnisoMetricL1, DlocProjectionConfig, MetricEnvelope, PottsFrobenius,
                          dual_violation, make_dual_feasible)
from .rng import RngSpec
from .rounding import RoundingBudgetError, estimate_expectation
from .schema import CONFIG_SCHEMA, REPORT_SCHEMA
from .solver import SolverConfig, dual_energy, energy_report, solve

EXIT_OK, EXIT_INVALID, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

DEFAULT_CONFIG = {
    "regularizer": {"variant": "potts"},
    "solver": {},
    "rounding": {"seed": 0, "stream": 0, "n_samples": 1000},
    "io": {},
    "coarea": {"n_alpha": [10, 100, 1000]},
    "data": {"shift_to_nonnegative": False},
}

DUAL_TOL = 1e-8


class ConvergenceFailure(RuntimeError):
    """Raised after outputs are written when the solver missed its tolerance."""


# --------------------------------------------------------------------------- config

def load_config(path: str | None) -> dict:
    """Schema-validated config merged over :data:`DEFAULT_CONFIG`."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    try:
        jsonschema.validate(user, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config error at {where}: {exc.message}") from None
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in user.items():
        cfg[section].update(values)
    return cfg


def make_kind(reg: dict, n_labels: int):
    variant = reg["variant"]
    if variant == "potts":
        if "metric" in reg:
            raise ValidationError("the potts variant takes a weight, not a metric")
        return PottsFrobenius(reg["weight"]) if "weight" in reg else PottsFrobenius()
    if "metric" in reg and "weight" in reg:
        raise ValidationError("give either a metric matrix or a uniform weight, not both")
    metric = reg["metric"] if "metric" in reg else uniform_metric(n_labels, reg.get("weight", 1.0))
    kind = MetricEnvelope(metric) if variant == "metric" else AnisoMetricL1(metric)
    if kind.n_labels != n_labels:
        raise ValidationError(f"metric has {kind.n_labels} labels, problem has {n_labels}")
    return kind


def kind_summary(kind) -> dict:
    if isinstance(kind, PottsFrobenius):
        return {"variant": "potts", "weight": kind.weight}
    variant = "metric" if isinstance(kind, MetricEnvelope) else "aniso-metric"
    return {"variant": variant, "metric": kind.metric.tolist()}


def solver_config(cfg: dict) -> SolverConfig:
    opts = dict(cfg["solver"])
    dloc = DlocProjectionConfig(**{k[5:]: opts.pop(k) for k in list(opts) if k.startswith("dloc_")})
    return SolverConfig(dloc_cfg=dloc, **opts)


def _path(args, cfg: dict, name: str, required: bool = True) -> str | None:
    value = getattr(args, name, None) or cfg["io"].get(name)
    if value is None and required:
        raise ValidationError(f"missing --{name} (or io.{name} in the config)")
    return value


# --------------------------------------------------------------------------- reports

def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(cfg: dict, inputs: dict[str, str]) -> dict:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "inputs": {name: _sha256_file(p) for name, p in sorted(inputs.items())},
        "versions": {"mcrelax": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "numba": numba.__version__},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _close(a: float, b: float, rtol: float = 1e-9) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


def check_report(report: dict) -> None:
    """Validate against :data:`REPORT_SCHEMA` and check that sums match their parts."""
    jsonschema.validate(report, REPORT_SCHEMA)
    en = report.get("energies")
    if en is not None:
        if not _close(en["primal"], en["data_part"] + en["reg_part"]):
            raise ValidationError("report energies: primal != data + reg")
        if not _close(en["gap"], en["primal"] - en["dual"]):
            raise ValidationError("report energies: gap != primal - dual")
    rd = report.get("rounding")
    if rd is not None and not _close(rd["mean_f"], rd["mean_data"] + rd["mean_reg"]):
        raise ValidationError("report rounding: mean_f != mean_data + mean_reg")


def report_hash(report: dict) -> str:
    """Hash of a report with the timestamp removed."""
    clean = copy.deepcopy(report)
    clean["provenance"].pop("timestamp", None)
    return hashlib.sha256(json.dumps(clean, sort_keys=True).encode()).hexdigest()


def write_report(path, report: dict) -> None:
    check_report(report)
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _finite(x):
    """JSON-safe float (infinities are reported as None)."""
    return x if x is None or math.isfinite(x) else None


# --------------------------------------------------------------------------- commands

def _prototypes(text: str) -> np.ndarray:
    try:
        protos = np.array([[float(v) for v in item.split(",")] for item in text.split(";")])
    except ValueError:
        raise ValidationError(f"bad --prototypes {text!r}; expected 'r,g,b;r,g,b;...'") from None
    if protos.ndim != 2:
        raise ValidationError("all prototypes need the same number of channels")
    return protos


def cmd_synth(args, cfg: dict) -> int:
    rng = RngSpec(args.seed if args.seed is not None else 0, args.stream)
    w, h = args.width, args.height
    if args.phantom == "two-class-split":
        s = two_class_split(w, h, args.contrast, args.noise, rng)
    elif args.phantom == "triple-junction":
        s = triple_junction(w, h, args.contrast, args.noise, args.hole, rng)
    elif args.phantom == "stripes":
        s = stripes(w, h, args.labels, args.period, args.contrast, args.noise, rng)
    elif args.phantom == "random":
        s = random_costs(w, h, args.labels, args.scale, args.power, rng)
    else:
        if args.image is None or args.prototypes is None:
            raise ValidationError("noisy-prototypes needs --image and --prototypes")
        s = noisy_prototypes(read_ppm(args.image), _prototypes(args.prototypes), args.noise, rng)
    out = _path(args, cfg, "out")
    write_problem(out, s)
    height, width, labels = s.shape
    print(f"wrote {out}: {width}x{height}, {labels} labels")
    return EXIT_OK


def _load_problem(args, cfg: dict) -> tuple[np.ndarray, str, bool]:
    path = _path(args, cfg, "problem")
    shift = cfg["data"]["shift_to_nonnegative"]
    s = read_problem(path, allow_negative=shift)
    shifted = bool(shift and (s < 0).any())
    if shifted:
        s = s - s.min(axis=-1, keepdims=True)
    return s, path, shifted


def _shape(s: np.ndarray) -> dict:
    height, width, labels = s.shape
    return {"width": width, "height": height, "labels": labels}


def _load_solution(args, cfg: dict, s: np.ndarray) -> tuple[np.ndarray, str]:
    path = _path(args, cfg, "solution")
    u = read_solution(path)
    if u.shape != s.shape:
        raise ValidationError(f"solution shape {u.shape} does not match problem {s.shape}")
    return u, path


def _rng(args, cfg: dict) -> RngSpec:
    seed = args.seed if args.seed is not None else cfg["rounding"]["seed"]
    return RngSpec(seed, cfg["rounding"]["stream"])


def _samples(args, cfg: dict) -> int:
    return args.samples if args.samples is not None else cfg["rounding"]["n_samples"]


def _rounding_dict(stats, rng: RngSpec) -> dict:
    out = stats.as_dict()
    out.update(seed=rng.seed, stream=rng.stream)
    return out


def cmd_solve(args, cfg: dict) -> int:
    s, ppath, shifted = _load_problem(args, cfg)
    kind = make_kind(cfg["regularizer"], s.shape[-1])
    res = solve(s, kind, solver_config(cfg))
    out = Path(_path(args, cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    p = make_dual_feasible(kind, res.p)
    write_solution(out / "solution.mcsf", res.u)
    write_dual(out / "dual.mcdl", p)
    energies = res.report.as_dict()
    energies["rel_gap"] = _finite(energies["rel_gap"])
    report = {
        "command": "solve", "shape": _shape(s), "regularizer": kind_summary(kind),
        "energies": energies,
        "solver": {"iterations": res.iterations, "converged": res.converged,
                   "log": [[it, pr, du, _finite(rg)] for it, pr, du, rg in res.log]},
        "provenance": provenance(cfg, {"problem": ppath}),
    }
    write_report(out / "report.json", report)
    print(f"solve: {res.iterations} iterations, primal {res.report.primal:.6g}, "
          f"dual {res.report.dual:.6g}, rel_gap {res.report.rel_gap:.3g}")
    if not res.converged:
        raise ConvergenceFailure(f"solver stopped at rel_gap {res.report.rel_gap:.3g} "
                                 f"> gap_tol {solver_config(cfg).gap_tol:g}")
    return EXIT_OK


def cmd_round(args, cfg: dict) -> int:
    s, ppath, _ = _load_problem(args, cfg)
    u, upath = _load_solution(args, cfg, s)
    kind = make_kind(cfg["regularizer"], s.shape[-1])
    rng = _rng(args, cfg)
    stats = estimate_expectation(u, s, kind, _samples(args, cfg), rng,
                                 k_max=cfg["rounding"].get("k_max"),
                                 dloc_cfg=solver_config(cfg).dloc_cfg)
    out = Path(_path(args, cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "labels.pgm", stats.best_labels, s.shape[-1])
    report = {
        "command": "round", "shape": _shape(s), "regularizer": kind_summary(kind),
        "rounding": _rounding_dict(stats, rng),
        "provenance": provenance(cfg, {"problem": ppath, "solution": upath}),
    }
    write_report(out / "report.json", report)
    print(f"round: {stats.n_samples} samples, mean f {stats.mean_f:.6g}, best f {stats.min_f:.6g}")
    return EXIT_OK


def cmd_certify(args, cfg: dict) -> int:
    s, ppath, shifted = _load_problem(args, cfg)
    u, upath = _load_solution(args, cfg, s)
    kind = make_kind(cfg["regularizer"], s.shape[-1])
    dpath = _path(args, cfg, "dual")
    p = read_dual(dpath)
    if p.shape != s.shape[:2] + (2, s.shape[-1]):
        raise ValidationError(f"dual shape {p.shape} does not match problem {s.shape}")
    viol = dual_violation(kind, p)
    if viol > DUAL_TOL:
        raise CertificateError(f"dual field infeasible: max violation {viol:.3e} "
                               f"exceeds {DUAL_TOL:.0e}")
    p = make_dual_feasible(kind, p)
    f_dual = dual_energy(p, s)
    rng = _rng(args, cfg)
    dloc_cfg = solver_config(cfg).dloc_cfg
    stats = estimate_expectation(u, s, kind, _samples(args, cfg), rng,
                                 k_max=cfg["rounding"].get("k_max"), dloc_cfg=dloc_cfg)
    cert = check_bound(u, s, stats, kind, f_dual=f_dual, dloc_cfg=dloc_cfg, data_shifted=shifted)
    energies = energy_report(u, p, s, kind, dloc_cfg).as_dict()
    energies["rel_gap"] = _finite(energies["rel_gap"])
    cert_dict = cert.as_dict()
    cert_dict["dual_violation"] = viol
    report = {
        "command": "certify", "shape": _shape(s), "regularizer": kind_summary(kind),
        "energies": energies, "rounding": _rounding_dict(stats, rng), "certificate": cert_dict,
        "provenance": provenance(cfg, {"problem": ppath, "solution": upath, "dual": dpath}),
    }
    out = _path(args, cfg, "out")
    write_report(out, report)
    print(f"certify: factor {cert.a_priori_factor:.6g}, eps' {cert.eps_posteriori:.4g}, "
          f"bound {'satisfied' if cert.bound_check.satisfied else 'VIOLATED'}")
    return EXIT_OK


def cmd_coarea(args, cfg: dict) -> int:
    s, ppath, _ = _load_problem(args, cfg)
    u, upath = _load_solution(args, cfg, s)
    kind = make_kind(cfg["regularizer"], s.shape[-1])
    dloc_cfg = solver_config(cfg).dloc_cfg
    rows = []
    for n in cfg["coarea"]["n_alpha"]:
        res = coarea_check_two_class(u, s, kind, n, dloc_cfg)
        rows.append({"n_alpha": n, "lhs": res.lhs, "rhs": res.rhs, "rel_dev": res.rel_dev})
        print(f"coarea: n_alpha {n:6d}  f(u) {res.lhs:.10g}  mean f(thresholded) "
              f"{res.rhs:.10g}  rel_dev {res.rel_dev:.3e}")
    report = {
        "command": "coarea", "shape": _shape(s), "regularizer": kind_summary(kind),
        "coarea": rows,
        "provenance": provenance(cfg, {"problem": ppath, "solution": upath}),
    }
    write_report(_path(args, cfg, "out"), report)
    return EXIT_OK


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcrelax", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output path")
        for name in names:
            p.add_argument(f"--{name}", help=f"{name} file")
        return p

    syn = common(sub.add_parser("synth", help="write a synthetic problem file"))
    syn.add_argument("phantom", choices=PHANTOMS)
    syn.add_argument("--width", type=int, default=8)
    syn.add_argument("--height", type=int, default=8)
    syn.add_argument("--labels", type=int, default=2)
    syn.add_argument("--period", type=int, default=2)
    syn.add_argument("--contrast", type=float, default=1.0)
    syn.add_argument("--noise", type=float, default=0.0)
    syn.add_argument("--hole", type=float, default=0.0)
    syn.add_argument("--scale", type=float, default=1.0)
    syn.add_argument("--power", type=float, default=3.0)
    syn.add_argument("--image", help="PPM (P6) image for noisy-prototypes")
    syn.add_argument("--prototypes", help="prototype colors in [0, 1], e.g. '1,0,0;0,0,1'")
    syn.add_argument("--seed", type=int)
    syn.add_argument("--stream", type=int, default=0)

    common(sub.add_parser("solve", help="solve the relaxed problem"), "problem")
    for name in ("round", "certify"):
        p = common(sub.add_parser(name, help=f"{name} a relaxed solution"),
                   "problem", "solution", *(("dual",) if name == "certify" else ()))
        p.add_argument("--seed", type=int, help="rounding seed (u64)")
        p.add_argument("--samples", type=int, help="number of rounding samples")
    common(sub.add_parser("coarea", help="coarea check for two-label solutions"),
           "problem", "solution")
    return parser


COMMANDS = {"synth": cmd_synth, "solve": cmd_solve, "round": cmd_round,
            "certify": cmd_certify, "coarea": cmd_coarea}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConvergenceFailure, RoundingBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValidationError, ValueError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
