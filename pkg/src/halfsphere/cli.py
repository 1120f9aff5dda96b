"""Command-line front end.

    halfsphere energies --K "6 + x3" --H 0 --out run/energies
    halfsphere index --config run.ini
    halfsphere blowup --K "6 + 2*x3 - 3*x3*x4" --taus 0.2,0.1,0.05,0.02 --out run/blowup

A config file is INI with a [run] section (and optional per-command
sections such as [blowup]); flags given on the command line win.  Every
float is written with 17 significant digits.  Exit codes: 0 success,
2 parse or usage error, 3 genericity failure, 4 non-axisymmetric data,
5 non-convergence.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import __version__
from .bubbles import BoundaryBubble, fit_bubble
from .diagnostics import kazdan_warner_check, pohozaev_identity, grid_function
from .energetics import (
    boundary_blowup_energy,
    comparison_margin,
    interior_blowup_energy,
    phi_closed,
    psi_closed,
)
from .errors import (
    ConvergenceError,
    DomainError,
    EvaluationError,
    ExpressionNameError,
    GenericityError,
    HalfSphereError,
    ParseError,
    SymmetryError,
    UsageError,
)
from .fields import as_field
from .geometry import fibonacci_sphere
from .morse_index import (
    check_genericity,
    find_critical_points,
    homotopy_index,
    homotopy_Kt,
    index_from_matrix,
    index_report,
    least_eigenvalue,
)

log = logging.getLogger("halfsphere")

COMMANDS = ("energies", "index", "genericity", "bubble-check", "pohozaev", "solve", "blowup", "homotopy")

EXIT_OK, EXIT_PARSE, EXIT_GENERICITY, EXIT_SYMMETRY, EXIT_CONVERGENCE = 0, 2, 3, 4, 5


class ConfigError(UsageError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _floats(text) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


@dataclass
class RunConfig:
    command: str = "energies"
    K_expr: str = "6"
    H_expr: str = "0"
    resolution: int = 64
    tau_schedule: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02])
    output_path: str = ""
    seed: int = 0
    grid_n: int = 256
    grid_beta: float = 12.0
    chart_radius: float = 40.0
    strategy: str = "mountain-pass"
    jobs: int = 1
    force: bool = False
    t_values: List[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    lam: float = 1.0
    Kbar: float = 6.0
    Hbar: float = 0.0
    p: float = 5.0
    sigma: float = 1.0
    maxit: int = 60

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        self.tau_schedule = _floats(self.tau_schedule)
        self.t_values = _floats(self.t_values)


_KEYS = {f.name for f in fields(RunConfig)}
_ALIASES = {"K": "K_expr", "H": "H_expr", "taus": "tau_schedule", "out": "output_path", "N": "grid_n", "beta": "grid_beta", "R": "chart_radius"}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    try:
        return _coerce_value(key, value)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{key}: bad value {value!r}") from e


def _coerce_value(key, value):
    t = str(_TYPES[key])
    if "List" in t:
        return _floats(value)
    if t in ("int", "<class 'int'>"):
        return int(value)
    if t in ("float", "<class 'float'>"):
        return float(value)
    if t in ("bool", "<class 'bool'>"):
        if isinstance(value, bool):
            return value
        v = str(value).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {value!r}")
    return str(value)


def read_config(path: str, command: Optional[str] = None) -> dict:
    """Keys from [run] and from the section named after the command; unknown keys are rejected."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    out = {}
    for sec in cp.sections():
        if sec != "run" and sec not in COMMANDS:
            raise ConfigError(f"unknown config section [{sec}]")
    for sec in ("run", command):
        if sec is None or not cp.has_section(sec):
            continue
        for k, v in cp.items(sec):
            key = _ALIASES.get(k, k)
            if key not in _KEYS:
                raise ConfigError(f"unknown config key {k!r} in [{sec}]")
            out[key] = _coerce(key, v)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    vals = {"command": args.command}
    if args.config:
        vals.update(read_config(args.config, args.command))
    for key in _KEYS:
        v = getattr(args, key, None)
        if v is not None and key != "command":
            vals[key] = _coerce(key, v)
    if getattr(args, "force", False):
        vals["force"] = True
    return RunConfig(**vals)


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    x = float(x) + 0.0
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return "%.17g" % x


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        # non-finite values have no JSON literal
        return _fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, bool)) or v is None for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "as_dict"):
        return to_json(obj.as_dict(), indent, _level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def to_csv(header: List[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def emit(cfg: RunConfig, payload: dict, csv_text: Optional[str] = None, stream=None):
    stream = stream or sys.stdout
    text = to_json(payload) + "\n"
    if not cfg.output_path:
        stream.write(text)
        return
    base = cfg.output_path
    d = os.path.dirname(base)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(base + ".json", "w", encoding="utf-8") as fh:
        fh.write(text)
    if csv_text is not None:
        with open(base + ".csv", "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    stream.write(f"wrote {base}.json" + (f" and {base}.csv" if csv_text is not None else "") + "\n")


def _header(cfg: RunConfig) -> dict:
    return {"command": cfg.command, "K": cfg.K_expr, "H": cfg.H_expr, "seed": cfg.seed, "version": __version__}


# ---------------------------------------------------------------------------
# commands


def cmd_energies(cfg: RunConfig, stream=None):
    K = as_field(cfg.K_expr, "half-sphere")
    H = as_field(cfg.H_expr, "boundary")
    X = fibonacci_sphere(cfg.resolution)
    kv = K.value(X)
    hv = H.value(X)
    if np.any(kv <= 0):
        raise DomainError("K must be positive on the boundary")
    rows = []
    for x, k, h in zip(X, kv, hv):
        be = boundary_blowup_energy(k, h)
        ie = interior_blowup_energy(k)
        rows.append([x[0], x[1], x[2], k, h, float(phi_closed(k, h)), float(psi_closed(k, h)), be, ie, ie / be, comparison_margin(k, h)])
    header = ["x1", "x2", "x3", "K", "H", "phi", "psi", "boundary_energy", "interior_energy", "ratio", "margin"]
    A = np.array(rows)
    payload = _header(cfg)
    payload.update(
        {
            "n_points": len(rows),
            "phi_min": float(A[:, 5].min()),
            "phi_max": float(A[:, 5].max()),
            "ratio_min": float(A[:, 9].min()),
            "ratio_max": float(A[:, 9].max()),
            "margin_min": float(A[:, 10].min()),
            "margin_positive": bool(np.all(A[:, 10] > 0)),
        }
    )
    emit(cfg, payload, to_csv(header, rows), stream)
    return EXIT_OK


def cmd_index(cfg: RunConfig, stream=None):
    rep = index_report(cfg.K_expr, cfg.H_expr, seeds=cfg.resolution, force=cfg.force)
    kw = kazdan_warner_check(cfg.K_expr, cfg.H_expr)
    payload = _header(cfg)
    payload.update(rep.as_dict())
    if rep.index != 0:
        verdict = f"Index = {rep.index} != 0 implies existence"
    else:
        verdict = "Index = 0: the degree count gives no existence statement"
    payload["verdict"] = verdict
    payload["forced"] = bool(cfg.force and not rep.genericity.generic)
    payload["obstruction"] = kw.as_dict()
    # the same sum with the opposite sign in front of it
    payload["index_reversed_sign"] = -2 - rep.index
    if kw.obstructed and rep.index != 0:
        payload["consistency"] = (
            "inconsistent: obstructed data with non-zero Index; "
            f"the sum taken with the opposite sign gives {-2 - rep.index}"
        )
    elif kw.obstructed:
        payload["consistency"] = "obstructed and Index = 0"
    else:
        payload["consistency"] = "no obstruction detected"
    rows = [[r.q[0], r.q[1], r.q[2], r.phi_value, r.morse_index, r.dK_dnu, r.classification] for r in rep.genericity.records]
    emit(cfg, payload, to_csv(["x1", "x2", "x3", "phi", "morse_index", "dK_dnu", "class"], rows), stream)
    return EXIT_OK


def cmd_genericity(cfg: RunConfig, stream=None):
    rep = check_genericity(cfg.K_expr, cfg.H_expr, seeds=cfg.resolution)
    payload = _header(cfg)
    payload.update(rep.as_dict())
    emit(cfg, payload, None, stream)
    return EXIT_OK if rep.generic else EXIT_GENERICITY


def cmd_bubble_check(cfg: RunConfig, stream=None):
    """Residuals of the limit problem for one half-space bubble and a refit from samples."""
    b = BoundaryBubble.make(cfg.lam, cfg.Kbar, cfg.Hbar)
    h = 1e-4 / max(1.0, cfg.lam)
    rng = np.random.default_rng(cfg.seed)
    Y = rng.uniform(-2.0, 2.0, (200, 3)) / cfg.lam
    Y[:, 2] = np.abs(Y[:, 2]) + 3 * h
    lap = np.zeros(len(Y))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        lap += (b.value(Y + e) - 2 * b.value(Y) + b.value(Y - e)) / h ** 2
    u = b.value(Y)
    pde = float(np.max(np.abs(-8 * lap - cfg.Kbar * u ** 5)) / np.max(cfg.Kbar * u ** 5))
    Yb = Y.copy()
    Yb[:, 2] = 0.0
    bc = -2 * b.gradient(Yb)[:, 2] - cfg.Hbar * b.value(Yb) ** 3
    x = np.linspace(-3, 3, 25) / cfg.lam
    z = np.linspace(0, 3, 13) / cfg.lam
    G = np.array([[a, c, d] for a in x for c in x for d in z])
    fit = fit_bubble(G, b.value(G), window=2.0 / cfg.lam)
    payload = _header(cfg)
    payload.update(
        {
            "lam": cfg.lam,
            "t": b.t,
            "Kbar": cfg.Kbar,
            "Hbar": cfg.Hbar,
            "peak": b.peak,
            "pde_relative_residual": pde,
            "boundary_residual": float(np.max(np.abs(bc))),
            "fit": {
                "lam": fit.bubble.lam,
                "t": fit.bubble.t,
                "Kbar": fit.bubble.Kbar,
                "Hbar": fit.bubble.Hbar,
                "residual": fit.residual,
                "normalization_residual": fit.normalization.residual(fit.bubble.Kbar),
            },
        }
    )
    emit(cfg, payload, None, stream)
    return EXIT_OK


def cmd_pohozaev(cfg: RunConfig, stream=None):
    b = BoundaryBubble.make(cfg.lam, cfg.Kbar, cfg.Hbar)
    rep = pohozaev_identity(b, cfg.Kbar, cfg.Hbar, cfg.p, cfg.sigma, resolution=max(16, cfg.resolution))
    payload = _header(cfg)
    payload.update({"lam": cfg.lam, "Kbar": cfg.Kbar, "Hbar": cfg.Hbar})
    payload.update(rep.as_dict())
    emit(cfg, payload, None, stream)
    return EXIT_OK


def _snapshot_dir(cfg: RunConfig):
    if not cfg.output_path:
        return None
    d = cfg.output_path + "_snapshots"
    os.makedirs(d, exist_ok=True)
    return d


def cmd_solve(cfg: RunConfig, stream=None):
    from .solver import solve_subcritical, write_snapshot

    results = []
    prev = None
    for tau in cfg.tau_schedule:
        strat = cfg.strategy if prev is not None else "mountain-pass"
        r = solve_subcritical(
            cfg.K_expr,
            cfg.H_expr,
            tau,
            N=cfg.grid_n,
            R=cfg.chart_radius,
            beta=cfg.grid_beta,
            strategy=strat,
            previous=prev,
            maxit=cfg.maxit,
        )
        results.append(r)
        prev = r
    snap = _snapshot_dir(cfg)
    if snap:
        for r in results:
            write_snapshot(r, os.path.join(snap, f"tau_{r.tau:.6g}.txt"))
    payload = _header(cfg)
    payload["results"] = [r.as_dict() for r in results]
    rows = [[r.tau, r.sup_norm, r.sphere_sup, r.energy, r.energy_direct, r.mp_level, r.residual_norm] for r in results]
    emit(cfg, payload, to_csv(["tau", "sup", "sphere_sup", "energy", "energy_direct", "mp_level", "residual"], rows), stream)
    return EXIT_OK


def cmd_blowup(cfg: RunConfig, stream=None):
    from .energetics import phi
    from .solver import DEFAULT_CENTER, blowup_scan, extract_blowup_data, write_snapshot

    seed = "continuation" if cfg.strategy == "continuation" else "mountain-pass"
    fit = blowup_scan(
        cfg.K_expr,
        cfg.H_expr,
        cfg.tau_schedule,
        seed=seed,
        N=cfg.grid_n,
        R=cfg.chart_radius,
        beta=cfg.grid_beta,
        jobs=cfg.jobs,
        maxit=cfg.maxit,
    )
    ph = phi(cfg.K_expr, cfg.H_expr, DEFAULT_CENTER)
    payload = _header(cfg)
    payload.update(fit.as_dict())
    payload["phi_center"] = ph
    payload["energy_gap"] = (fit.energies[-1] - ph) / ph
    payload["verdict"] = "bounded" if fit.growth_factor < 1.5 else "blow-up"
    try:
        data = extract_blowup_data(fit.results, cfg.K_expr, cfg.H_expr)
        payload["lambdas"] = [l.tolist() for l in data.lambdas]
        payload["mus"] = [m.tolist() for m in data.mus]
        payload["relation_residuals"] = data.relation_residuals
    except HalfSphereError as e:
        payload["extraction_error"] = str(e)
    snap = _snapshot_dir(cfg)
    if snap:
        for r in fit.results:
            write_snapshot(r, os.path.join(snap, f"tau_{r.tau:.6g}.txt"))
    rows = [
        [t, s, e, d, i]
        for t, s, e, d, i in zip(fit.tau_values, fit.sup_values, fit.energies, fit.peak_distances, fit.interior_sups)
    ]
    emit(cfg, payload, to_csv(["tau", "sup", "energy", "peak_distance", "interior_sup"], rows), stream)
    return EXIT_OK


def cmd_homotopy(cfg: RunConfig, stream=None):
    """Index, rho and det M_t along H_t = t H with phi held fixed."""
    recs = find_critical_points(cfg.K_expr, cfg.H_expr, seeds=cfg.resolution)
    rows = []
    table = []
    fp = [i for i, r in enumerate(recs) if r.dK_dnu > 0]
    M1 = None
    for t in cfg.t_values:
        res = homotopy_Kt(cfg.K_expr, cfg.H_expr, t, recs)
        idx = homotopy_index(res, recs)
        Mt = res.matrix(fp) if fp else np.zeros((0, 0))
        if M1 is None:
            M1 = homotopy_Kt(cfg.K_expr, cfg.H_expr, 1.0, recs).matrix(fp) if fp else np.zeros((0, 0))
        det_ratio = float(np.linalg.det(Mt) / np.linalg.det(M1)) if fp else 1.0
        kr = np.prod(np.sqrt(res.K_values[fp] / res.Kt_values[fp])) if fp else 1.0
        rho = least_eigenvalue(Mt) if fp else float("nan")
        table.append({"t": t, "index": idx, "rho": rho, "det_ratio": det_ratio, "prod_sqrt_K_over_Kt": float(kr)})
        rows.append([t, idx, rho, det_ratio, float(kr)])
    payload = _header(cfg)
    payload["steps"] = table
    payload["index_invariant"] = len({r["index"] for r in table}) == 1
    emit(cfg, payload, to_csv(["t", "index", "rho", "det_ratio", "prod_sqrt_K_over_Kt"], rows), stream)
    return EXIT_OK


HANDLERS = {
    "energies": cmd_energies,
    "index": cmd_index,
    "genericity": cmd_genericity,
    "bubble-check": cmd_bubble_check,
    "pohozaev": cmd_pohozaev,
    "solve": cmd_solve,
    "blowup": cmd_blowup,
    "homotopy": cmd_homotopy,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="halfsphere", description="Prescribed curvature experiments on the half 3-sphere.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with a [run] section")
        p.add_argument("--K", dest="K_expr", help="expression for K in x1..x4")
        p.add_argument("--H", dest="H_expr", help="expression for H in x1..x3")
        p.add_argument("--resolution", type=int)
        p.add_argument("--out", dest="output_path", help="output prefix (writes .json and .csv)")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("index", "homotopy"):
            p.add_argument("--force", action="store_true", default=None, help="report the Index even for non-generic data")
        if name in ("solve", "blowup"):
            p.add_argument("--taus", dest="tau_schedule", help="comma separated, decreasing")
            p.add_argument("--N", dest="grid_n", type=int)
            p.add_argument("--beta", dest="grid_beta", type=float)
            p.add_argument("--R", dest="chart_radius", type=float)
            p.add_argument("--strategy", choices=("mountain-pass", "continuation"))
            p.add_argument("--jobs", type=int)
            p.add_argument("--maxit", type=int, help="Newton iteration cap")
        if name == "homotopy":
            p.add_argument("--t-values", dest="t_values")
        if name in ("bubble-check", "pohozaev"):
            p.add_argument("--lam", type=float)
            p.add_argument("--Kbar", type=float)
            p.add_argument("--Hbar", type=float)
        if name == "pohozaev":
            p.add_argument("--p", type=float)
            p.add_argument("--sigma", type=float)
    return ap


def main(argv=None, stream=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        return HANDLERS[cfg.command](cfg, stream)
    except (ParseError, ExpressionNameError, EvaluationError, UsageError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except GenericityError as e:
        print(f"error: {e} (use --force to report anyway)", file=sys.stderr)
        return EXIT_GENERICITY
    except SymmetryError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SYMMETRY
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
