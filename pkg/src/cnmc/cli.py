"""Command-line front end: ``cnmc <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import lattice as lat
from ._version import version_string
from .expansion import CONVENTIONS, kappa_constants, predicted_shape
from .linop import linearization_spectrum
from .nmc import QuadratureError, default_h_tol, g_total, h_nmc
from .parallel import get_threads, set_threads
from .solver import NoConvergenceError, SolverOptions, newton_solve, trace_branch, verify_expansion
from .specfun import FracParams, d_coeff, lambda_table
from .sphere import EvenShape, build_grid, check_admissible

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument plumbing


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from None


def _config(args) -> dict:
    cfg = _load_json(args.config) if getattr(args, "config", None) else {}
    for key in ("N", "alpha", "beta"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "basis", None):
        try:
            cfg["basis"] = json.loads(args.basis)
        except json.JSONDecodeError:
            raise InputError("--basis must be a JSON matrix") from None
    return cfg


def _params(cfg: dict) -> FracParams:
    if "N" not in cfg or "alpha" not in cfg:
        raise InputError("N and alpha are required (flags or --config)")
    return FracParams(int(cfg["N"]), float(cfg["alpha"]), cfg.get("beta"))


def _lattice(cfg: dict, N: int) -> lat.Lattice:
    if "basis" not in cfg:
        raise InputError("a lattice basis is required (--basis or --config)")
    return lat.make_lattice(cfg["basis"], N)


def _resolution(args, N: int) -> int:
    return args.resolution or (128 if N == 2 else 32)


def _K(args, N: int) -> int:
    K = args.K if args.K is not None else (8 if N == 2 else 4)
    if K % 2:
        raise InputError("--K must be even")
    return K


def _shape(path: str | None, N: int, K: int) -> EvenShape:
    if not path:
        return EvenShape.zeros(N, K)
    d = _load_json(path)
    shape = EvenShape.from_dict(d)
    if shape.N != N:
        raise InputError("shape N does not match the parameters")
    return shape


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _manifest(args, params=None, L=None, resolution=None, K=None, tolerances=None) -> dict:
    return {
        "command": args.command,
        "version": version_string(),
        "params": params.to_dict() if params else None,
        "lattice": L.to_dict() if L else None,
        "grid_resolution": resolution,
        "K": K,
        "tolerances": tolerances or {},
        "threads": get_threads(),
    }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict) -> None:
    _emit(args, json.dumps(_jsonable(payload), indent=2) + "\n")


def _solver_opts(args, spectrum=False) -> SolverOptions:
    return SolverOptions(
        tol=args.tol,
        max_iters=args.max_iters,
        h_tol=args.h_tol,
        contraction=args.contraction,
        fd_step=args.fd_step,
        spectrum=spectrum,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_eig(args) -> int:
    params = _params(_config(args))
    lam = lambda_table(params, args.kmax)
    _emit_json(args, {"manifest": _manifest(args, params), "d": d_coeff(params), "lambda": lam})
    return EXIT_OK


def cmd_constants(args) -> int:
    cfg = _config(args)
    params = _params(cfg)
    L = _lattice(cfg, params.N)
    data = kappa_constants(params, L, args.tol, args.convention)
    m = _manifest(args, params, L, tolerances={"lattice_sum": args.tol})
    _emit_json(args, {"manifest": m, "constants": data.to_dict()})
    return EXIT_OK


def cmd_lattice_sum(args) -> int:
    cfg = _config(args)
    N = int(cfg.get("N", 0)) or None
    if N is None:
        raise InputError("N is required")
    L = _lattice(cfg, N)
    weight = "unit" if args.theta is None else lat.Directional(np.array(_floats(args.theta)))
    res = lat.weighted_sum(L, args.s, weight, args.tol, args.method, args.max_terms)
    m = _manifest(args, None, L, tolerances={"sum": args.tol})
    m["s"] = args.s
    _emit_json(args, {"manifest": m, "result": res.to_dict()})
    return EXIT_OK


def cmd_nmc_eval(args) -> int:
    cfg = _config(args)
    params = _params(cfg)
    K = _K(args, params.N)
    res = _resolution(args, params.N)
    shape = _shape(args.shape, params.N, K)
    check_admissible(shape)
    grid = build_grid(params.N, res)
    htol = args.h_tol or default_h_tol(params.N)
    h = h_nmc(shape, grid, params, htol)
    out = {"theta": grid.nodes, "h": h}
    L = None
    if "basis" in cfg:
        L = _lattice(cfg, params.N)
        G = g_total(args.tau, shape, grid, L, params, args.g_tol)
        out["G"] = G
        out["H"] = h + abs(args.tau) ** params.s * G
    tols = {"h": htol, "G": args.g_tol}
    m = _manifest(args, params, L, res, K, tols)
    m["tau"] = args.tau
    _emit_json(args, {"manifest": m, **out})
    return EXIT_OK


def _setup_solve(args):
    cfg = _config(args)
    params = _params(cfg)
    L = _lattice(cfg, params.N)
    K = _K(args, params.N)
    res = _resolution(args, params.N)
    return params, L, K, res, build_grid(params.N, res)


def cmd_solve(args) -> int:
    params, L, K, res, grid = _setup_solve(args)
    if args.r <= 0:
        raise InputError("--r must be positive")
    opts = _solver_opts(args, args.spectrum)
    if args.initial:
        start = _shape(args.initial, params.N, K)
    else:
        start = predicted_shape(args.r, params, L, kappa_constants(params, L), K)
    bp = newton_solve(1.0 / args.r, start, grid, L, params, opts)
    m = _manifest(args, params, L, res, K, opts.to_dict())
    _emit_json(args, {"manifest": m, "point": bp.to_dict()})
    return EXIT_OK


def _branch_csv(manifest: dict, branch) -> str:
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(_jsonable(manifest)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    index = branch[0].shape.index if branch else []
    w.writerow(["r", "tau", "residual_sup", "newton_iters", "negative_eigenvalues"] + [f"c_{k}_{m}" for k, m in index])
    for bp in branch:
        row = bp.csv_row()
        w.writerow(["" if v is None else repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_branch(args) -> int:
    params, L, K, res, grid = _setup_solve(args)
    rs = _floats(args.rs)
    opts = _solver_opts(args, args.spectrum)
    branch = trace_branch(rs, grid, L, params, opts, K)
    m = _manifest(args, params, L, res, K, opts.to_dict())
    m["failure"] = branch.failure
    fmt = args.format or ("csv" if (args.out or "").endswith(".csv") else "json")
    if fmt == "csv":
        _emit(args, _branch_csv(m, branch))
    else:
        _emit_json(args, {"manifest": m, "points": [bp.to_dict() for bp in branch]})
    if branch.failure:
        print(f"error: branch stopped early at {branch.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


class _StoredPoint:
    def __init__(self, r, shape):
        self.r = r
        self.shape = shape


def _read_branch(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if text.startswith("# manifest "):
        head, _, body = text.partition("\n")
        manifest = json.loads(head[len("# manifest "):])
        rows = list(csv.DictReader(io.StringIO(body)))
        N, K = manifest["params"]["N"], manifest["K"]
        pts = []
        for row in rows:
            coeffs = [{"k": int(k.split("_")[1]), "m": int(k.split("_")[2]), "c": float(v)} for k, v in row.items() if k.startswith("c_")]
            pts.append(_StoredPoint(float(row["r"]), EvenShape.from_dict({"N": N, "K": K, "coeffs": coeffs})))
        return manifest, pts
    try:
        d = json.loads(text)
        manifest = d["manifest"]
        pts = [_StoredPoint(float(p["r"]), EvenShape.from_dict(p["shape"])) for p in d["points"]]
    except (json.JSONDecodeError, KeyError, TypeError):
        raise InputError(f"{path}: not a branch file") from None
    return manifest, pts


def cmd_verify(args) -> int:
    manifest, pts = _read_branch(args.branch)
    if len(pts) < 3:
        raise InputError("verification needs at least three branch points")
    params = FracParams(**manifest["params"])
    L = lat.lattice_from_json(manifest["lattice"])
    data = kappa_constants(params, L, args.tol, args.convention)
    rows = verify_expansion(pts, data, args.resolution)
    m = _manifest(args, params, L, args.resolution, manifest.get("K"), {"lattice_sum": args.tol})
    m["branch_version"] = manifest.get("version")
    m["convention"] = args.convention
    _emit_json(args, {"manifest": m, "kappa": [data.kappa0, data.kappa1, data.kappa2], "table": rows})
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _config(args)
    params = _params(cfg)
    K = _K(args, params.N)
    res = _resolution(args, params.N)
    grid = build_grid(params.N, res)
    opts = _solver_opts(args)
    L = _lattice(cfg, params.N) if "basis" in cfg else None
    if args.r is None or math.isinf(args.r):
        tau = 0.0
        shape = _shape(args.shape, params.N, K)
    else:
        if L is None:
            raise InputError("a lattice is required for finite r")
        tau = 1.0 / args.r
        if args.shape:
            shape = _shape(args.shape, params.N, K)
        else:
            start = predicted_shape(args.r, params, L, kappa_constants(params, L), K)
            shape = newton_solve(tau, start, grid, L, params, opts).shape
    ev = linearization_spectrum(tau, shape, grid, L, params, opts.fd_step, opts.h_tol)
    m = _manifest(args, params, L, res, K, opts.to_dict())
    m["tau"] = tau
    _emit_json(args, {"manifest": m, "eigenvalues": ev, "negative": int(np.sum(ev < 0))})
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(p, lattice=True, grid=False):
    p.add_argument("--config", help="JSON with N, alpha, optional beta and basis")
    p.add_argument("--N", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    if lattice:
        p.add_argument("--basis", help="lattice basis as a JSON matrix")
    if grid:
        p.add_argument("--K", type=int, help="even cutoff degree")
        p.add_argument("--resolution", type=int, help="grid resolution")
    p.add_argument("--out", help="output path (default stdout)")


def _add_solver(p):
    d = SolverOptions()
    p.add_argument("--tol", type=float, default=d.tol, help="sup-norm residual tolerance")
    p.add_argument("--h-tol", type=float, default=d.h_tol, help="h quadrature tolerance")
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--contraction", type=float, default=d.contraction)
    p.add_argument("--fd-step", type=float, default=d.fd_step)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnmc", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, help="worker threads (default: CNMC_THREADS or all cores)")
    ap.add_argument("--version", action="version", version=version_string())
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eig", help="spectral eigenvalues lambda_k")
    _add_common(p, lattice=False)
    p.add_argument("--kmax", type=int, default=6)
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("constants", help="expansion constants of the branch")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--convention", choices=sorted(CONVENTIONS), default="printed")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("lattice-sum", help="sum over nonzero lattice points of |p|^-s")
    _add_common(p)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--theta", help="direction for the weight (theta . p)^2, comma separated")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--method", choices=["auto", "direct", "smooth"], default="auto")
    p.add_argument("--max-terms", type=int, default=5_000_000)
    p.set_defaults(func=cmd_lattice_sum)

    p = sub.add_parser("nmc-eval", help="h, G and H on grid nodes")
    _add_common(p, grid=True)
    p.add_argument("--shape", help="EvenShape JSON (default: unit sphere)")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--h-tol", type=float)
    p.add_argument("--g-tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_nmc_eval)

    p = sub.add_parser("solve", help="Newton solve at one r")
    _add_common(p, grid=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--initial", help="EvenShape JSON starting guess (default: expansion)")
    p.add_argument("--spectrum", action="store_true")
    _add_solver(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("branch", help="continuation over descending r values")
    _add_common(p, grid=True)
    p.add_argument("--rs", required=True, help="descending r values, comma separated")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--spectrum", action="store_true")
    _add_solver(p)
    p.set_defaults(func=cmd_branch)

    p = sub.add_parser("verify", help="expansion residual table for a branch file")
    p.add_argument("--branch", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--resolution", type=int)
    p.add_argument("--convention", choices=sorted(CONVENTIONS), default="printed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spectrum", help="eigenvalues of the linearization")
    _add_common(p, grid=True)
    p.add_argument("--r", type=float, help="solve at this r first (omit for tau = 0)")
    p.add_argument("--shape", help="EvenShape JSON to linearize at")
    _add_solver(p)
    p.set_defaults(func=cmd_spectrum)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        set_threads(args.threads)
        return args.func(args)
    except (NoConvergenceError, QuadratureError, lat.NonconvergentSumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        set_threads(None)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
