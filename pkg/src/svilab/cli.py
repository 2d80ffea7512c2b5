"""Command-line front end.

    svilab COMMAND --config PATH [--seed U64] [--out DIR] [--workers N] [--format json|csv|both]

Exit status: 0 on success, 2 on input errors, 3 on numerical failures.  Any
failure writes ``error.json`` to the output directory and nothing else.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dvi, experiments, monotone, paths, svi
from .coefficients import Coefficient, constant, zero_drift
from .errors import InputError, NumericalError

SCHEMA_VERSION = 1
COMMANDS = (
    "prox-check", "dvi", "skeleton", "svi", "oracle-compare", "limit-theorem",
    "continuity", "small-ball", "levy-area", "support-direct", "k-tail",
)
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


class Artifacts:
    """Collects output files in memory; written only after the command succeeds."""

    def __init__(self, meta):
        self.meta = meta
        self.files = {}

    def json(self, name, payload):
        data = dict(payload)
        data.update(self.meta)
        self.files[name] = json.dumps(experiments._jsonable(data), sort_keys=True, indent=1) + "\n"

    def path_csv(self, name, p):
        lines = [f"{k}={v}" for k, v in sorted(self.meta.items())]
        import io

        buf = io.StringIO()
        buf.write("".join(f"# {line}\n" for line in lines))
        buf.write(",".join(["t"] + [f"x{i + 1}" for i in range(p.dim)]) + "\n")
        for t, row in zip(p.times, p.values):
            buf.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
        self.files[name] = buf.getvalue()

    def report(self, rep, fmt):
        if fmt in ("json", "both"):
            self.files["report.json"] = rep.to_json(**self.meta) + "\n"
        if fmt in ("csv", "both"):
            self.files["report.csv"] = rep.to_csv(**self.meta)

    def write(self, out):
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (out / name).write_text(text)


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _get(config, key, default=None, required=False):
    if key not in config:
        if required:
            raise InputError(f"config is missing {key!r}", field=key)
        return default
    return config[key]


def _positive_int(config, key, default=None, minimum=1):
    value = _get(config, key, default, required=default is None)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise InputError(f"{key} must be an integer >= {minimum}", field=key)
    return value


def _positive_float(config, key, default=None):
    value = _get(config, key, default, required=default is None)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise InputError(f"{key} must be a positive number", field=key)
    return float(value)


def _float_list(config, key, default=None):
    value = _get(config, key, default, required=default is None)
    if not isinstance(value, list) or not value or not all(isinstance(v, (int, float)) for v in value):
        raise InputError(f"{key} must be a nonempty list of numbers", field=key)
    return [float(v) for v in value]


def _int_list(config, key):
    value = _get(config, key, required=True)
    if not isinstance(value, list) or not value or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise InputError(f"{key} must be a nonempty list of integers", field=key)
    return value


def _problem(config):
    return experiments.problem_from_dict(_get(config, "problem", required=True))


def _grid_path(data, field, step=None, horizon=None, dim=None):
    """A path given as {"dt", "values"}, {"slope": [...]} (linear) or "zero"."""
    if data == "zero" or data is None:
        n = paths.grid_count(horizon, step)
        return paths.GridPath(step, np.zeros((n + 1, dim)))
    if isinstance(data, dict) and "slope" in data:
        slope = np.asarray(data["slope"], dtype=float).reshape(-1)
        n = paths.grid_count(horizon, step)
        return paths.GridPath(step, step * np.arange(n + 1)[:, None] * slope)
    if isinstance(data, dict) and "constant" in data:
        value = np.asarray(data["constant"], dtype=float).reshape(-1)
        n = paths.grid_count(horizon, step)
        return paths.GridPath(step, np.tile(value, (n + 1, 1)))
    if isinstance(data, dict) and "dt" in data and "values" in data:
        return paths.GridPath(float(data["dt"]), np.asarray(data["values"], dtype=float))
    raise InputError(f"{field} must be 'zero', {{'slope': ...}}, {{'constant': ...}} or {{'dt', 'values'}}", field=field)


def _is_reflected_bm(p):
    spec = p.spec
    return (
        isinstance(spec, monotone.IndicatorBox) and spec.dim == 1 and p.d == 1
        and spec.lower[0] == 0.0 and np.isinf(spec.upper[0])
        and p.b.is_constant and not np.any(p.b.offset)
        and p.sigma.is_constant and float(p.sigma.offset.reshape(-1)[0]) == 1.0
    )


# -- commands ---------------------------------------------------------------


def cmd_prox_check(config, args, art):
    spec = monotone.spec_from_dict(_get(config, "spec", required=True))
    lam = _positive_float(config, "lambda", 1.0)
    points = np.asarray(_get(config, "points", required=True), dtype=float)
    if points.ndim != 2:
        raise InputError("points must be a list of points", field="points")
    rows = []
    for x in points:
        j = monotone.resolvent(spec, lam, x)
        a = monotone.yosida(spec, lam, x)
        ms = monotone.minimal_section(spec, x)
        rows.append({
            "x": x, "value": monotone.evaluate(spec, x), "resolvent": j, "yosida": a,
            "minimal_section": "not in D(A)" if ms is None else ms,
            "moreau_defect": float(np.abs(x - j - lam * a).max()),
        })
    rng = svi.make_rng(args.seed, 0)
    xs = 3.0 * rng.standard_normal((200, spec.dim))
    ys = 3.0 * rng.standard_normal((200, spec.dim))
    jx, jy = monotone.resolvent(spec, lam, xs), monotone.resolvent(spec, lam, ys)
    ax, ay = (xs - jx) / lam, (ys - jy) / lam
    gap = np.linalg.norm(xs - ys, axis=1)
    laws = {
        "nonexpansive": bool(np.all(np.linalg.norm(jx - jy, axis=1) <= gap + 1e-9)),
        "yosida_lipschitz": bool(np.all(np.linalg.norm(ax - ay, axis=1) <= gap / lam + 1e-9)),
        "yosida_monotone": bool(np.all(np.einsum("ij,ij->i", ax - ay, xs - ys) >= -1e-9)),
    }
    art.json("report.json", {"command": "prox-check", "spec": spec.to_dict(), "lambda": lam,
                             "points": rows, "laws": laws})
    return True


def cmd_dvi(config, args, art):
    spec = monotone.spec_from_dict(_get(config, "spec", required=True))
    T = _positive_float(config, "T", 1.0)
    step = _positive_float(config, "step", 1e-3)
    u0 = _get(config, "u0", required=True)
    forcing = _grid_path(_get(config, "forcing", "zero"), "forcing", step, T, spec.dim)
    problem = dvi.DviProblem(spec, forcing, u0, T)
    u = dvi.solve_dvi(problem, step)
    brezis = dvi.brezis_energy_check(problem, u)
    art.path_csv("u.csv", u)
    art.json("report.json", {"command": "dvi", "steps": u.n_steps, "u_final": u.values[-1],
                             "brezis": {"lhs": brezis.lhs, "rhs": brezis.rhs, "pass": brezis.passed}})
    return brezis.passed


def cmd_skeleton(config, args, art):
    p = _problem(config)
    step = _positive_float(config, "step", 1e-3)
    h = _grid_path(_get(config, "h", "zero"), "h", step, p.T, p.d)
    xi, eta = dvi.skeleton(dvi.SkeletonInput(p.spec, h, p.x, p.b, p.sigma), step)
    pairs = monotone.sample_graph(p.spec, 32, args.seed)
    cert = monotone.interior_certificate(p.spec)
    art.path_csv("xi.csv", xi)
    art.path_csv("eta.csv", eta)
    slack = dvi.validate_flow(p.spec, xi, eta, pairs)
    interior = dvi.interior_inequality_slack(xi.values, eta.values, cert, step)
    art.json("report.json", {"command": "skeleton", "flow_slack": slack, "interior_slack": interior,
                             "tv_eta": paths.total_variation(eta)})
    return slack >= -svi.FLOW_TOL and interior >= -svi.FLOW_TOL


def cmd_svi(config, args, art):
    p = _problem(config)
    level = _positive_int(config, "level", 12, minimum=0)
    n = _positive_int(config, "n", level, minimum=0)
    drv = svi.generate_driver(p.d, p.T, level, (args.seed, 0))
    sol = svi.wong_zakai_solve(p, drv, n)
    report = svi.validate_solution(p, sol, monotone.sample_graph(p.spec, 32, args.seed))
    payload = {"command": "svi", "level": level, "n": n, "tv_K": sol.tv_K, "residual": sol.residual,
               "validation": report.to_dict()}
    ok = report.passed
    if _is_reflected_bm(p) and n == level:
        oracle = svi.skorokhod_oracle(float(p.x[0]), drv.w)
        dist = paths.sup_distance(sol.X, oracle.X) + paths.sup_distance(sol.K, oracle.K)
        payload["skorokhod_oracle_distance"] = dist
        ok = ok and dist <= 1e-10
    art.path_csv("X.csv", sol.X)
    art.path_csv("K.csv", sol.K)
    art.path_csv("w.csv", drv.w)
    art.json("report.json", payload)
    return ok


def cmd_oracle_compare(config, args, art):
    x = float(_get(config, "x", 0.5))
    T = _positive_float(config, "T", 1.0)
    level = _positive_int(config, "level", 12, minimum=0)
    trials = _positive_int(config, "trials", 100)
    p = svi.SviProblem(monotone.IndicatorBox([0.0], [None]), zero_drift(1), constant([[1.0]]), [x], T, 1)
    pairs = monotone.sample_graph(p.spec, 32, args.seed)
    cert = monotone.interior_certificate(p.spec)
    worst, failures = 0.0, 0
    for i in range(trials):
        drv = svi.generate_driver(1, T, level, (args.seed, 0, i))
        sol = svi.reference_solve(p, drv)
        oracle = svi.skorokhod_oracle(x, drv.w)
        worst = max(worst, paths.sup_distance(sol.X, oracle.X), paths.sup_distance(sol.K, oracle.K))
        failures += not svi.validate_solution(p, sol, pairs, cert).passed
    art.json("report.json", {"command": "oracle-compare", "trials": trials, "level": level,
                             "max_sup_distance": worst, "validation_failures": failures})
    return worst <= 1e-10 and failures == 0


def cmd_limit_theorem(config, args, art):
    p = _problem(config)
    rep = experiments.limit_theorem_study(
        p, _int_list(config, "levels"), _positive_int(config, "N_fine", 14), _positive_float(config, "eps", 0.1),
        _positive_int(config, "trials", 200), args.seed, args.workers)
    art.report(rep, args.format)
    return True


def cmd_support_direct(config, args, art):
    p = _problem(config)
    rep = experiments.support_direct_study(
        p, _int_list(config, "levels"), _positive_int(config, "N_fine", 14), _positive_int(config, "trials", 200),
        args.seed, args.workers)
    art.report(rep, args.format)
    return True


def cmd_continuity(config, args, art):
    p = _problem(config)
    level = _positive_int(config, "level", 10)
    h = _get(config, "h", "zero")
    h = None if h == "zero" else _grid_path(h, "h", 2.0**-level, p.T, p.d)
    rep = experiments.approx_continuity_study(
        p, h, _positive_float(config, "eps", 0.2), _float_list(config, "deltas", [0.8, 0.6, 0.45]),
        _positive_int(config, "max_draws", 200_000), _positive_int(config, "trials_target", 200), args.seed,
        level, args.workers)
    art.report(rep, args.format)
    return True


def cmd_small_ball(config, args, art):
    rep = experiments.small_ball_study(
        _positive_int(config, "d", 1), _positive_float(config, "T", 1.0),
        _float_list(config, "eps_grid", [0.5, 0.6, 0.8, 1.0]), _positive_int(config, "trials", 100_000),
        args.seed, _positive_int(config, "level", 10), _get(config, "monitoring", "bridge"), args.workers)
    art.report(rep, args.format)
    return True


def cmd_levy_area(config, args, art):
    rep = experiments.levy_area_study(
        _positive_int(config, "d", 2), _positive_float(config, "T", 1.0),
        _float_list(config, "deltas", [0.8, 0.6]), _float_list(config, "Ms", [1, 2, 4, 8]),
        _positive_int(config, "trials_target", 200), _positive_int(config, "max_draws", 2_000_000),
        args.seed, _positive_int(config, "level", 10), args.workers)
    art.report(rep, args.format)
    return True


def cmd_k_tail(config, args, art):
    p = _problem(config)
    r_grid = _get(config, "r_grid")
    rep = experiments.k_tail_study(
        p, _positive_int(config, "trials", 2000), args.seed,
        None if r_grid is None else _float_list(config, "r_grid"), _positive_int(config, "level", 10),
        args.workers)
    art.report(rep, args.format)
    return True


HANDLERS = {
    "prox-check": cmd_prox_check, "dvi": cmd_dvi, "skeleton": cmd_skeleton, "svi": cmd_svi,
    "oracle-compare": cmd_oracle_compare, "limit-theorem": cmd_limit_theorem, "continuity": cmd_continuity,
    "small-ball": cmd_small_ball, "levy-area": cmd_levy_area, "support-direct": cmd_support_direct,
    "k-tail": cmd_k_tail,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="svilab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=None, help="64-bit seed (overrides config 'seed')")
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--format", choices=("json", "csv", "both"), default="both")
    return parser


def _write_error(out, kind, exc, code):
    payload = {"schema_version": SCHEMA_VERSION, "error": kind, "message": str(exc), "exit_code": code}
    if getattr(exc, "field", None):
        payload["field"] = exc.field
    if isinstance(exc, NumericalError):
        payload["residual"] = exc.residual
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    except OSError:
        pass
    print(f"svilab: {kind}: {exc}", file=sys.stderr)


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}", field="--config") from None
        try:
            config = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                             field="--config") from None
        if not isinstance(config, dict):
            raise InputError("config must be a JSON object", field="--config")
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise InputError("seed must be an unsigned 64-bit integer", field="seed")
        args.seed = seed
        if args.workers < 1:
            raise InputError("workers must be >= 1", field="--workers")
        meta = {"schema_version": SCHEMA_VERSION, "command": args.command, "seed": seed,
                "config_hash": config_hash(config)}
        art = Artifacts(meta)
        ok = HANDLERS[args.command](config, args, art)
        art.write(args.out)
    except InputError as exc:
        _write_error(args.out, "input error", exc, EXIT_INPUT)
        return EXIT_INPUT
    except NumericalError as exc:
        _write_error(args.out, "numerical error", exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    if not ok:
        print("svilab: checks reported failures; see report.json", file=sys.stderr)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
