"""Command-line front end: ``nonholo simulate | verify | gauge-ode | bracket-table``.

Exit codes: 0 ok, 2 configuration error, 3 runtime failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .brackets import (
    PhaseState,
    ThreeFormSpec,
    gauge_transform,
    lambda_from_generators,
    pi_nh,
    random_three_form,
)
from .config import RunConfig, load_config
from .dynamics import integrate_batch
from .errors import ChartExit, ConfigError, FloquetViolation, NonholoError
from .gauge import skew_test
from .systems import chaplygin as chap
from .systems import revolution as rev
from .verification import (
    Report,
    verify_dynamics_equivalence,
    verify_invertibility,
    verify_rank2_jacobi,
    verify_theorem_main,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 2, 3, 4

CHECKS = ("casimir", "dynamics", "invertibility", "rank2-jacobi", "skew")
VERIFY_SYSTEMS = ("chaplygin", "revolution", "chaplygin-intermediate")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- output helpers ------------------------------------------------------------


def _num(x):
    return repr(float(x))


def dumps(obj):
    """Deterministic JSON with a version key."""
    payload = dict(obj)
    payload["version"] = __version__
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def csv_text(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_num(v) for v in row) + "\n")
    return buf.getvalue()


def _write_all(out_dir, files):
    """Write every file only after all content has been produced."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


# -- system assembly -----------------------------------------------------------


class Bundle:
    """A configured system plus what the commands need to reduce and verify it."""

    def __init__(self, cfg: RunConfig, kind):
        self.kind = kind
        if kind == "chaplygin":
            self.params = cfg.chaplygin_params()
            self.system = chap.build_chaplygin(self.params)
            self.lam = lambda_from_generators(self.system, self.system.generators, tol=1e-6)
        else:
            self.profile = cfg.profile()
            self.params = cfg.revolution_params()
            self.solutions = rev.solve_gauge_ode(self.profile, self.params, n=cfg["revolution.ode_steps"])
            self.system = rev.build_equivariant(self.profile, self.params, self.solutions)
            self.lam = rev.lambda_closed_form(self.profile, self.params, self.system)

    def reduced(self, state):
        if self.kind == "chaplygin":
            red = chap.reduce_to_MG(self.params, state)
            return np.concatenate([red.M, red.gamma])
        M, gamma, sigma = rev.reduce_revolution(self.profile, self.params, self.system, state)
        return np.concatenate([M, gamma, sigma])

    def reduced_names(self):
        names = ["M1", "M2", "M3", "gamma1", "gamma2", "gamma3"]
        if self.kind == "revolution":
            names += [f"sigma{i}" for i in range(1, 6)]
        return names


def _bundle(cfg, kind):
    try:
        return Bundle(cfg, kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_states(cfg: RunConfig, system, count):
    rng = np.random.default_rng(cfg.seed)
    q0, pi0 = cfg["initial.q"], cfg["initial.pi"]
    states = []
    if q0 is not None or pi0 is not None:
        if q0 is None or pi0 is None:
            raise ConfigError("initial.q and initial.pi must be given together")
        if q0.size != system.n or pi0.size != system.r:
            raise ConfigError(f"initial.q needs {system.n} entries and initial.pi {system.r}")
        if not system.in_domain(q0):
            raise ConfigError(f"initial.q = {q0.tolist()} lies outside the Euler chart")
        states.append(PhaseState(q0, pi0))
    while len(states) < count:
        states.append(PhaseState(system.sample_point(rng), rng.normal(size=system.r)))
    return states


def _lambda(bundle, mode, seed):
    if mode == "auto":
        return bundle.lam
    if mode == "zero":
        return ThreeFormSpec.zero(bundle.system.r)
    return random_three_form(bundle.system.r, bundle.system.n, np.random.default_rng(seed + 7919))


# -- simulate ------------------------------------------------------------------


def _run_rows(bundle, traj):
    sys_ = bundle.system
    mon_names = ["H"] + [f"p_{z.name}" for z in sys_.generators]
    rows = []
    reduced = []
    for i, st in enumerate(traj.states):
        red = bundle.reduced(st)
        reduced.append(red)
        rows.append([traj.times[i], *st.q, *st.pi, *(traj.monitors[m][i] for m in mon_names), *red])
    header = (["t"] + list(sys_.coord_names) + [f"pi{i + 1}" for i in range(sys_.r)] + mon_names
              + bundle.reduced_names())
    return header, rows, np.array(reduced)


def _summary(bundle, traj, reduced, state0):
    drift = {"H_relative": traj.drift("H", relative=True)}
    for z in bundle.system.generators:
        drift[f"p_{z.name}"] = traj.drift(f"p_{z.name}")
    M, gamma = reduced[:, :3], reduced[:, 3:6]
    mg = np.einsum("ij,ij->i", M, gamma)
    drift["gamma_norm"] = float(np.max(np.abs(np.linalg.norm(gamma, axis=1) - 1.0)))
    if bundle.kind == "chaplygin":
        drift["M_dot_gamma"] = float(np.max(np.abs(mg - mg[0])))
    return {
        "initial": {"q": state0.q, "pi": state0.pi},
        "t_final": float(traj.times[-1]),
        "n_rows": len(traj),
        "drift": drift,
    }


def cmd_simulate(args, cfg: RunConfig):
    bundle = _bundle(cfg, cfg.system)
    icfg = cfg.integrator(args.t_end)
    states = _initial_states(cfg, bundle.system, max(1, cfg["batch.count"]))
    try:
        trajs = integrate_batch(bundle.system, states, icfg, jobs=args.jobs)
    except ChartExit as exc:
        tmin = bundle.params.theta_min
        raise CliError(
            f"integration failed: chart invariant theta in ({tmin:g}, pi - {tmin:g}) violated at t={exc.time:.6g}",
            EXIT_RUNTIME,
        ) from exc
    files, runs = {}, []
    for i, (st, traj) in enumerate(zip(states, trajs)):
        header, rows, reduced = _run_rows(bundle, traj)
        name = "trajectory.csv" if len(states) == 1 else f"trajectory_{i:03d}.csv"
        files[name] = csv_text(header, rows)
        run = _summary(bundle, traj, reduced, st)
        run["file"] = name
        runs.append(run)
    summary = {
        "command": "simulate",
        "system": bundle.system.name,
        "seed": cfg.seed,
        "integrator": {"method": icfg.method, "step": icfg.step, "t_end": icfg.t_end, "stride": icfg.sample_stride},
        "runs": runs,
    }
    files["summary.json"] = dumps(summary)
    _write_all(args.out, files)
    sys.stdout.write(files["summary.json"])
    return EXIT_OK


# -- verify --------------------------------------------------------------------


def _skew_report(bundle, n, seed):
    rng = np.random.default_rng(seed)
    samples = [bundle.system.sample_point(rng) for _ in range(n)]
    worst, ok, tol = 0.0, True, 1e-8
    for z in bundle.system.generators:
        rep = skew_test(bundle.system, z, samples, tol=tol)
        worst = max(worst, rep.max_residual)
        ok = ok and rep.passed
    return Report("skew", bundle.system.name, n, seed, worst, tol, ok)


def _chaplygin_jacobi(params, n, seed, system_name):
    def sampler(rng):
        g = rng.normal(size=3)
        return np.concatenate([rng.normal(size=3), g / np.linalg.norm(g)])

    expected_fail = not np.isclose(params.I1, params.I3)
    return verify_rank2_jacobi(lambda x: chap.reduced_bracket_MG(params, x[:3], x[3:]), sampler, n, seed,
                               expected_fail=expected_fail, system=system_name)


def _sigma_jacobi(bundle, n, seed):
    def sampler(rng):
        return np.array([rng.uniform(-0.9, 0.9), *rng.normal(size=3)])

    return verify_rank2_jacobi(lambda x: rev.sigma_bracket(bundle.profile, bundle.params, x), sampler, n, seed,
                               system=bundle.system.name + "-sigma")


def _plan(cfg, system_names, checks, lam_mode, n, n_jacobi):
    """List of zero-argument jobs, one per report, in a fixed order."""
    seed = cfg.seed
    jobs = []
    for name in system_names:
        if name == "chaplygin-intermediate":
            if "rank2-jacobi" in checks:
                params = cfg.chaplygin_params()
                jobs.append(lambda p=params: _chaplygin_jacobi(p, n_jacobi, seed, "chaplygin-intermediate"))
            continue
        bundle = _bundle(cfg, name)
        lam = _lambda(bundle, lam_mode, seed)
        for check in checks:
            if check == "casimir":
                jobs.append(lambda b=bundle, lam=lam: verify_theorem_main(b.system, n_samples=n, seed=seed, lam=lam))
            elif check == "dynamics":
                jobs.append(lambda b=bundle, lam=lam: verify_dynamics_equivalence(b.system, lam, n, seed))
            elif check == "invertibility":
                jobs.append(lambda b=bundle, lam=lam: verify_invertibility(b.system, lam, min(n, 100), seed))
            elif check == "rank2-jacobi":
                if name == "chaplygin":
                    jobs.append(lambda b=bundle: _chaplygin_jacobi(b.params, n_jacobi, seed, "chaplygin-intermediate"))
                else:
                    jobs.append(lambda b=bundle: _sigma_jacobi(b, n_jacobi, seed))
            elif check == "skew":
                jobs.append(lambda b=bundle: _skew_report(b, min(n, 200), seed))
    return jobs


def cmd_verify(args, cfg: RunConfig):
    checks = CHECKS if args.check == "all" else (args.check,)
    if args.system is not None:
        names = (args.system,)
    elif args.check == "all":
        names = ("chaplygin", "revolution")
    else:
        names = (cfg.system,)
    n = args.n_samples or cfg["verify.n_samples"]
    n_jacobi = args.n_samples or cfg["verify.jacobi_samples"]
    jobs = _plan(cfg, names, checks, args.lam, n, n_jacobi)
    if not jobs:
        raise ConfigError(f"check {args.check!r} does not apply to system {names[0]!r}")
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(lambda job: job(), jobs))
    else:
        reports = [job() for job in jobs]
    ok = all(r.ok for r in reports)
    text = dumps({"command": "verify", "lambda": args.lam, "pass": ok, "reports": [r.to_dict() for r in reports]})
    if args.out:
        _write_all(Path(args.out).parent, {Path(args.out).name: text})
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_VERIFY


# -- gauge ODE -----------------------------------------------------------------


def cmd_gauge_ode(args, cfg: RunConfig):
    if cfg.system != "revolution":
        raise ConfigError("gauge-ode needs system = revolution")
    profile, params = cfg.profile(), cfg.revolution_params()
    try:
        sols = rev.solve_gauge_ode(profile, params, n=cfg["revolution.ode_steps"], tol=rev.FLOQUET_TOL)
    except FloquetViolation as exc:
        raise CliError(f"Floquet check failed: {exc}", EXIT_RUNTIME) from exc
    grid = sols[0].theta_grid
    rows = np.column_stack([grid, sols[0].values, sols[1].values])
    residuals = {
        f"solution{j + 1}": {"evenness": s.evenness_residual, "periodicity": s.periodicity_residual}
        for j, s in enumerate(sols)
    }
    summary = {
        "command": "gauge-ode",
        "profile": {"kind": profile.kind, "R": profile.R, "offset": profile.offset, "a": profile.a, "c": profile.c},
        "params": {"I1": params.I1, "I3": params.I3, "m": params.m},
        "n_steps": int(cfg["revolution.ode_steps"]),
        "threshold": rev.FLOQUET_TOL,
        "residuals": residuals,
        "min_abs_wronskian": float(np.min(np.abs(rev.wronskian(sols)))),
    }
    files = {
        "gauge_ode.csv": csv_text(["theta", "g1", "k1", "g2", "k2"], rows),
        "gauge_ode.json": dumps(summary),
    }
    _write_all(args.out, files)
    sys.stdout.write(files["gauge_ode.json"])
    return EXIT_OK


# -- bracket table -------------------------------------------------------------


def cmd_bracket_table(args, cfg: RunConfig):
    bundle = _bundle(cfg, cfg.system)
    state = _initial_states(cfg, bundle.system, 1)[0]
    lam = _lambda(bundle, args.lam, cfg.seed)
    nh = pi_nh(bundle.system, state)
    gl = gauge_transform(bundle.system, lam, state)
    table = {
        "command": "bracket-table",
        "system": bundle.system.name,
        "frame": list(bundle.system.frame_names),
        "lambda": args.lam,
        "state": {"q": state.q, "pi": state.pi},
        "rho": nh.rho,
        "pi_nh_momentum_block": nh.lower_right,
        "pi_lambda_momentum_block": gl.lower_right,
    }
    text = dumps(table)
    if args.out:
        _write_all(Path(args.out).parent, {Path(args.out).name: text})
    sys.stdout.write(text)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="nonholo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        return p

    p = common(sub.add_parser("simulate", help="integrate the nonholonomic system"))
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--out", default="nonholo-out", help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("verify", help="run numerical checks and emit a JSON report"))
    p.add_argument("--check", default="all", choices=CHECKS + ("all",))
    p.add_argument("--system", choices=VERIFY_SYSTEMS, default=None)
    p.add_argument("--lambda", dest="lam", default="auto", choices=("auto", "zero", "random"))
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--out", default=None, help="also write the report to this file")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("gauge-ode", help="solve the gauge ODE of the solid of revolution"))
    p.add_argument("--out", default="nonholo-out", help="output directory")
    p.set_defaults(func=cmd_gauge_ode)

    p = common(sub.add_parser("bracket-table", help="dump the bracket blocks at one state"))
    p.add_argument("--lambda", dest="lam", default="auto", choices=("auto", "zero", "random"))
    p.add_argument("--out", default=None, help="also write the table to this file")
    p.set_defaults(func=cmd_bracket_table)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"nonholo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"nonholo: {exc}", file=sys.stderr)
        return exc.code
    except NonholoError as exc:
        print(f"nonholo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
