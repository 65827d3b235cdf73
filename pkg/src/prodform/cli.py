"""Command-line front end.

Subcommands:
    model build | show | validate
    region check
    solve
    run-online
    constants
    schedule check

Every command honors --json (machine-readable output), --seed, --out-dir,
and --config (TOML or JSON file supplying option defaults; explicit flags
win).  Exit codes: 0 success, 1 negative verdict (target not achievable,
check failed), 2 usage or malformed input.
"""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
from pathlib import Path

import numpy as np

from . import exact, model as model_mod, networks, online, region
from .exact import MaxIterationsError, NotAchievableError
from .model import ReducibleModelError
from .online import ScheduleError

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Malformed input; terminates with exit code 2."""


def _floats(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(v) for v in str(text).split(",") if v != ""])
    except ValueError as exc:
        raise CliError(f"expected comma-separated numbers, got {text!r}") from exc


def _matrix(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([[float(v) for v in row.split(",")] for row in str(text).split(";")])
    except ValueError as exc:
        raise CliError(f"expected rows like '0,1;1,0', got {text!r}") from exc


def _ints(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v != ""]
    except ValueError as exc:
        raise CliError(f"expected comma-separated integers, got {text!r}") from exc


def _load_transform(path) -> np.ndarray:
    try:
        mat = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise CliError(f"cannot read transform file: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"malformed transform CSV {path}: {exc}") from exc
    return mat


def _add_common(parser):
    parser.add_argument("--json", action="store_true", help="emit machine-readable JSON")
    parser.add_argument("--seed", type=int, default=0, help="base random seed")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--config", default=None, help="TOML/JSON file with option defaults (flags win)")


def _add_model_source(parser):
    parser.add_argument("--model", default=None, help="model JSON file")
    parser.add_argument("--build", default=None, choices=["birth-death", "jackson", "csma"],
                        help="build one of the reference networks instead of loading a file")
    _add_builder_options(parser)


def _add_builder_options(parser):
    parser.add_argument("--n", type=int, default=None, help="birth-death: number of up-transitions")
    parser.add_argument("--mu", default=None, help="birth-death: down rates, e.g. 1,1,1")
    parser.add_argument("--queues", type=int, default=None, help="jackson: number of queues")
    parser.add_argument("--customers", type=int, default=None, help="jackson: number of customers")
    parser.add_argument("--routing", default=None, help="jackson: routing matrix rows, e.g. '0,1;1,0'")
    parser.add_argument("--sizes", default=None, help="csma: class sizes, e.g. 2,5,3")
    parser.add_argument("--scheme", default="ii", choices=["i", "ii"],
                        help="csma: one shared rate (i) or one rate per class (ii)")


def _build_from_args(kind, args) -> model_mod.ProductFormModel:
    if kind == "birth-death":
        if args.n is None or args.mu is None:
            raise CliError("birth-death needs --n and --mu")
        return networks.build_birth_death(args.n, _floats(args.mu))
    if kind == "jackson":
        if args.queues is None or args.customers is None or args.routing is None:
            raise CliError("jackson needs --queues, --customers and --routing")
        return networks.build_jackson(args.queues, args.customers, _matrix(args.routing))
    if kind == "csma":
        if args.sizes is None:
            raise CliError("csma needs --sizes")
        scheme = networks.CSMA_SINGLE_PARAM if args.scheme == "i" else networks.CSMA_PER_CLASS
        return networks.build_csma(_ints(args.sizes), scheme=scheme)
    raise CliError(f"unknown builder {kind!r}")


def _resolve_model(args) -> model_mod.ProductFormModel:
    if args.model is not None and args.build is not None:
        raise CliError("give either --model or --build, not both")
    if args.model is not None:
        try:
            return model_mod.load_model(args.model)
        except FileNotFoundError as exc:
            raise CliError(f"model file not found: {args.model}") from exc
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise CliError(f"malformed model file {args.model}: {exc}") from exc
    if args.build is not None:
        return _build_from_args(args.build, args)
    raise CliError("a model is required: --model FILE or --build KIND ...")


def _load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {path}")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py >= 3.11
        except ImportError:
            try:
                import tomli as tomllib
            except ImportError as exc:
                raise CliError("TOML config needs Python >= 3.11 or the tomli package; use JSON instead") from exc
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise CliError(f"malformed TOML config: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON config: {exc}") from exc


def _apply_config(args, argv) -> None:
    """Fill options from the config file wherever no explicit flag was given."""
    if args.config is None:
        return
    data = _load_config_file(args.config)
    if not isinstance(data, dict):
        raise CliError("config file must hold a table/object of options")
    explicit = set()
    for tok in argv:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, value in data.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise CliError(f"unknown config key {key!r} for this command")
        if dest not in explicit:
            setattr(args, dest, value)


def _emit(args, human_lines, payload) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_model_build(args, argv):
    built = _build_from_args(args.kind, args)
    text = model_mod.dumps_model(built)
    if args.out is not None:
        out = Path(args.out_dir) / args.out if not Path(args.out).is_absolute() else Path(args.out)
        out.write_text(text, encoding="utf-8")
        if not args.json:
            print(f"wrote {out}")
        else:
            print(json.dumps({"written": str(out)}))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_model_show(args, argv):
    m = _resolve_model(args)
    payload = model_mod.model_to_dict(m)
    payload["num_states"] = m.num_states
    payload["num_params"] = m.num_params
    lines = [
        f"states: {m.num_states}",
        f"parameters: {m.num_params}",
        f"transitions: {len(m.transitions)}",
        "A:",
        str(m.A),
        f"b: {m.b}",
    ]
    _emit(args, lines, payload)
    return EXIT_OK


def cmd_model_validate(args, argv):
    m = _resolve_model(args)
    rng = np.random.default_rng(args.seed)
    probes = [rng.uniform(-args.probe_range, args.probe_range, m.num_params)
              for _ in range(args.probes)]
    try:
        report = model_mod.validate(m, probes, tol_db=args.tol_db)
    except ReducibleModelError as exc:
        _emit(args, [f"FAIL: {exc}"], {"ok": False, "irreducible": False, "error": str(exc)})
        return EXIT_NEGATIVE
    payload = {
        "ok": report.ok,
        "irreducible": report.irreducible,
        "max_residual": report.max_residual,
        "worst_edge": [str(v) for v in report.worst_edge],
        "probes": len(report.probes),
    }
    _emit(args, [str(report)], payload)
    return EXIT_OK if report.ok else EXIT_NEGATIVE


def cmd_region_check(args, argv):
    m = _resolve_model(args)
    gamma = _floats(args.gamma)
    transform = _load_transform(args.transform) if args.transform else None
    res = region.check_membership(m.A, gamma, transform=transform)
    payload = {
        "achievable": res.achievable,
        "margin": None if math.isinf(res.margin) else res.margin,
        "witness_alpha": None if res.witness_alpha is None else [float(v) for v in res.witness_alpha],
    }
    lines = [f"achievable: {'yes' if res.achievable else 'no'}", f"margin: {res.margin:.6g}"]
    if res.witness_alpha is not None:
        lines.append(f"witness alpha: min {res.witness_alpha.min():.6g}, max {res.witness_alpha.max():.6g}")
    _emit(args, lines, payload)
    return EXIT_OK if res.achievable else EXIT_NEGATIVE


def _read_init_r(path) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read init file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed init file {path}: {exc}") from exc
    if isinstance(data, dict):
        for key in ("r_star", "r"):
            if key in data:
                data = data[key]
                break
        else:
            raise CliError(f"init file {path} has no 'r_star' or 'r' entry")
    return np.asarray(data, dtype=float)


def cmd_solve(args, argv):
    m = _resolve_model(args)
    gamma = _floats(args.gamma)
    transform = _load_transform(args.transform) if args.transform else None
    res = region.check_membership(m.A, gamma, transform=transform)
    if not res.achievable:
        _emit(args,
              [f"target not achievable (margin {res.margin:.6g}); run `prodform region check` for details"],
              {"achievable": False, "margin": None if math.isinf(res.margin) else res.margin})
        return EXIT_NEGATIVE
    plain_gamma = m.A.T @ res.witness_alpha if transform is not None else gamma
    init_r = _read_init_r(args.init_from) if args.init_from else None
    try:
        sol = exact.solve_dual(m, plain_gamma, tol=args.tol, max_iters=args.max_iters, init_r=init_r)
    except (NotAchievableError, MaxIterationsError) as exc:
        _emit(args, [f"solve failed: {exc}"], {"achievable": True, "solved": False, "error": str(exc)})
        return EXIT_NEGATIVE
    agg = exact.aggregates(m, sol.r_star)
    achieved = agg if transform is None else transform @ agg
    payload = {
        "achievable": True,
        "solved": True,
        "r_star": [float(v) for v in sol.r_star],
        "aggregates": [float(v) for v in achieved],
        "iterations": sol.iterations,
        "grad_norm": sol.final_grad_norm,
        "margin": res.margin,
    }
    lines = [
        f"r*: {sol.r_star}",
        f"achieved aggregates: {achieved}",
        f"gradient norm: {sol.final_grad_norm:.3e}",
        f"iterations: {sol.iterations}",
    ]
    _emit(args, lines, payload)
    return EXIT_OK


def _parse_box(text, d) -> np.ndarray:
    # format: lo:hi,lo:hi (one pair per parameter) or a single lo:hi for all
    pairs = str(text).split(",")
    if len(pairs) == 1:
        pairs = pairs * d
    if len(pairs) != d:
        raise CliError(f"--box needs 1 or {d} lo:hi pairs")
    box = []
    for pair in pairs:
        try:
            lo, hi = pair.split(":")
            box.append([float(lo), float(hi)])
        except ValueError as exc:
            raise CliError(f"malformed box entry {pair!r}; expected lo:hi") from exc
    return np.array(box)


def cmd_run_online(args, argv):
    m = _resolve_model(args)
    gamma = _floats(args.gamma)
    kind = args.schedule_kind.replace("-", "_")
    try:
        sched = online.make_schedule(kind, args.alpha, args.delta, m)
    except ScheduleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seeds = _ints(args.seeds) if args.seeds is not None else [args.seed]
    box = _parse_box(args.box, m.num_params) if args.box else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for seed in seeds:
        config = online.RunConfig(
            target=gamma, schedule=sched, num_iterations=args.iterations, seed=seed,
            init_r=_floats(args.init_r) if args.init_r else None,
            truncation_box=box, oracle=args.oracle)
        trace = online.run_online(m, config)
        trace_path = out_dir / f"trace_seed{seed}.csv"
        manifest_path = out_dir / f"manifest_seed{seed}.json"
        online.write_trace_csv(trace, trace_path, include_pihat=args.include_pihat)
        online.write_run_manifest(m, config, manifest_path)
        results.append({"seed": seed, "final_error": trace.final_error(),
                        "trace": str(trace_path), "manifest": str(manifest_path)})

    errors = [r["final_error"] for r in results]
    within = sum(1 for e in errors if e <= args.success_tol)
    payload = {
        "runs": results,
        "median_final_error": statistics.median(errors),
        "success_tol": args.success_tol,
        "within_tol": within,
        "total": len(errors),
    }
    lines = ["seed  final_error"]
    lines += [f"{r['seed']:>4}  {r['final_error']:.6f}" for r in results]
    lines.append(f"median final error: {payload['median_final_error']:.6f}")
    lines.append(f"within {args.success_tol}: {within}/{len(errors)}")
    _emit(args, lines, payload)
    return EXIT_OK


def cmd_constants(args, argv):
    m = _resolve_model(args)
    c = online.constants(m)
    payload = {"c_g": c.c_g, "c_l": c.c_l, "c_4": c.c_4, "max_abs_row_sum": c.max_abs_row_sum}
    lines = [f"c_g: {c.c_g:g}", f"c_l: {c.c_l:g}", f"c_4: {c.c_4:g}",
             f"max_abs_row_sum: {c.max_abs_row_sum:g}"]
    _emit(args, lines, payload)
    return EXIT_OK


def cmd_schedule_check(args, argv):
    kind = args.kind.replace("-", "_")
    if kind == online.VARIANT_B or args.model or args.build:
        m = _resolve_model(args)
        try:
            sched = online.make_schedule(kind, args.alpha, args.delta, m)
        except ScheduleError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        min_delta = 1.0 + args.alpha
        if not args.delta > min_delta:
            print(f"error: variant_a needs delta > 1 + alpha = {min_delta}", file=sys.stderr)
            return EXIT_USAGE
        alpha, delta = args.alpha, args.delta
        sched = online.Schedule(
            kind=online.VARIANT_A, alpha=alpha, delta=delta,
            step=lambda n: 1.0 / (n * math.log(n + 1.0)),
            period=lambda n: float(n) ** delta)
    report = online.check_schedule_conditions(sched, horizon=args.horizon)
    payload = {
        "horizon": report.horizon,
        "condition_i_diverges": report.condition_i_diverges,
        "condition_i_square_summable": report.condition_i_square_summable,
        "condition_i_ok": report.condition_i_ok,
        "condition_ii_ok": report.condition_ii_ok,
        "passed": report.passed,
        "combos": [{"c2": c.c2, "c3": c.c3, "c4": c.c4, "tail_max": c.tail_max, "status": c.status}
                   for c in report.combos],
        "notes": report.notes,
    }
    lines = [
        f"condition (i): step sums diverge: {report.condition_i_diverges}, "
        f"squares summable: {report.condition_i_square_summable}",
        f"condition (ii): {'ok' if report.condition_ii_ok else 'FAILED'} "
        f"({len(report.combos)} constant samples)",
        f"passed: {report.passed}",
    ]
    lines += [f"note: {n}" for n in report.notes]
    _emit(args, lines, payload)
    return EXIT_OK if report.passed else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prodform",
        description="Decide, solve, and tune aggregate performance targets of product-form Markov models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="build, inspect, or validate models")
    model_sub = p_model.add_subparsers(dest="subcommand", required=True)

    p_build = model_sub.add_parser("build", help="build a reference network and emit its JSON")
    p_build.add_argument("kind", choices=["birth-death", "jackson", "csma"])
    _add_builder_options(p_build)
    p_build.add_argument("--out", default=None, help="output file (default: stdout)")
    _add_common(p_build)
    p_build.set_defaults(handler=cmd_model_build)

    p_show = model_sub.add_parser("show", help="print a model summary")
    _add_model_source(p_show)
    _add_common(p_show)
    p_show.set_defaults(handler=cmd_model_show)

    p_val = model_sub.add_parser("validate", help="check generator/product-form consistency")
    _add_model_source(p_val)
    p_val.add_argument("--probes", type=int, default=100, help="number of random parameter probes")
    p_val.add_argument("--probe-range", type=float, default=3.0, help="probes drawn from [-range, range]^d")
    p_val.add_argument("--tol-db", type=float, default=model_mod.TOL_DETAILED_BALANCE)
    _add_common(p_val)
    p_val.set_defaults(handler=cmd_model_validate)

    p_region = sub.add_parser("region", help="achievability of aggregate targets")
    region_sub = p_region.add_subparsers(dest="subcommand", required=True)
    p_check = region_sub.add_parser("check", help="decide whether a target is achievable")
    _add_model_source(p_check)
    p_check.add_argument("--gamma", required=True, help="target vector, e.g. 0.6,0.3")
    p_check.add_argument("--transform", default=None, help="CSV file with an affine transform matrix B")
    _add_common(p_check)
    p_check.set_defaults(handler=cmd_region_check)

    p_solve = sub.add_parser("solve", help="find parameters achieving a target exactly")
    _add_model_source(p_solve)
    p_solve.add_argument("--gamma", required=True)
    p_solve.add_argument("--transform", default=None, help="CSV file with an affine transform matrix B")
    p_solve.add_argument("--tol", type=float, default=1e-8)
    p_solve.add_argument("--max-iters", type=int, default=200_000)
    p_solve.add_argument("--init-from", default=None, help="warm-start from a JSON file with r_star/r")
    _add_common(p_solve)
    p_solve.set_defaults(handler=cmd_solve)

    p_run = sub.add_parser("run-online", help="stochastic online tuning; writes trace CSVs")
    _add_model_source(p_run)
    p_run.add_argument("--gamma", required=True)
    p_run.add_argument("--schedule-kind", default="variant-a", choices=["variant-a", "variant-b"])
    p_run.add_argument("--alpha", type=float, default=0.1)
    p_run.add_argument("--delta", type=float, default=1.2)
    p_run.add_argument("--iterations", type=int, default=200)
    p_run.add_argument("--seeds", default=None, help="comma-separated seeds (default: --seed)")
    p_run.add_argument("--init-r", default=None, help="initial parameters (default: zeros)")
    p_run.add_argument("--box", default=None, help="truncation box lo:hi[,lo:hi...]")
    p_run.add_argument("--oracle", action="store_true", help="noise-free debug mode (exact occupancies)")
    p_run.add_argument("--include-pihat", action="store_true", help="add pihat columns to trace CSVs")
    p_run.add_argument("--success-tol", type=float, default=0.1, help="summary success threshold")
    _add_common(p_run)
    p_run.set_defaults(handler=cmd_run_online)

    p_const = sub.add_parser("constants", help="print model-derived algorithm constants")
    _add_model_source(p_const)
    _add_common(p_const)
    p_const.set_defaults(handler=cmd_constants)

    p_sched = sub.add_parser("schedule", help="step/period schedule diagnostics")
    sched_sub = p_sched.add_subparsers(dest="subcommand", required=True)
    p_scheck = sched_sub.add_parser("check", help="probe the convergence conditions numerically")
    p_scheck.add_argument("--kind", default="variant-a", choices=["variant-a", "variant-b"])
    p_scheck.add_argument("--alpha", type=float, required=True)
    p_scheck.add_argument("--delta", type=float, required=True)
    p_scheck.add_argument("--horizon", type=int, default=1_000_000)
    _add_model_source(p_scheck)
    _add_common(p_scheck)
    p_scheck.set_defaults(handler=cmd_schedule_check)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        _apply_config(args, argv)
        return args.handler(args, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReducibleModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
