"""Command-line client for the verification pipeline.

Subcommands: check | fit | calibrate | verify | evaluate | min-delta.
Each flag may also be supplied through ``--config FILE`` (flat ``key: value``
lines, keys matching the long flag names with dashes or underscores);
explicit command-line flags win.  Exit codes: 0 = certified / run complete,
2 = not certified, 1 = error.
"""

import argparse
import hashlib
import sys
from pathlib import Path

from . import __version__
from .conformal import read_calibration, write_calibration
from .errors import DataFormatError, MonitorError
from .formulas import (
    bind,
    formula_hash,
    formula_length,
    horizon,
    is_bounded,
    render,
    to_pnf,
    variable_names,
)
from .harness import evaluate, generate, make_system, write_eval_outputs
from .parsing import parse
from .predicates import L2, NORMS
from .predictors import (
    fit_ar,
    fit_hold_last,
    load_external,
    load_predictor,
    load_trajectories_csv,
    load_trajectories_jsonl,
    save_predictor,
)
from .verify import (
    calibrate_direct,
    calibrate_indirect,
    min_delta_search,
    verdict_record,
    verify_direct,
    verify_indirect,
    verify_observed,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2


def read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ":" in line:
                key, _, value = line.partition(":")
            elif "=" in line:
                key, _, value = line.partition("=")
            else:
                raise DataFormatError(f"{path}:{lineno}: expected 'key: value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file; flags keep priority."""
    if not getattr(args, "config", None):
        return args
    file_values = read_config_file(args.config)
    for key, value in file_values.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _config_hash(args: argparse.Namespace) -> str:
    relevant = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and v is not None
    }
    blob = "\n".join(f"{k}={v}" for k, v in relevant.items())
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _load_trajectories(path):
    path = str(path)
    if path.endswith(".jsonl"):
        trajs = load_trajectories_jsonl(path)
        names = [f"x{i + 1}" for i in range(trajs[0].dim)]
        return trajs, names
    return load_trajectories_csv(path)


def _resolve_tau0(value, t: int) -> int:
    if value in (None, "zero"):
        return 0
    if value == "current":
        return t
    return int(value)


def _resolve_formula(args, variables):
    text = args.formula
    if text is None and getattr(args, "formula_file", None):
        text = Path(args.formula_file).read_text(encoding="utf-8").strip()
    if text is None:
        raise MonitorError("no formula given; use --formula or --formula-file")
    return parse(text, variables)


def _fit_predictor(args, trajs, t, horizon_steps, dim):
    spec = args.predictor or "ar:2"
    if spec.startswith("ar"):
        order = int(spec.split(":", 1)[1]) if ":" in spec else 2
        return fit_ar(trajs, order, t, horizon_steps)
    if spec == "hold-last":
        return fit_hold_last(t, horizon_steps, dim)
    if spec.startswith("external:"):
        raise MonitorError(
            "external predictions need no fitting; pass the table as --predictor-file "
            "to calibrate/verify"
        )
    raise MonitorError(f"unknown predictor spec {spec!r}")


def _load_predictor_any(path, t: int, horizon_steps: int):
    """JSON predictor artifact, or an external prediction table when given a CSV."""
    if str(path).endswith(".csv"):
        return load_external(path, t, horizon_steps)
    return load_predictor(path)


def cmd_check(args) -> int:
    f = parse(args.formula)
    print(f"formula: {render(f)}")
    bounded = is_bounded(f)
    print(f"bounded: {str(bounded).lower()}")
    if bounded:
        length = formula_length(f)
        print(f"length: {length}")
        if args.t is not None:
            t = int(args.t)
            tau0 = _resolve_tau0(args.tau0, t)
            spec = horizon(tau0, t, length)
            print(f"horizon: {spec.horizon}")
    print(f"pnf: {render(to_pnf(f))}")
    print(f"formula_hash: {formula_hash(f)}")
    return EXIT_OK


def cmd_fit(args) -> int:
    trajs, names = _load_trajectories(args.data)
    f = _resolve_formula(args, names)
    t = int(args.t)
    tau0 = _resolve_tau0(args.tau0, t)
    h = horizon(tau0, t, formula_length(f)).horizon
    if h <= 0:
        raise MonitorError(
            f"horizon {h} <= 0: nothing to predict; the formula is decidable at t={t}"
        )
    predictor = _fit_predictor(args, trajs, t, h, trajs[0].dim)
    save_predictor(predictor, args.out)
    print(f"fitted {predictor.kind} predictor for t={t}, horizon={h}; wrote {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    trajs, names = _load_trajectories(args.data)
    f = _resolve_formula(args, names)
    t = int(args.t)
    tau0 = _resolve_tau0(args.tau0, t)
    delta = float(args.delta)
    h = horizon(tau0, t, formula_length(f)).horizon
    predictor = _load_predictor_any(args.predictor_file, t, h)
    method = args.method or "direct"
    if method == "direct":
        artifact = calibrate_direct(predictor, trajs, f, tau0, t, delta)
    elif method == "indirect":
        f_pnf = to_pnf(f)
        artifact = calibrate_indirect(
            predictor, trajs, t, h, delta, args.norm or L2, formula=f_pnf, tau0=tau0
        )
    else:
        raise MonitorError(f"unknown method {method!r}")
    write_calibration(artifact, args.out)
    if artifact.method == "direct":
        print(f"C = {artifact.region.threshold!r} (p={artifact.region.rank}, k={artifact.region.sample_size})")
    else:
        print(f"calibrated {len(artifact.regions)} per-step constants (delta/H = {delta / h!r})")
        if artifact.any_infinite:
            print("warning: some constants are infinite; use a larger validation set")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    trajs, names = _load_trajectories(args.data)
    f = _resolve_formula(args, names)
    artifact = read_calibration(args.calibration)
    t = artifact.t
    tau0 = artifact.tau0
    traj = _pick_trajectory(trajs, args.traj_id)
    prefix = traj.states[: t + 1]
    if len(prefix) < t + 1:
        raise MonitorError(f"trajectory {traj.traj_id!r} is shorter than t+1 = {t + 1}")
    predictor = _load_predictor_any(args.predictor_file, t, artifact.horizon)
    if artifact.method == "direct":
        verdict = verify_direct(prefix, predictor, f, tau0, artifact)
    else:
        verdict = verify_indirect(prefix, predictor, to_pnf(f), tau0, artifact)
    line = verdict_record(verdict, extra={"config_hash": _config_hash(args)})
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
    return EXIT_OK if verdict.guaranteed else EXIT_NOT_CERTIFIED


def _pick_trajectory(trajs, traj_id):
    if traj_id is None:
        return trajs[0]
    for traj in trajs:
        if traj.traj_id == traj_id:
            return traj
    raise MonitorError(f"no trajectory with id {traj_id!r} in the data file")


def cmd_evaluate(args) -> int:
    system = make_system(
        args.system,
        **{
            k: float(getattr(args, k))
            for k in ("noise_scale", "init_halfwidth", "step_sigma")
            if getattr(args, k, None) is not None
        },
        **({"length": int(args.length)} if args.length is not None else {}),
    )
    f = _resolve_formula(args, None)
    names = variable_names(f)
    default_names = [f"x{i + 1}" for i in range(system.dim)]
    if all(n in default_names for n in names):
        f = bind(f, default_names)
    elif len(names) == 1 and system.dim == 1:
        f = bind(f, names)
    else:
        raise MonitorError(
            f"formula components {names} do not match the system's {default_names}"
        )
    t = int(args.t)
    tau0 = _resolve_tau0(args.tau0, t)
    sizes = tuple(int(s) for s in args.split.split(","))
    predictor_kind, ar_order = "ar", 2
    if args.predictor:
        if args.predictor.startswith("ar"):
            ar_order = int(args.predictor.split(":", 1)[1]) if ":" in args.predictor else 2
        elif args.predictor == "hold-last":
            predictor_kind = "hold-last"
        else:
            raise MonitorError(f"evaluate supports ar:<order> or hold-last, not {args.predictor!r}")
    report = evaluate(
        method=args.method or "direct",
        system=system,
        formula=f,
        tau0=tau0,
        t=t,
        delta=float(args.delta),
        split_sizes=sizes,
        seed=int(args.seed),
        predictor_kind=predictor_kind,
        ar_order=ar_order,
        norm=args.norm or L2,
    )
    outdir = Path(args.outdir or ".")
    trajectories = generate(system, sum(sizes), int(args.seed))
    write_eval_outputs(
        report, outdir, trajectories=trajectories,
        variables=[f"x{i + 1}" for i in range(system.dim)],
    )
    gs, gv, ns, nv = report.counts
    print(f"verdicts: guaranteed+satisfied={gs} guaranteed+violated={gv} "
          f"other+satisfied={ns} other+violated={nv}")
    print(f"coverage: {report.coverage_count}/{report.n_test}"
          f" ({report.coverage_fraction:.3f})")
    if report.region_infinite:
        print("note: region constants include inf; validation set too small for this delta")
    print(f"wrote {outdir / 'report.txt'}")
    return EXIT_OK


def cmd_min_delta(args) -> int:
    trajs, names = _load_trajectories(args.data)
    f = _resolve_formula(args, names)
    t = int(args.t)
    tau0 = _resolve_tau0(args.tau0, t)
    grid = [float(v) for v in args.grid.split(",")]
    traj = _pick_trajectory(trajs, args.traj_id)
    val = [tr for tr in trajs if tr.traj_id != traj.traj_id]
    h = horizon(tau0, t, formula_length(f)).horizon
    if h <= 0:
        verdict = verify_observed(traj.states[: t + 1], f, tau0)
        result = (grid[0], verdict) if verdict.guaranteed else None
    else:
        predictor = _load_predictor_any(args.predictor_file, t, h)
        method = args.method or "direct"
        result = min_delta_search(
            method, predictor, val, f, tau0, t, grid, traj.states[: t + 1], args.norm or L2
        )
    if result is None:
        print("no grid value certifies this prefix")
        return EXIT_NOT_CERTIFIED
    delta, verdict = result
    print(f"min_delta={delta!r}")
    print(verdict_record(verdict, extra={"config_hash": _config_hash(args)}))
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, *names):
    if "config" in names:
        p.add_argument("--config", help="flat key-value config file; flags override")
    if "formula" in names:
        p.add_argument("--formula", help="formula text")
        p.add_argument("--formula-file", help="file containing the formula text")
    if "data" in names:
        p.add_argument("--data", help="trajectory file (.csv or .jsonl)")
    if "t" in names:
        p.add_argument("--t", help="current time step (last observed index)")
    if "tau0" in names:
        p.add_argument("--tau0", help="enable time: zero | current | explicit step")
    if "delta" in names:
        p.add_argument("--delta", help="failure probability in (0,1)")
    if "method" in names:
        p.add_argument("--method", choices=["direct", "indirect"], help="verification route")
    if "norm" in names:
        p.add_argument("--norm", choices=list(NORMS), help="ball norm for the indirect method")
    if "predictor" in names:
        p.add_argument("--predictor", help="ar:<order> | hold-last | external:<table.csv>")
    if "predictor_file" in names:
        p.add_argument("--predictor-file", help="fitted predictor artifact (JSON)")
    if "seed" in names:
        p.add_argument("--seed", help="random seed")
    if "traj_id" in names:
        p.add_argument("--traj-id", help="trajectory id to verify (default: first)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prvkit",
        description="Predictive runtime verification with conformal prediction regions",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse a formula and report its properties")
    _add_common(p, "config", "t", "tau0")
    p.add_argument("--formula", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("fit", help="fit a predictor on training trajectories")
    _add_common(p, "config", "formula", "data", "t", "tau0", "predictor")
    p.add_argument("--out", required=True, help="where to write the predictor artifact")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="compute conformal region constants")
    _add_common(p, "config", "formula", "data", "t", "tau0", "delta", "method", "norm",
                "predictor_file")
    p.add_argument("--out", required=True, help="where to write the calibration artifact")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", help="issue a verdict for one observed prefix")
    _add_common(p, "config", "formula", "data", "predictor_file", "traj_id")
    p.add_argument("--calibration", required=True, help="calibration artifact file")
    p.add_argument("--out", help="also write the verdict record here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="run the synthetic end-to-end evaluation")
    _add_common(p, "config", "formula", "t", "tau0", "delta", "method", "norm", "predictor",
                "seed")
    p.add_argument("--system", choices=["drift-sine", "switching-noise", "falling-recovery"])
    p.add_argument("--split", help="train,val,test sizes, e.g. 700,200,100")
    p.add_argument("--noise-scale", dest="noise_scale")
    p.add_argument("--init-halfwidth", dest="init_halfwidth")
    p.add_argument("--step-sigma", dest="step_sigma")
    p.add_argument("--length", help="trajectory length")
    p.add_argument("--outdir", help="directory for report and histogram tables")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("min-delta", help="smallest certifying failure probability on a grid")
    _add_common(p, "config", "formula", "data", "t", "tau0", "method", "norm",
                "predictor_file", "traj_id")
    p.add_argument("--grid", required=True, help="comma-separated deltas, ascending")
    p.set_defaults(func=cmd_min_delta)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return args.func(args)
    except (MonitorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
