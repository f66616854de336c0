import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from bases.base import get_function_basis
from config.models import AlsOptions, QuadratureSettings, RunFile, TnnArch, TrainConfig
from config.settings import settings
from services.cp_rank import bound_table, rank_search
from services.quantum1d import QuadratureGrid, gauss_legendre_grid
from services.tensor_core import (
    MultiIndex,
    basis_tensor,
    dense_from_cp,
    determinant_tensor,
    random_cp,
)
from services.tnn_solver import (
    TrainTrace,
    antisymmetrized_function,
    prepare_initial_model,
    sign_flip_error,
    tnn_eval_modes,
    train,
)
from services.tpf_bridge import (
    TpfFunction,
    antisymmetrize_tpf,
    evaluate_tpf,
    permuted_evaluation,
    sample_tuples,
    tensor_to_tpf,
    tpf_to_tensor,
)
from utils.errors import ConfigError, NumericError, TpfError, TrainingDivergedError, UsageError
from utils.formats import format_tensor, read_run_file, read_system, read_tensor, read_tpf, read_trace, write_text
from utils.logger import setup_logger, update_log_level
from utils.svg_chart import Series, line_chart

logger = setup_logger(__name__)

ROUNDTRIP_TOL = 1e-10


def _validated(model_cls, **fields):
    try:
        return model_cls(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or model_cls.__name__
        raise ConfigError(f"invalid {field}: {first['msg']}", field=field)


def _index_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got '{text}'", "invalid_list")


def _grid(args) -> QuadratureGrid:
    q = _validated(QuadratureSettings, a=args.box[0], b=args.box[1],
                   subintervals=args.subintervals, qpoints=args.qpoints)
    return gauss_legendre_grid(q.a, q.b, q.subintervals, q.qpoints)


def _stamp() -> str:
    return f"generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}"


def _emit(text: str, path: Optional[str]):
    if path:
        write_text(path, text)
    else:
        sys.stdout.write(text)


# -- bounds ----------------------------------------------------------------

def cmd_bounds(args) -> int:
    table = bound_table(args.n, args.k)
    frame = pd.DataFrame(table.rows(), columns=["quantity", "value"])
    sys.stdout.write(frame.to_csv(index=False, lineterminator="\n"))
    for statement in table.tnn_statements():
        print(f"# {statement}")
    if args.csv:
        write_text(args.csv, frame.to_csv(index=False, lineterminator="\n"))
    return 0


# -- rank-est and basis ----------------------------------------------------

def _tensor_source(args):
    if args.det is not None:
        return determinant_tensor(args.det)
    if args.basis is not None:
        if args.k is None:
            raise UsageError("--basis needs --k", "missing_flag")
        return basis_tensor(MultiIndex(tuple(_index_list(args.basis))), args.k)
    return read_tensor(args.file)


def cmd_rank_est(args) -> int:
    X = _tensor_source(args)
    overrides = {
        "restarts": args.restarts,
        "max_sweeps": args.max_sweeps,
        "rel_tol": args.tol,
        "seed": args.seed,
        "workers": args.workers,
    }
    opts = _validated(AlsOptions, **{k: v for k, v in overrides.items() if v is not None})
    report = rank_search(X, args.pmax, opts)
    text = report.to_csv() + f"# {report.summary(args.pmax)}\n"
    _emit(text, args.csv)
    return 0


def cmd_basis(args) -> int:
    X = _tensor_source(args)
    N, K = X.order, X.dims[0]
    print(f"dim={math.comb(K, N)}", file=sys.stderr)
    _emit(f"# dim={math.comb(K, N)}\n" + format_tensor(X), args.out)
    return 0


# -- roundtrip -------------------------------------------------------------

def _roundtrip_row(case: int, cp, basis, points) -> dict:
    f = tensor_to_tpf(cp, basis)
    X = tpf_to_tensor(f)
    tensor_err = dense_from_cp(cp).max_abs_diff(X)
    via_cp = evaluate_tpf(f, points)
    via_dense = evaluate_tpf(TpfFunction(order=f.order, basis=basis, dense=X), points)
    scale = max(float(np.max(np.abs(via_dense))), 1e-300)
    eval_err = float(np.max(np.abs(via_cp - via_dense))) / scale
    anti_err = float(np.max(np.abs(evaluate_tpf(antisymmetrize_tpf(f), points) - permuted_evaluation(f, points))))
    return {"case": case, "rank": cp.rank, "eval_rel_err": eval_err,
            "tensor_err": tensor_err, "antisym_err": anti_err / scale}


def cmd_roundtrip(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.file:
        cps = [read_tpf(args.file)]
    else:
        cps = [random_cp((args.k,) * args.n, int(rng.integers(1, args.pmax + 1)), rng) for _ in range(args.count)]
    K, N = cps[0].dims[0], cps[0].order
    basis = get_function_basis(args.basis_kind, K, (-1.0, 1.0))
    points = sample_tuples(basis, N, args.points, args.seed)
    frame = pd.DataFrame([_roundtrip_row(case, cp, basis, points) for case, cp in enumerate(cps)])
    sys.stdout.write(frame.to_csv(index=False, float_format="%.3e", lineterminator="\n"))

    worst = float(frame[["eval_rel_err", "antisym_err"]].to_numpy().max())
    if worst > ROUNDTRIP_TOL or float(frame["tensor_err"].max()) > 1e-12:
        raise NumericError(f"roundtrip mismatch: worst relative error {worst:.3e}", "roundtrip_mismatch",
                           {"worst": worst})
    logger.info(f"✅ {len(cps)} TPF roundtrips agree (worst relative error {worst:.3e})")
    return 0


# -- train / compare / report ----------------------------------------------

def _run_setup(args):
    run = read_run_file(args.config) if args.config else RunFile()
    system = read_system(args.system)
    arch = TnnArch.from_network(run.network, system.n_electrons)
    overrides = {
        "iterations": getattr(args, "iterations", None),
        "seed": getattr(args, "seed", None),
        "loss": getattr(args, "loss", None),
        "schedule": getattr(args, "schedule", None),
        "alpha": getattr(args, "alpha", None),
    }
    fields = {**run.train.model_dump(), **{k: v for k, v in overrides.items() if v is not None}}
    return arch, system, _validated(TrainConfig, **fields)


def _comments(arch: TnnArch, config: TrainConfig, args) -> List[str]:
    return [
        _stamp(),
        f"system={args.system} N={arch.n_modes} p={arch.rank} L={arch.hidden_layers} m={arch.width}",
        f"loss={config.loss} schedule={config.schedule} lr0={config.lr0} seed={config.seed}",
    ]


def cmd_train(args) -> int:
    arch, system, config = _run_setup(args)
    grid = _grid(args)
    out_dir = settings.resolve_output_dir(args.output)
    label = args.label or f"{Path(args.system).stem}_{config.loss}"
    try:
        trace = train(arch, system, grid, config, label=label)
    except TrainingDivergedError as e:
        if e.trace is not None and e.trace.records:
            write_text(out_dir / f"{label}.csv", e.trace.to_csv(_comments(arch, config, args)))
        raise

    write_text(out_dir / f"{label}.csv", trace.to_csv(_comments(arch, config, args)))
    frame = trace.to_frame()
    chart = line_chart([Series(label, frame["iter"], frame["loss"])], title=label, y_label="loss")
    write_text(out_dir / f"{label}.svg", chart)
    print(f"final_energy={trace.final.energy:.10f} iterations={trace.final.k}")
    return 0


def _paired_runs(arch, system, grid, config: TrainConfig, seed: int):
    model = prepare_initial_model(arch, grid, seed)
    traces = {}
    for loss in ("penalized", "antisymmetrized"):
        run_config = config.model_copy(update={"loss": loss, "seed": seed})
        traces[loss] = train(arch, system, grid, run_config, initial_model=model, label=f"seed{seed}_{loss}")
    anti = antisymmetrized_function(tnn_eval_modes(traces["antisymmetrized"].final_model, grid))
    return seed, traces, anti


def cmd_compare(args) -> int:
    arch, system, config = _run_setup(args)
    grid = _grid(args)
    out_dir = settings.resolve_output_dir(args.output)
    seeds = _index_list(args.seeds)
    if not seeds:
        raise UsageError("--seeds must name at least one seed", "invalid_list")

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(lambda s: _paired_runs(arch, system, grid, config, s), seeds))
    else:
        results = [_paired_runs(arch, system, grid, config, s) for s in seeds]

    frames = []
    for seed, traces, anti in results:
        for loss, trace in traces.items():
            frame = trace.to_frame()
            frame.insert(0, "run", loss)
            frame.insert(0, "seed", seed)
            frames.append(frame)
        pen, ant = traces["penalized"].to_frame(), traces["antisymmetrized"].to_frame()
        chart = line_chart(
            [Series("penalized", pen["iter"], pen["energy"]), Series("antisymmetrized", ant["iter"], ant["energy"])],
            title=f"seed {seed}", y_label="energy")
        write_text(out_dir / f"compare_seed{seed}.svg", chart)

        pen_energy = traces["penalized"].final.energy
        ant_energy = traces["antisymmetrized"].final.energy
        print(f"seed={seed} penalized_energy={pen_energy:.10f} antisymmetrized_energy={ant_energy:.10f} "
              f"antisymmetrized_lower={str(ant_energy < pen_energy).lower()} "
              f"sign_flip_error={sign_flip_error(anti, seed=seed):.3e}")

    header = "".join(f"# {line}\n" for line in _comments(arch, config, args))
    body = pd.concat(frames, ignore_index=True).to_csv(index=False, float_format="%.17g", lineterminator="\n")
    write_text(out_dir / "compare.csv", header + body)
    return 0


def cmd_report(args) -> int:
    rows, series = [], []
    for path in args.traces:
        frame = read_trace(path)
        if "run" in frame.columns:
            groups = [(f"{Path(path).stem}:{key[0]}:{key[1]}", part)
                      for key, part in frame.groupby(["seed", "run"], sort=False)]
        else:
            groups = [(Path(path).stem, frame)]
        for label, part in groups:
            rows.append({
                "trace": label,
                "rows": len(part),
                "final_iter": int(part["iter"].iloc[-1]),
                "final_energy": float(part["energy"].iloc[-1]),
                "min_energy": float(part["energy"].min()),
            })
            series.append(Series(label, part["iter"], part[args.column]))
    sys.stdout.write(pd.DataFrame(rows).to_csv(index=False, float_format="%.10f", lineterminator="\n"))
    if args.chart:
        write_text(args.chart, line_chart(series, title="report", y_label=args.column))
    return 0


# -- parser ----------------------------------------------------------------

def _add_grid_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--box", nargs=2, type=float, default=list(settings.box), metavar=("A", "B"))
    parser.add_argument("--subintervals", type=int, default=settings.subintervals)
    parser.add_argument("--qpoints", type=int, default=settings.qpoints)


def _add_tensor_source(parser: argparse.ArgumentParser, allow_file: bool = True):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--det", type=int, help="determinant tensor of order N")
    source.add_argument("--basis", help="basis tensor E_k for a multi-index k1,..,kN (needs --k)")
    if allow_file:
        source.add_argument("--file", help="tensor text file")
    parser.add_argument("--k", type=int, help="mode dimension K for --basis")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Antisymmetric tensors, CP rank and TNN training for 1D systems")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="rank bounds for determinant and antisymmetric tensors")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--csv")
    p.set_defaults(handler=cmd_bounds)

    p = sub.add_parser("rank-est", help="heuristic CP rank estimate by ALS")
    _add_tensor_source(p)
    p.add_argument("--pmax", type=int, required=True)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--csv")
    p.set_defaults(handler=cmd_rank_est)

    p = sub.add_parser("basis", help="write a determinant or basis tensor")
    _add_tensor_source(p, allow_file=False)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_basis)

    p = sub.add_parser("roundtrip", help="TPF <-> coefficient tensor consistency checks")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--pmax", type=int, default=3)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--basis-kind", default="legendre", choices=["monomial", "legendre", "indicator"])
    p.add_argument("--file", help="TPF coefficient file instead of random TPFs")
    p.set_defaults(handler=cmd_roundtrip)

    for name, handler in (("train", cmd_train), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value run file")
        p.add_argument("--system", required=True, help="system file")
        p.add_argument("--output", help="output directory (default TPF_OUTPUT_DIR or config.yaml)")
        p.add_argument("--iterations", type=int)
        p.add_argument("--schedule", choices=["exp_decay", "inverse_time"])
        p.add_argument("--alpha", type=float)
        _add_grid_flags(p)
        p.set_defaults(handler=handler)
        if name == "train":
            p.add_argument("--seed", type=int)
            p.add_argument("--loss", choices=["penalized", "antisymmetrized"])
            p.add_argument("--label")
        else:
            p.add_argument("--seeds", default="0")
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", help="summarize trace CSVs")
    p.add_argument("traces", nargs="+")
    p.add_argument("--column", default="energy", choices=["loss", "energy", "penalty", "lr"])
    p.add_argument("--chart", help="write an SVG chart of the loaded series")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.log_level:
            update_log_level(args.log_level)
        return args.handler(args)
    except TpfError as e:
        logger.debug(f"{e.code}: {e.details}")
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
