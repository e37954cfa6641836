"""Command-line surface.

Subcommands: gen-data, make-grans, train, forecast, evaluate,
select-ratio, analyze-fft. Every run is reproducible from (config, seed)
alone. Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, granularity_ticks, load_run_config, train_config_from_run
from .data import (
    DataError,
    SYNTHETIC_KINDS,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .forecasting import forecast, rolling_evaluate, window_slices
from .granularity import GranularitySpec, build_multigran
from .metrics import MetricsReport, crps_sum, fft_spectrum, nmae_sum, nrmse_sum, select_share_ratio
from .training import NumericalError, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_repr(v: float) -> str:
    return repr(float(v))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")


def _maybe_config(args) -> dict:
    return load_run_config(args.config) if getattr(args, "config", None) else {}


def _resolve_data_path(args, run: dict) -> str:
    path = getattr(args, "data", None) or run.get("dataset")
    if not path:
        raise UsageError("no dataset given: pass --data or set 'dataset' in the config")
    return path


def cmd_gen_data(args) -> int:
    out = _out_dir(args)
    values = generate_synthetic(
        args.kind, args.length, args.dim, seed=args.seed, noise=args.noise
    )
    path = out / args.out_name
    save_dataset(path, values)
    print(f"wrote {path} ({args.length} ticks, {args.dim} dims, kind={args.kind})")
    return 0


def cmd_make_grans(args) -> int:
    out = _out_dir(args)
    run = _maybe_config(args)
    values, stamps = load_dataset(_resolve_data_path(args, run))
    windows = granularity_ticks(
        args.windows if args.windows else run.get("granularity_windows", [1]),
        run.get("tick"),
    )
    specs = [GranularitySpec(window_size=w) for w in windows]
    mg = build_multigran(values, specs)
    files = []
    for g, spec in enumerate(mg.specs):
        path = out / f"gran_s{spec.window_size}.csv"
        save_dataset(path, mg.levels[g], stamps)
        files.append(str(path))
    _write_json(
        out / "grans.json",
        {"windows": list(windows), "files": files, "length": mg.length, "dim": mg.dim},
    )
    print(f"wrote {len(files)} granularity levels to {out}")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    run = load_run_config(args.config)
    cfg = train_config_from_run(run, seed=args.seed)
    values, _ = load_dataset(_resolve_data_path(args, run))
    result = train(values, cfg)
    ckpt = out / "checkpoint.mgtsd"
    save_checkpoint(ckpt, result.model)
    trace_path = out / "loss_trace.csv"
    header = result.trace_header()
    with open(trace_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in result.loss_trace:
            cells = [str(row["epoch"])] + [_float_repr(row[h]) for h in header[1:]]
            fh.write(",".join(cells) + "\n")
    print(f"trained {cfg.epochs} epochs; wrote {ckpt} and {trace_path}")
    print(f"final mean loss: {result.loss_trace[-1]['mean_loss']:.6f}")
    return 0


def cmd_forecast(args) -> int:
    out = _out_dir(args)
    run = _maybe_config(args)
    model = load_checkpoint(args.checkpoint)
    values, _ = load_dataset(_resolve_data_path(args, run))
    fc = forecast(
        model,
        values,
        horizon=args.horizon or model.cfg.prediction_length,
        num_samples=args.samples,
        seed=args.seed,
        context_start_tick=max(0, values.shape[0] - model.cfg.context_length),
    )
    path = out / "samples.csv"
    S, G, H, D = fc.values.shape
    with open(path, "w") as fh:
        fh.write("sample,granularity,t,dim,value\n")
        for s in range(S):
            for g in range(G):
                for t in range(H):
                    for d in range(D):
                        fh.write(
                            f"{s},{g + 1},{t},{d},{_float_repr(fc.values[s, g, t, d])}\n"
                        )
    print(f"wrote {path} ({S} samples x {G} levels x {H} steps x {D} dims)")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    run = _maybe_config(args)
    model = load_checkpoint(args.checkpoint)
    values, _ = load_dataset(_resolve_data_path(args, run))
    if args.oracle:
        report = _oracle_report(model, values, args.num_windows, args.samples)
    else:
        report = rolling_evaluate(
            model,
            values,
            num_windows=args.num_windows,
            num_samples=args.samples,
            seed=args.seed,
            workers=args.workers,
        )
    path = out / "metrics.json"
    _write_json(path, report.to_dict())
    print(
        f"crps_sum={report.crps_sum:.6f} nmae_sum={report.nmae_sum:.6f} "
        f"nrmse_sum={report.nrmse_sum:.6f} ({len(report.windows)} windows)"
    )
    return 0


def _oracle_report(model, values, num_windows: int, num_samples: int) -> MetricsReport:
    """Self-check evaluation: forecast samples replaced by the ground truth."""
    cfg = model.cfg
    rows = []
    for w, (ctx_start, pred_start) in enumerate(
        window_slices(values.shape[0], cfg.context_length, cfg.prediction_length, num_windows)
    ):
        truth = values[pred_start : pred_start + cfg.prediction_length]
        samples = np.repeat(truth[None, :, :], num_samples, axis=0)
        rows.append(
            {
                "window": w,
                "crps_sum": crps_sum(samples, truth),
                "nmae_sum": nmae_sum(truth, truth),
                "nrmse_sum": nrmse_sum(truth, truth),
            }
        )
    return MetricsReport.from_windows(rows, num_samples=num_samples)


def cmd_select_ratio(args) -> int:
    out = _out_dir(args)
    run = _maybe_config(args)
    model = load_checkpoint(args.checkpoint)
    values, _ = load_dataset(_resolve_data_path(args, run))
    grid = range(1, model.cfg.diffusion_steps + 1, args.grid_stride)
    curves = select_share_ratio(
        model,
        values,
        coarse_windows=args.windows,
        num_windows=args.num_windows,
        num_samples=args.samples,
        step_grid=grid,
        seed=args.seed,
    )
    for curve in curves:
        path = out / f"select_ratio_s{curve.window_size}.csv"
        with open(path, "w") as fh:
            fh.write("step,ratio,score\n")
            for step, ratio, score in curve.to_rows():
                fh.write(f"{step},{_float_repr(ratio)},{_float_repr(score)}\n")
    _write_json(out / "select_ratio.json", [c.to_dict() for c in curves])
    for curve in curves:
        print(
            f"window {curve.window_size}: argmin step {curve.argmin_step} "
            f"(ratio {curve.best_ratio:.3f})"
        )
    return 0


def cmd_analyze_fft(args) -> int:
    out = _out_dir(args)
    run = _maybe_config(args)
    values, _ = load_dataset(_resolve_data_path(args, run))
    if not 0 <= args.dim < values.shape[1]:
        raise DataError(f"dimension {args.dim} outside [0, {values.shape[1]})")
    spectrum = fft_spectrum(values[:, args.dim])
    T = values.shape[0]
    path = out / "spectrum.csv"
    with open(path, "w") as fh:
        fh.write("bin,frequency,amplitude\n")
        for k, amp in enumerate(spectrum):
            fh.write(f"{k},{_float_repr(k / T)},{_float_repr(amp)}\n")
    print(f"wrote {path} ({spectrum.size} bins)")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="mgtsd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out-dir", default=".")
        if config:
            sp.add_argument("--config", default=None)

    sp = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    sp.add_argument("--kind", choices=SYNTHETIC_KINDS, required=True)
    sp.add_argument("--length", type=int, required=True)
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--noise", type=float, default=None)
    sp.add_argument("--out-name", default="data.csv")
    common(sp)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("make-grans", help="write aligned coarse-grained levels")
    sp.add_argument("--data", default=None)
    sp.add_argument("--windows", type=_int_list, default=None)
    common(sp)
    sp.set_defaults(func=cmd_make_grans)

    sp = sub.add_parser("train", help="train a model from a run config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--data", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("forecast", help="sample future paths from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", default=None)
    sp.add_argument("--horizon", type=int, default=None)
    sp.add_argument("--samples", type=int, default=100)
    common(sp)
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("evaluate", help="rolling-window evaluation metrics")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", default=None)
    sp.add_argument("--num-windows", type=int, default=1)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument(
        "--oracle",
        action="store_true",
        help="self-check: score the ground truth against itself",
    )
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("select-ratio", help="share-ratio selection curves")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", default=None)
    sp.add_argument("--windows", type=_int_list, required=True)
    sp.add_argument("--num-windows", type=int, default=1)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--grid-stride", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_select_ratio)

    sp = sub.add_parser("analyze-fft", help="one-sided amplitude spectrum CSV")
    sp.add_argument("--data", default=None)
    sp.add_argument("--dim", type=int, default=0)
    common(sp)
    sp.set_defaults(func=cmd_analyze_fft)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (ConfigError, DataError, CheckpointError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
