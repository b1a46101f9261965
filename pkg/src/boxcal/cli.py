"""Command-line front end: generate, evaluate, fit, apply, sweep, train, compare.

Thin layer over `boxcal.pipeline`: parse flags, read/write files, print
tables. Exit codes are a stable contract: 0 success, 1 usage error, 2 data
error, 3 degenerate fit (or diverged training).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline, synth, toytrain
from .errors import (
    BoxcalError,
    DataError,
    DegenerateFitError,
    TrainingDivergedError,
    UsageError,
)
from .evaluate import DEFAULT_LEVELS, uniform_bin_edges
from .fileio import read_bundle, read_dump, write_bundle, write_dump
from .records import N_ELEMENTS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DEGENERATE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_text(path, text: str):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _parse_floats(raw: str, what: str) -> list[float]:
    try:
        values = [float(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers, got {raw!r}") from None
    if not values:
        raise UsageError(f"{what} is empty")
    return values


def _parse_bias(raw: str) -> tuple[float, ...]:
    values = _parse_floats(raw, "--bias")
    if len(values) == 1:
        return tuple(values * N_ELEMENTS)
    if len(values) == N_ELEMENTS:
        return tuple(values)
    raise UsageError(f"--bias needs 1 or {N_ELEMENTS} values, got {len(values)}")


def _read_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _merged(args, config: dict[str, str], key: str, cast, default):
    """Flag value if given, else config-file value, else the default."""
    flag = getattr(args, key)
    if flag is not None:
        return flag
    if key in config:
        try:
            return cast(config[key])
        except (TypeError, ValueError):
            raise UsageError(f"config key {key}: cannot parse {config[key]!r}") from None
    return default


def _read_dump_arg(path):
    try:
        return read_dump(path)
    except FileNotFoundError:
        raise UsageError(f"no such dump file: {path}") from None


# -- subcommands ---------------------------------------------------------------

def _cmd_gen(args) -> int:
    config = _read_config_file(args.config) if args.config else {}
    var_range = _merged(args, config, "var_range", str, "0.25,1.0")
    lo_hi = _parse_floats(var_range, "--var-range")
    if len(lo_hi) != 2:
        raise UsageError("--var-range needs exactly two values: low,high")
    bias_raw = _merged(args, config, "bias", str, "0.0")
    n = _merged(args, config, "n", int, None)
    if n is None:
        raise UsageError("--n is required (flag or config file)")
    cfg = synth.SynthConfig(
        n=n,
        seed=_merged(args, config, "seed", int, 0),
        inflation=_merged(args, config, "inflate", float, 1.0),
        bias=_parse_bias(bias_raw),
        variance_ranges=tuple((lo_hi[0], lo_hi[1]) for _ in range(N_ELEMENTS)),
        score_law=_merged(args, config, "score_law", str, "calibrated"),
        logit_shift=_merged(args, config, "logit_shift", float, 0.0),
        compress_gamma=_merged(args, config, "gamma", float, 0.5),
        compress_center=_merged(args, config, "center", float, 0.7),
    )
    dataset = synth.generate(cfg)
    write_dump(args.output, dataset)
    print(f"wrote {len(dataset)} records to {args.output}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    dataset, annotation = _read_dump_arg(args.dump)
    levels = tuple(_parse_floats(args.levels, "--levels")) if args.levels else DEFAULT_LEVELS
    report = pipeline.evaluate_dataset(
        dataset, annotation, bin_edges=uniform_bin_edges(args.bins), levels=levels
    )
    summary = pipeline.summary_text(report)
    if args.plot_data:
        _write_text(args.plot_data, pipeline.plot_data_text(report))
    if args.summary:
        _write_text(args.summary, summary)
    sys.stdout.write(summary)
    return EXIT_OK


def _cmd_fit(args) -> int:
    dataset, _ = _read_dump_arg(args.dump)
    targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
    bundle = pipeline.fit_bundle(
        dataset,
        args.method,
        targets=targets,
        bin_edges=uniform_bin_edges(args.bins),
        dataset_id=args.dataset_id or "",
        fitted_at=args.timestamp,
    )
    write_bundle(args.output, bundle)
    print(f"wrote {args.method} recalibration model to {args.output}")
    return EXIT_OK


def _cmd_apply(args) -> int:
    dataset, existing = _read_dump_arg(args.dump)
    bundle = read_bundle(args.model)
    out, annotation = pipeline.apply_bundle(dataset, bundle, existing)
    write_dump(args.output, out, annotation)
    print(f"wrote recalibrated dump to {args.output}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    dataset, _ = _read_dump_arg(args.dump)
    fractions = _parse_floats(args.fractions, "--fractions")
    rows = pipeline.sweep(dataset, fractions, args.method, args.seed)
    text = pipeline.sweep_text(rows)
    if args.output:
        _write_text(args.output, text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_train_toy(args) -> int:
    config = _read_config_file(args.config) if args.config else {}
    cfg = toytrain.TrainConfig(
        lam=_merged(args, config, "lam", float, 0.1),
        epochs=_merged(args, config, "epochs", int, 400),
        pretrain_epochs=_merged(args, config, "pretrain_epochs", int, 5),
        learning_rate=_merged(args, config, "learning_rate", float, 0.01),
        pretrain_learning_rate=_merged(args, config, "pretrain_learning_rate", float, 0.05),
        batch_size=_merged(args, config, "batch_size", int, 32),
        seed=_merged(args, config, "seed", int, 0),
        hidden=_merged(args, config, "hidden", int, 32),
        train_n=_merged(args, config, "train_n", int, 200),
        holdout_n=_merged(args, config, "holdout_n", int, 2000),
        norm=_merged(args, config, "norm", str, "l1"),
        init_log_variance=_merged(args, config, "init_log_variance", float, 2.0),
    )
    _, trace = toytrain.train_toy(cfg)
    if args.output:
        _write_text(args.output, pipeline.trace_text(trace))
    sys.stdout.write(pipeline.train_summary_text(pipeline.train_summary(trace)))
    return EXIT_OK


def _cmd_cross_eval(args) -> int:
    fit_ds, _ = _read_dump_arg(args.dump_fit)
    eval_ds, _ = _read_dump_arg(args.dump_eval)
    result = pipeline.cross_eval(fit_ds, eval_ds, args.method)
    text = pipeline.cross_eval_text(result)
    if args.output:
        _write_text(args.output, text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="boxcal",
                     description="Calibration evaluation and repair for "
                                 "probabilistic object detections")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic detection dump")
    gen.add_argument("--n", type=int, default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--inflate", type=float, default=None,
                     help="reported variance = inflate * true variance")
    gen.add_argument("--bias", type=str, default=None,
                     help="reported-mean shift: one value or six comma-separated")
    gen.add_argument("--var-range", dest="var_range", type=str, default=None,
                     help="true variance range low,high")
    gen.add_argument("--score-law", dest="score_law", type=str, default=None,
                     choices=list(synth.SCORE_LAWS))
    gen.add_argument("--logit-shift", dest="logit_shift", type=float, default=None)
    gen.add_argument("--gamma", type=float, default=None,
                     help="logit compression factor for the compressed law")
    gen.add_argument("--center", type=float, default=None,
                     help="crossing point for the compressed law")
    gen.add_argument("--config", type=str, default=None,
                     help="key=value config file; flags override it")
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=_cmd_gen)

    ev = sub.add_parser("eval", help="calibration curves and ECE summary for a dump")
    ev.add_argument("dump")
    ev.add_argument("--bins", type=int, default=10)
    ev.add_argument("--levels", type=str, default=None)
    ev.add_argument("--plot-data", dest="plot_data", default=None,
                    help="write the per-level curve table here")
    ev.add_argument("--summary", default=None, help="also write the summary here")
    ev.set_defaults(func=_cmd_eval)

    fit = sub.add_parser("fit", help="fit a recalibration model on a dump")
    fit.add_argument("dump")
    fit.add_argument("--method", required=True, choices=list(pipeline.FIT_METHODS))
    fit.add_argument("--targets", default="classification,regression")
    fit.add_argument("--bins", type=int, default=10)
    fit.add_argument("--dataset-id", dest="dataset_id", default=None)
    fit.add_argument("--timestamp", default=None,
                     help="provenance timestamp; omitted by default so reruns are byte-identical")
    fit.add_argument("-o", "--output", required=True)
    fit.set_defaults(func=_cmd_fit)

    ap = sub.add_parser("apply", help="apply a recalibration model to a dump")
    ap.add_argument("dump")
    ap.add_argument("model")
    ap.add_argument("-o", "--output", required=True)
    ap.set_defaults(func=_cmd_apply)

    sw = sub.add_parser("sweep", help="recalibration-set-size robustness sweep")
    sw.add_argument("dump")
    sw.add_argument("--fractions", required=True)
    sw.add_argument("--method", required=True, choices=list(pipeline.FIT_METHODS))
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("-o", "--output", default=None)
    sw.set_defaults(func=_cmd_sweep)

    tt = sub.add_parser("train-toy", help="train the toy heteroscedastic regressor")
    tt.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="calibration loss weight")
    tt.add_argument("--epochs", type=int, default=None)
    tt.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int, default=None)
    tt.add_argument("--lr", dest="learning_rate", type=float, default=None)
    tt.add_argument("--pretrain-lr", dest="pretrain_learning_rate", type=float, default=None)
    tt.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    tt.add_argument("--seed", type=int, default=None)
    tt.add_argument("--hidden", type=int, default=None)
    tt.add_argument("--train-n", dest="train_n", type=int, default=None)
    tt.add_argument("--holdout-n", dest="holdout_n", type=int, default=None)
    tt.add_argument("--norm", choices=["l1", "l2"], default=None)
    tt.add_argument("--init-log-variance", dest="init_log_variance", type=float, default=None)
    tt.add_argument("--config", type=str, default=None,
                    help="key=value config file; flags override it")
    tt.add_argument("-o", "--output", default=None, help="write the trace table here")
    tt.set_defaults(func=_cmd_train_toy)

    ce = sub.add_parser("cross-eval",
                        help="fit on dump A, compare baseline vs recalibrated ECE on dump B")
    ce.add_argument("dump_fit")
    ce.add_argument("dump_eval")
    ce.add_argument("--method", required=True, choices=list(pipeline.FIT_METHODS))
    ce.add_argument("-o", "--output", default=None)
    ce.set_defaults(func=_cmd_cross_eval)

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"boxcal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateFitError, TrainingDivergedError) as exc:
        print(f"boxcal: degenerate fit: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DataError as exc:
        print(f"boxcal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BoxcalError as exc:
        print(f"boxcal: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"boxcal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
