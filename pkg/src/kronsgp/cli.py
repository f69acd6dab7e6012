"""Command-line interface: ``kronsgp {synth,train,predict,evaluate,bench,compare}``.

Exit codes: 0 success, 1 numerical failure, 2 configuration, schema or I/O
error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .data import SyntheticFieldSpec, read_json, read_table, write_synthetic, write_table
from .exceptions import ConfigError, DimensionError, KronsgpError
from .experiments import BenchSpec, run_bench, run_compare, write_bench, write_compare
from .metrics import evaluate
from .pipeline import RunConfig, load_model, run, write_model

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


def _log(msg):
    print(msg, file=sys.stderr)


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _fractions(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def cmd_synth(args):
    spec = SyntheticFieldSpec.from_dict(read_json(args.config))
    if args.seed is not None:
        spec.seed = args.seed
    info = write_synthetic(spec, args.out)
    print(f"rows={info['rows']} test_rows={info['test_rows']}")
    return EXIT_OK


def cmd_train(args):
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    os.makedirs(args.out, exist_ok=True)
    spe = config.mh_config(config.seed).samples_per_epoch

    def progress(epoch, seconds, best):
        _log(f"epoch {epoch}: best objective {best:.10g} ({seconds:.3f} s)")

    result = run(config, callback=progress)
    write_model(os.path.join(args.out, "model.json"), result.document())
    result.trace.write_csv(os.path.join(args.out, "trace.csv"))
    result.trace.write_epoch_csv(os.path.join(args.out, "epochs.csv"), spe)
    print(f"objective={result.model.objective!r} "
          f"acceptance={result.trace.acceptance_rate:.3f}")
    return EXIT_OK


def cmd_predict(args):
    loaded = load_model(args.model)
    _, X = read_table(args.query, loaded.names)
    mean, var = loaded.model.predict(X)
    out = args.out if args.out.endswith(".csv") else os.path.join(args.out, "predictions.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    # "variance" is latent; "predictive_variance" adds the noise variance
    noisy = var + loaded.model.hyp.noise_var
    write_table(out, loaded.names + ["mean", "variance", "predictive_variance"],
                np.column_stack([X, mean, var, noisy]))
    print(f"rows={X.shape[0]}")
    return EXIT_OK


def cmd_evaluate(args):
    p_header, pred = read_table(args.predictions)
    t_header, truth = read_table(args.truth)
    for col in ("mean", "variance"):
        if col not in p_header:
            raise ConfigError(f"{args.predictions} lacks a {col!r} column")
    if pred.shape[0] != truth.shape[0]:
        raise DimensionError(f"{pred.shape[0]} predictions but {truth.shape[0]} truth rows")
    column = args.column or t_header[-1]
    if column not in t_header:
        raise ConfigError(f"{args.truth} lacks column {column!r}")
    for c in sorted(set(p_header) & set(t_header) - {column}):
        if not np.array_equal(pred[:, p_header.index(c)], truth[:, t_header.index(c)]):
            raise ConfigError(f"coordinate column {c!r} differs between the two files")
    var_col = "variance" if args.latent or "predictive_variance" not in p_header \
        else "predictive_variance"
    report = evaluate(truth[:, t_header.index(column)], pred[:, p_header.index("mean")],
                      pred[:, p_header.index(var_col)])
    text = report.to_json()
    if args.out:
        out = args.out if args.out.endswith(".json") else os.path.join(args.out, "metrics.json")
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_bench(args):
    spec = BenchSpec.load(args.config, args.fractions)
    if args.seed is not None:
        spec.seed = args.seed
    rows, summary, slopes = run_bench(spec, log=_log)
    write_bench(args.out, rows, summary, slopes)
    for kind, slope in slopes.items():
        print(f"{kind} slope={slope:.4f}")
    return EXIT_OK


def cmd_compare(args):
    configs = [RunConfig.load(p) for p in args.config]
    rows = run_compare(configs, args.seeds, log=_log)
    write_compare(args.out, rows)
    print(f"rows={len(rows)}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kronsgp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--config", required=True, help="synthetic spec JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=_u64, help="override the spec seed")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a model with Metropolis-Hastings")
    s.add_argument("--config", required=True, help="run config JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=_u64, help="override the config seed")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict at query points")
    s.add_argument("--model", required=True, help="model JSON written by train")
    s.add_argument("--query", required=True, help="CSV with a column per input dimension")
    s.add_argument("--out", required=True, help="output CSV path or directory")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="RMSE and MSLL of predictions")
    s.add_argument("--predictions", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--column", help="truth column (default: last)")
    s.add_argument("--latent", action="store_true",
                   help="score MSLL with the latent variance instead of the predictive one")
    s.add_argument("--out", help="metrics JSON path or directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("bench", help="timing versus training-set size")
    s.add_argument("--config", required=True, help="bench spec JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--fractions", type=_fractions, help="comma-separated, e.g. 0.1,0.5,1")
    s.add_argument("--seed", type=_u64)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("compare", help="seed-repeated accuracy comparison")
    s.add_argument("--config", required=True, nargs="+", help="two or more run configs")
    s.add_argument("--seeds", type=int, default=20, help="seeds 0..K-1 per config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except np.linalg.LinAlgError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except (KronsgpError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
