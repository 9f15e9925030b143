"""Command-line interface.

Exit codes: 0 on success, 2 for invalid configuration or input, 3 for a
numerical failure (divergence, rank deficiency, instability).
"""
import argparse
import json
import logging
import sys

from .errors import ConfigInvalid, InputError, MnlqrError, NumericalError
from .experiments import (METRICS, SWEEP_HEADER, cell_rng, example_config, generate,
                          load_config, read_records, run_sweep, summarize,
                          write_records)
from .identify import AmbiguitySet, Dataset, second_moment_ambiguity, structured_ambiguity
from .synthesis import dr_synthesize, structured_ce_synthesize

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
EXAMPLES = ("toy", "toy-model-free", "toy-rollout", "toy-single", "structured")

log = logging.getLogger("mnlqr")


def _experiment(args):
    exp = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigInvalid("seed", "must be a nonnegative integer")
        exp.seed = args.seed
    return exp


def _threads(args):
    if args.deterministic:
        return 1
    if args.threads < 1:
        raise ConfigInvalid("--threads", "must be at least 1")
    return args.threads


def _output(args, exp=None):
    out = args.output
    if out is None and exp is not None:
        out = exp.output_path
    return out


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2) + "\n")


def cmd_sweep(args):
    exp = _experiment(args)
    records = run_sweep(exp, args.command, _threads(args))
    out = _output(args, exp)
    if out is None or out == "-":
        write_records(records, sys.stdout)
    else:
        write_records(records, out)
        log.info("wrote %d records to %s", len(records), out)
    return EXIT_OK


def cmd_simulate(args):
    exp = _experiment(args)
    if args.N < 1:
        raise ConfigInvalid("-N", "must be a positive integer")
    data = generate(exp, args.N, cell_rng(exp.seed, 0, args.repeat))
    data = Dataset(data.z, data.x_next, data.r_w, data.r_z, data.generation, data.T, exp.seed)
    data.to_csv(args.output)
    return EXIT_OK


def _load_dataset(path):
    try:
        return Dataset.from_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigInvalid("--data", str(exc)) from None


def _ambiguity(exp, data, delta):
    if exp.model.structured:
        return structured_ambiguity(exp.model, data, delta)
    return second_moment_ambiguity(exp.model, data, delta)


def cmd_estimate(args):
    exp = _experiment(args)
    data = _load_dataset(args.data)
    amb = _ambiguity(exp, data, exp.delta if args.delta is None else args.delta)
    _write_json(args.output, amb.to_json())
    return EXIT_OK


def cmd_design(args):
    exp = _experiment(args)
    try:
        with open(args.ambiguity) as f:
            amb = AmbiguitySet.from_json(json.load(f))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid("--ambiguity", str(exc)) from None
    if exp.model.structured:
        res = structured_ce_synthesize(exp.model, amb, exp.lqr)
    else:
        res = dr_synthesize(exp.model, amb, exp.lqr)
    _write_json(args.output, res.to_json())
    return EXIT_OK


def cmd_summarize(args):
    try:
        records = read_records(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigInvalid("--input", str(exc)) from None
    lines = [f"# quantile band q={args.q}", "experiment_id,N,metric_name,lo,median,hi,count"]
    for (eid, n, m), (lo, med, hi, cnt) in summarize(records, args.q).items():
        lines.append(f"{eid},{n},{m},{lo!r},{med!r},{hi!r},{cnt}")
    _write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_example(args):
    _write_json(args.output, example_config(args.name))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="mnlqr",
        description="Moment identification and distributionally robust LQR "
                    "for systems with multiplicative noise.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output_required=False):
        sp.add_argument("-c", "--config", required=True, help="experiment JSON")
        sp.add_argument("-o", "--output", required=output_required,
                        help="output path ('-' for stdout)")
        sp.add_argument("--seed", type=int, help="override the config seed")

    for name, text in (("identify", "sweep: estimation errors and radii"),
                       ("synthesize", "sweep: suboptimality of DR controllers")):
        sp = sub.add_parser(name, help=text,
                            description=f"{text}. Metrics: {', '.join(METRICS)}. {SWEEP_HEADER[2:]}")
        common(sp)
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        sp.add_argument("--deterministic", action="store_true",
                        help="force a single worker")
        sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="write one dataset as CSV (+ .json sidecar)")
    common(sp, output_required=True)
    sp.add_argument("-N", type=int, required=True, help="number of transitions")
    sp.add_argument("--repeat", type=int, default=0, help="stream index")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="ambiguity set JSON from a dataset")
    common(sp)
    sp.add_argument("-d", "--data", required=True, help="dataset CSV")
    sp.add_argument("--delta", type=float, help="override the config delta")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("design", help="controller JSON from an ambiguity set")
    common(sp)
    sp.add_argument("-a", "--ambiguity", required=True, help="ambiguity set JSON")
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("summarize", help="quantile bands of a sweep CSV")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-o", "--output")
    sp.add_argument("-q", type=float, default=0.1, help="band mass around the median")
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("example-config", help="print a built-in configuration")
    sp.add_argument("name", choices=EXAMPLES)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_example)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="mnlqr: %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, InputError) as exc:
        print(f"mnlqr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"mnlqr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MnlqrError as exc:
        print(f"mnlqr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # e.g. quantile mass outside (0, 1)
        print(f"mnlqr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
