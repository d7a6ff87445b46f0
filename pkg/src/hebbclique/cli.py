"""Command-line entry point: ``hebbclique <subcommand> ...``.

Exit codes: 0 success, 2 bad spec or arguments, 3 runtime or IO failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .clique import CliqueNetwork, retrieve_batch
from .dynamics import TiePolicy, recall, weight_trajectory
from .experiments import (
    error_curve,
    erase_positions,
    learn_dataset,
    random_messages,
    run_table1,
    stream,
    summarize_curve,
    summarize_table1,
)
from .noise import TruncationError, reduce_to_channel, total_stimulation_pmf

log = logging.getLogger("hebbclique")

EXIT_SPEC = 2
EXIT_RUNTIME = 3

TABLE1_COLUMNS = ["n_it", "M", "connections", "added", "erased"]
TABLE1_TRIAL_COLUMNS = ["n_it", "M", "trial", "connections", "added", "erased"]
CURVE_COLUMNS = ["M", "density", "error_rate"]
CURVE_TRIAL_COLUMNS = ["M", "trial", "density", "error_rate"]
TRACE_COLUMNS = ["iteration", "coactive", "pre", "post"]


def _seed_type(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise io.SpecError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _manifest(args, spec_path=None) -> io.RunManifest:
    return io.RunManifest(subcommand=args.command, seed=args.seed,
                          spec_hash=io.spec_hash(spec_path) if spec_path else None)


# -- subcommands -----------------------------------------------------------------

def cmd_noise(args):
    _require(args, "spec")
    p = io.parse_noise(args.spec)
    channel = reduce_to_channel(p.synaptic, p.interference, p.firing)
    print(json.dumps({"p_ins": channel.p_ins, "p_del": channel.p_del}))
    if args.pmf:
        tables = {}
        for present, name in ((True, "pmf_signal.csv"), (False, "pmf_no_signal.csv")):
            pmf = total_stimulation_pmf(p.synaptic, p.interference, p.firing, present)
            tables[name] = (["value", "probability"],
                            [{"value": int(v), "probability": float(q)}
                             for v, q in zip(pmf.support, pmf.probabilities)])
        io.emit_results(tables, args.out or ".", _manifest(args, args.spec))


def cmd_generate(args):
    _require(args, "c", "ell", "count", "out")
    if args.erase and not 0 < args.erase < args.c:
        raise io.SpecError("--erase must lie in [1, c)")
    seed = args.seed or 0
    messages = random_messages(args.count, args.c, args.ell, stream(seed, "messages"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args)
    manifest.seed = seed
    io.write_messages(out / "messages.csv", messages)
    manifest.outputs.append("messages.csv")
    if args.erase:
        io.write_messages(out / "probes.csv",
                          erase_positions(messages, args.erase, stream(seed, "erasures")))
        manifest.outputs.append("probes.csv")
    io.emit_results({}, out, manifest)


def cmd_learn(args):
    _require(args, "spec", "data", "out")
    spec = io.parse_experiment(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    messages = io.read_messages(args.data, spec.config.c)
    if np.any((messages < 0) | (messages >= spec.config.ell)):
        raise io.SpecError("message entries must lie in [0, ell)", args.data)
    W = learn_dataset(messages, spec, stream(spec.seed, "learn"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_json(out / "network.json", io.weights_to_dict(W, spec.config))
    manifest = _manifest(args, args.spec)
    manifest.seed = spec.seed
    manifest.outputs.append("network.json")
    io.emit_results({}, out, manifest)


def _completions(found):
    return [{f"cluster_{k}": (io.ERASED_TOKEN if v < 0 else int(v)) for k, v in enumerate(row)}
            for row in found]


def _write_completions(out_dir, found, args, spec_path=None):
    c = found.shape[1] if found.ndim == 2 else 0
    header = [f"cluster_{k}" for k in range(c)]
    manifest = _manifest(args, spec_path)
    io.emit_results({"completions.csv": (header, _completions(found))}, out_dir, manifest)


def cmd_recall(args):
    _require(args, "network", "probes", "out")
    W, config = io.weights_from_dict(io.load_json(args.network))
    if args.spec is not None:
        config = io.parse_network(args.spec)
    if config is None:
        raise io.SpecError("network file holds no config; pass --spec", args.network)
    probes = io.read_messages(args.probes, config.c)
    rng = stream(args.seed or 0, "ties")
    found = np.array([recall(W, p, config, rng) for p in probes], dtype=np.int64)
    _write_completions(args.out, found.reshape(len(probes), config.c), args, args.spec)


def cmd_clique_store(args):
    _require(args, "data", "out")
    if args.spec is not None:
        config = io.parse_network(args.spec)
        c, ell = config.c, config.ell
    else:
        _require(args, "c", "ell")
        c, ell = args.c, args.ell
    messages = io.read_messages(args.data, c)
    if np.any((messages < 0) | (messages >= ell)):
        raise io.SpecError("message entries must lie in [0, ell)", args.data)
    net = CliqueNetwork(c, ell).store_many(messages)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_json(out / "clique.json", io.clique_to_dict(net))
    manifest = _manifest(args, args.spec)
    manifest.outputs.append("clique.json")
    io.emit_results({}, out, manifest)


def cmd_clique_recall(args):
    _require(args, "network", "probes", "out")
    net = io.clique_from_dict(io.load_json(args.network))
    probes = io.read_messages(args.probes, net.c)
    found = retrieve_batch(net, probes, args.gamma, args.iterations,
                           tie_policy=TiePolicy(args.tie_policy),
                           rng=stream(args.seed or 0, "ties"))
    _write_completions(args.out, found, args)


def cmd_trace(args):
    if args.schedule is not None:
        if not args.schedule or set(args.schedule) - {"0", "1"}:
            raise io.SpecError("--schedule must be a non-empty string of 0/1")
        schedule = [ch == "1" for ch in args.schedule]
    else:
        rng = stream(args.seed or 0, "trace")
        schedule = list(rng.random(args.steps) < args.coactivation)
    rows = [{"iteration": t, "coactive": int(co), "pre": pre, "post": post}
            for t, (co, (pre, post)) in enumerate(
                zip(schedule, weight_trajectory(schedule, args.epsilon)), start=1)]
    if args.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([io._fmt(row[h]) for h in TRACE_COLUMNS])
        return
    io.emit_results({"trace.csv": (TRACE_COLUMNS, rows)}, args.out, _manifest(args))


def cmd_table1(args):
    _require(args, "spec", "out")
    specs = io.parse_table1(args.spec)
    if args.seed is not None:
        specs = [dataclasses.replace(s, seed=args.seed) for s in specs]
    rows = run_table1(specs, threads=args.threads)
    manifest = _manifest(args, args.spec)
    manifest.seed = specs[0].seed if specs else None
    io.emit_results({
        "table1.csv": (TABLE1_COLUMNS, summarize_table1(rows)),
        "table1_trials.csv": (TABLE1_TRIAL_COLUMNS, map(dataclasses.asdict, rows)),
    }, args.out, manifest)


def cmd_curve(args):
    _require(args, "spec", "out")
    spec = io.parse_curve(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    rows = error_curve(spec, threads=args.threads)
    manifest = _manifest(args, args.spec)
    manifest.seed = spec.seed
    io.emit_results({
        "curve.csv": (CURVE_COLUMNS, summarize_curve(rows)),
        "curve_trials.csv": (CURVE_TRIAL_COLUMNS, map(dataclasses.asdict, rows)),
    }, args.out, manifest)


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed_type, default=None,
                        help="master seed (unsigned 64-bit); overrides the spec's seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--spec", default=None, help="JSON parameter file")
    common.add_argument("--threads", type=_positive, default=1,
                        help="worker threads; affects speed only, never results")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="hebbclique", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise", parents=[common],
                       help="reduce synaptic/interference noise to (p_ins, p_del)")
    p.add_argument("--pmf", action="store_true",
                   help="also write the two stimulation pmfs as CSV into --out")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("generate", parents=[common],
                       help="write uniform random messages (and erased probes)")
    p.add_argument("--c", type=_positive, help="clusters")
    p.add_argument("--ell", type=_positive, help="units per cluster")
    p.add_argument("--count", type=_positive, help="number of messages")
    p.add_argument("--erase", type=int, default=0, help="positions to erase in probes.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("learn", parents=[common],
                       help="learn a message CSV under noise into a Hebbian network")
    p.add_argument("--data", help="message CSV")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("recall", parents=[common],
                       help="complete probes with a learned Hebbian network")
    p.add_argument("--network", help="network.json written by 'learn'")
    p.add_argument("--probes", help="probe CSV (ERASED marks unknown clusters)")
    p.set_defaults(func=cmd_recall)

    p = sub.add_parser("clique", help="reference clique memory")
    csub = p.add_subparsers(dest="clique_command", required=True)
    q = csub.add_parser("store", parents=[common], help="store a message CSV")
    q.add_argument("--data", help="message CSV")
    q.add_argument("--c", type=_positive, help="clusters (or give --spec)")
    q.add_argument("--ell", type=_positive, help="units per cluster (or give --spec)")
    q.set_defaults(func=cmd_clique_store)
    q = csub.add_parser("recall", parents=[common], help="complete probes")
    q.add_argument("--network", help="clique.json written by 'clique store'")
    q.add_argument("--probes", help="probe CSV")
    q.add_argument("--gamma", type=float, default=1.0, help="bonus for already active units")
    q.add_argument("--iterations", type=_positive, default=6, help="decoding iterations")
    q.add_argument("--tie-policy", default="lowest_index",
                   choices=[t.value for t in TiePolicy])
    q.set_defaults(func=cmd_clique_recall)

    p = sub.add_parser("trace", parents=[common],
                       help="weight of one connection before/after the sigmoid per step")
    p.add_argument("--epsilon", type=float, default=0.18, help="Hebbian increment")
    p.add_argument("--steps", type=_positive, default=50, help="schedule length")
    p.add_argument("--coactivation", type=float, default=0.64,
                   help="per-step co-activation probability of the random schedule")
    p.add_argument("--schedule", default=None, help="explicit 0/1 schedule, e.g. 0111000111")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("table1", parents=[common],
                       help="learn under noise and compare against the clique memory")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("curve", parents=[common],
                       help="clique-memory retrieval error rate versus stored messages")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "clique":
        args.command = f"clique {args.clique_command}"
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (io.SpecError, TruncationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
