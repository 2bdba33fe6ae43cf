"""Command-line entry point: ``backbone <stage> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, bicm, bidcm, pipeline, projection, synth
from .ingest import write_records

logger = logging.getLogger("backbone")

GLOBAL_DEFAULTS = {"seed": 42, "alpha": 0.01, "threads": 1, "anonymize": False, "verbose": 0}


def _globals(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies are suppressed so they never clobber values given before the subcommand
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d, help="random seed (default 42)")
    g.add_argument("--alpha", type=float, default=d, help="FDR level (default 0.01)")
    g.add_argument("--threads", type=int, default=d, help="worker threads (computation is single-threaded)")
    g.add_argument("--anonymize", action="store_true", default=d,
                   help="replace unverified account names by hub_<rank> in reports")
    g.add_argument("-v", "--verbose", action="count", default=d, help="log progress (repeat for debug)")
    return p


def _runs(text: str):
    if text == "all":
        return text
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("runs must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backbone", parents=[_globals(False)],
                                     description="Statistically validated backbones of retweet networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = [_globals(True)]

    p = sub.add_parser("ingest", parents=common, help="filter a tweet corpus and build the graphs")
    p.add_argument("--input", required=True, help="tweet records, one JSON object per line")
    p.add_argument("--keywords", help="keyword file, one per line (default: bundled list)")
    p.add_argument("--mapping", help="JSON field-renaming config")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("bots", parents=common, help="label accounts with the bot classifier")
    p.add_argument("--accounts", required=True)
    p.add_argument("--model", help="decision tree JSON (default: bundled tree)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-bicm", parents=common, help="fit the bipartite configuration model")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=("exact", "chung-lu"), default="exact")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-bidcm", parents=common, help="fit the directed user/post null model")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=("lambda", "exact"), default="lambda")
    p.add_argument("--out", required=True)

    p = sub.add_parser("project", parents=common, help="validated projection")
    p.add_argument("--kind", choices=("undirected", "directed"), required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--fit", required=True)
    null = p.add_mutually_exclusive_group()
    null.add_argument("--exact-pb", action="store_true", help="force the exact Poisson-binomial null")
    null.add_argument("--poisson", action="store_true", help="force the Poisson approximation")
    p.add_argument("--n-tests", choices=("nonzero", "all"), default="nonzero")
    p.add_argument("--bonferroni", action="store_true", help="Bonferroni instead of FDR (diagnostics only)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("communities", parents=common, help="reshuffled Louvain on a validated projection")
    p.add_argument("--graph", required=True)
    p.add_argument("--runs", type=_runs, help="orderings to try (default min(N, 200); 'all' for N)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("polarize", parents=common, help="polarization from verified communities")
    p.add_argument("--bipartite", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--interactions", required=True)
    p.add_argument("--bots", help="labels CSV, for the bot histogram")
    p.add_argument("--max-rounds", type=int, default=50)
    p.add_argument("--out", required=True)

    p = sub.add_parser("influence", parents=common, help="hub scores, bot fractions and squads")
    p.add_argument("--validated", required=True)
    p.add_argument("--bots", required=True)
    p.add_argument("--accounts", help="accounts CSV, needed to keep verified names under --anonymize")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--min-shared", type=int, default=3)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", parents=common, help="generate a synthetic corpus with ground truth")
    p.add_argument("--config", help="SynthConfig JSON (default: built-in planted-squad corpus)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", parents=common, help="full pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keywords")
    p.add_argument("--mapping")
    p.add_argument("--model")
    p.add_argument("--fit-mode", choices=("exact", "chung-lu"), default="chung-lu")
    p.add_argument("--directed-fit", choices=("lambda", "exact"), default="lambda")
    null = p.add_mutually_exclusive_group()
    null.add_argument("--exact-pb", action="store_true")
    null.add_argument("--poisson", action="store_true")
    p.add_argument("--n-tests", choices=("nonzero", "all"), default="nonzero")
    p.add_argument("--runs", type=_runs)
    p.add_argument("--max-rounds", type=int, default=50)
    p.add_argument("--min-shared", type=int, default=3)
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--compare-raw", action="store_true",
                   help="also run Louvain on the raw interaction graph")

    p = sub.add_parser("report", parents=common, help="re-emit the report from a run directory")
    p.add_argument("--run", required=True, help="directory written by 'backbone run'")
    p.add_argument("--out", help="output directory (default: the run directory)")
    return parser


def _null_mode(args):
    if getattr(args, "exact_pb", False):
        return projection.EXACT
    if getattr(args, "poisson", False):
        return projection.POISSON
    return None


FIT_MODES = {"exact": bicm.EXACT, "chung-lu": bicm.CHUNG_LU}
DFIT_MODES = {"lambda": bidcm.LAMBDA_ONLY, "exact": bidcm.EXACT}


def _print(obj):
    print(json.dumps(obj, indent=2))


def dispatch(args) -> None:
    cmd = args.command
    if cmd == "ingest":
        _print(pipeline.stage_ingest(args.input, args.out, args.keywords, args.mapping))
    elif cmd == "bots":
        _print(pipeline.stage_bots(args.accounts, args.out, args.model))
    elif cmd == "fit-bicm":
        _print(pipeline.stage_fit_bicm(args.graph, args.out, FIT_MODES[args.mode]))
    elif cmd == "fit-bidcm":
        _print(pipeline.stage_fit_bidcm(args.graph, args.out, DFIT_MODES[args.mode]))
    elif cmd == "project":
        meta = pipeline.stage_project(args.kind, args.graph, args.fit, args.out, args.alpha, _null_mode(args),
                                      args.n_tests, "bonferroni" if args.bonferroni else "fdr")
        _print({k: v for k, v in meta.items() if k != "loop_nodes"})
    elif cmd == "communities":
        _print(pipeline.stage_communities(args.graph, args.out, args.runs, args.seed))
    elif cmd == "polarize":
        meta = pipeline.stage_polarize(args.bipartite, args.partition, args.interactions, args.out,
                                       args.max_rounds, args.bots)
        _print({"seeds": meta["seeds"], "history": meta["history"]})
    elif cmd == "influence":
        bundle = {"influence": pipeline.influence_bundle(args.validated, args.bots, args.accounts,
                                                         args.top, args.min_shared)}
        if args.anonymize:
            bundle = pipeline.anonymize_bundle(bundle)
        pipeline.write_json(bundle["influence"], args.out)
    elif cmd == "synth":
        cfg = synth.SynthConfig.load(args.config) if args.config else synth.SynthConfig(seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        records, truth = synth.generate_corpus(cfg)
        write_records(records, out / "corpus.jsonl")
        pipeline.write_json(truth.to_dict(), out / "truth.json")
        pipeline.write_json(cfg.to_dict(), out / "synth_config.json")
        _print(pipeline.stage_ingest(out / "corpus.jsonl", out))
    elif cmd == "run":
        cfg = pipeline.PipelineConfig(
            input=args.input, out=args.out, keywords=args.keywords, mapping=args.mapping, model=args.model,
            alpha=args.alpha, fit_mode=FIT_MODES[args.fit_mode], projection_mode=_null_mode(args),
            directed_fit=DFIT_MODES[args.directed_fit], n_tests=args.n_tests, runs=args.runs, seed=args.seed,
            max_rounds=args.max_rounds, min_shared=args.min_shared, top=args.top, anonymize=args.anonymize,
            compare_raw=args.compare_raw, threads=args.threads)
        bundle = pipeline.run_pipeline(cfg)
        _print(bundle["counts"])
    elif cmd == "report":
        bundle = pipeline.read_json(Path(args.run) / "bundle.json")
        for path in pipeline.emit_report(bundle, args.out or args.run, anonymize=args.anonymize):
            print(path)
    else:  # pragma: no cover - argparse rejects unknown commands
        raise ValueError(f"unknown command {cmd}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for k, v in GLOBAL_DEFAULTS.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 < args.alpha < 1:
        parser.error("--alpha must lie in (0, 1)")
    try:
        dispatch(args)
    except pipeline.StageError as exc:
        print(f"backbone {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        print(f"backbone {args.command}: stage {args.command!r} failed: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
