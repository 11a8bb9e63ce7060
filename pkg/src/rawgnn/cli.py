"""Command-line entry point: ``rawgnn <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import TOLERANCE, run_suite
from .graph import load_dataset_dir, resolve_dataset
from .metrics import dataset_stats, format_stats_line
from .training import (
    _coerce,
    experiment_splits,
    export_embeddings,
    load_experiment_data,
    load_spec,
    run_experiment,
    spec_fields,
    train_one_split,
)
from .walker import WalkStrategy, sample_neighborhoods, write_walk_corpus


def _add_spec_flags(p):
    group = p.add_argument_group("config overrides (same names as the config keys)")
    for name in spec_fields():
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        group.add_argument(*flags, dest=f"override_{name}", metavar="VALUE", default=None)


def _overrides(args) -> dict:
    types = spec_fields()
    return {k[len("override_"):]: _coerce(v, types[k[len("override_"):]])
            for k, v in vars(args).items() if k.startswith("override_") and v is not None}


def cmd_stats(args):
    for name in args.datasets:
        path = resolve_dataset(name)
        g, ls = load_dataset_dir(path)
        print(format_stats_line(Path(path).name, dataset_stats(g, ls)))
    return 0


def cmd_train(args):
    spec = load_spec(args.config, _overrides(args))
    g, ls = load_experiment_data(spec)
    splits = experiment_splits(spec, ls)
    if not 0 <= args.split < len(splits):
        raise SystemExit(f"split {args.split} out of range (have {len(splits)})")
    split = splits[args.split]
    est, history = train_one_split(spec, g, ls, split, spec.seed + args.split)
    test = est.score(g, ls, split.test)
    print(f"split {args.split}: epochs {est.n_epochs_} best epoch {est.best_epoch_} "
          f"val {100 * est.best_val_acc_:.2f} test {100 * test:.2f}")
    if args.out:
        est.save(args.out)
        print(f"checkpoint written to {args.out}")
    return 0


def cmd_experiment(args):
    spec = load_spec(args.config, _overrides(args))
    result = run_experiment(spec)
    print(result.table())
    if args.out:
        result.write(args.out)
        print(f"result written to {args.out}")
    return 0 if result.records else 1


def cmd_export(args):
    g, _ = load_dataset_dir(resolve_dataset(args.dataset))
    emb = export_embeddings(args.checkpoint, g, args.out, seed=args.seed)
    print(f"wrote {emb.shape[0]} x {emb.shape[1]} embeddings to {args.out}")
    return 0


def cmd_grad_check(args):
    failed = 0
    for name, res in run_suite(eps=args.eps, seed=args.seed):
        ok = res.max_rel_error < args.tol
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name:16s} max rel err {res.max_rel_error:.3e} "
              f"({res.n_checked} coords, {res.n_excluded} at kinks)")
    return 1 if failed else 0


def cmd_walks(args):
    g, _ = load_dataset_dir(resolve_dataset(args.dataset))
    presets = {"bfs": WalkStrategy.bfs, "dfs": WalkStrategy.dfs}
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for i, name in enumerate(args.strategies.split(",")):
            ws = presets[name](args.path_length, args.walks_per_node)
            write_walk_corpus(out, name, sample_neighborhoods(g, ws, (args.seed, i)))
    finally:
        if args.out:
            out.close()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rawgnn", description="Random-walk path aggregation GNN")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics: name n |E| f |C| LHR FHR")
    p.add_argument("datasets", nargs="+", help="dataset directories or names under $RAWGNN_DATA")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one split and optionally save the checkpoint")
    p.add_argument("config")
    p.add_argument("--split", type=int, default=0)
    p.add_argument("--out", help="checkpoint path (.npz)")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="train all splits and aggregate test accuracy")
    p.add_argument("config")
    p.add_argument("--out", help="structured result file (JSON)")
    _add_spec_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("export-embeddings", help="write node embeddings from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("grad-check", help="finite-difference check of every op and the full model")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=TOLERANCE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("walks", help="dump sampled walks as strategy<TAB>target<TAB>v1,...,vK")
    p.add_argument("dataset")
    p.add_argument("--strategies", default="bfs,dfs")
    p.add_argument("--path-length", type=int, default=4)
    p.add_argument("--walks-per-node", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_walks)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"rawgnn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
