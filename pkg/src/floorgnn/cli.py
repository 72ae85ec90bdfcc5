"""Command-line pipeline: synth -> build -> train/eval/sweep, plus embed -> tsne."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .analysis import TsneConfig, export_embeddings, read_embeddings_csv, tsne, write_embeddings_csv, write_tsne_csv
from .data import clean_dataset, load_dataset, save_dataset, split_dataset
from .errors import BadSplitError, EmptyEdgesError, FloorGNNError
from .graph import GraphBuildConfig, build_graph, load_graphs, save_graphs
from .models import KINDS, ModelConfig, init_model
from .synth import SynthConfig, generate_synthetic
from .training import (
    MetricsRow,
    TrainConfig,
    depth_sweep,
    evaluate_accuracy,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)
from .vocab import CategoryVocab

log = logging.getLogger("floorgnn")


def parse_depths(text: str) -> list:
    """``"2..12"`` (inclusive range), ``"2,4,8"`` or a single integer."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def parse_models(text: str) -> list:
    kinds = [t.strip() for t in text.split(",") if t.strip()]
    for k in kinds:
        if k not in KINDS:
            raise argparse.ArgumentTypeError(f"unknown model {k!r}")
    return kinds


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        base_lr=args.lr,
        lr_step=args.lr_step,
        lr_gamma=args.lr_gamma,
        seed=args.seed,
        shuffle_each_epoch=not getattr(args, "no_shuffle", False),
    )


def build_graphs_from_dataset(dataset, vocab, cfg):
    cleaned, removed = clean_dataset(dataset)
    graphs, empty = [], 0
    for plan in cleaned.plans:
        try:
            graphs.append(build_graph(plan, vocab, cfg))
        except EmptyEdgesError:
            empty += 1
    log.info("built %d graphs (%d plans removed by cleaning, %d with no edges)", len(graphs), removed, empty)
    return graphs


# --- subcommands ----------------------------------------------------------------------


def cmd_synth(args):
    cfg = SynthConfig(args.n_plans, args.rooms_min, args.rooms_max, args.seed)
    save_dataset(generate_synthetic(cfg), args.out)


def cmd_build(args):
    vocab = CategoryVocab.from_file(args.vocab) if args.vocab else CategoryVocab()
    dataset = load_dataset(args.in_path, vocab=vocab)
    cfg = GraphBuildConfig(args.threshold, args.nesting_ratio)
    save_graphs(build_graphs_from_dataset(dataset, vocab, cfg), args.out)


def cmd_split(args):
    dataset = load_dataset(args.in_path)
    train_set, test_set = split_dataset(dataset, args.n_train, args.shuffle_seed)
    save_dataset(train_set, args.out_train)
    save_dataset(test_set, args.out_test)


def cmd_train(args):
    graphs = load_graphs(args.graphs)
    m = init_model(ModelConfig(kind=args.model, depth=args.depth, seed=args.seed))
    test_graphs = load_graphs(args.test_graphs) if args.test_graphs else None
    m, history = train(m, graphs, _train_config(args), test_graphs, args.eval_every)
    save_checkpoint(m, args.out_checkpoint, m.optimizer_state)
    write_metrics_csv(history, args.out_metrics)


def cmd_eval(args):
    m = load_checkpoint(args.checkpoint)
    loss, acc = evaluate_accuracy(m, load_graphs(args.graphs))
    epoch = max(m.epochs_trained - 1, 0)
    write_metrics_csv([MetricsRow(m.config.kind, m.config.depth, epoch, args.split, loss, acc)], args.out_metrics)


def cmd_sweep(args):
    rows = depth_sweep(
        args.models,
        args.depths,
        load_graphs(args.graphs_train),
        load_graphs(args.graphs_test),
        _train_config(args),
        jobs=args.jobs,
    )
    write_metrics_csv(rows, args.out_metrics)


def cmd_embed(args):
    dump = export_embeddings(
        args.model, load_graphs(args.graphs), cap=args.cap, seed=args.seed, sample_seed=args.sample_seed, depth=args.depth
    )
    write_embeddings_csv(dump, args.out)


def cmd_tsne(args):
    dump = read_embeddings_csv(args.in_path)
    cfg = TsneConfig(
        perplexity=args.perplexity,
        iterations=args.iterations,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    result = tsne(dump.embeddings, cfg)
    log.info("t-SNE finished, KL(P||Q) = %.6f", result.kl)
    write_tsne_csv(dump, result.coords, args.out)


def cmd_reproduce(args):
    """Full-scale run on a supplied dataset: clean, build, prefix split, sweep."""
    vocab = CategoryVocab.from_file(args.vocab) if args.vocab else CategoryVocab()
    graphs = build_graphs_from_dataset(load_dataset(args.dataset, vocab=vocab), vocab, GraphBuildConfig())
    if not 0 < args.n_train < len(graphs):
        raise BadSplitError(f"n_train={args.n_train} does not fit {len(graphs)} graphs")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = depth_sweep(args.models, args.depths, graphs[: args.n_train], graphs[args.n_train :], _train_config(args), jobs=args.jobs)
    write_metrics_csv(rows, out / "sweep_metrics.csv")


# --- parser --------------------------------------------------------------------------------


def _add_train_flags(p, with_seed=True):
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.004)
    p.add_argument("--lr-step", type=int, default=10)
    p.add_argument("--lr-gamma", type=float, default=0.8)
    p.add_argument("--no-shuffle", action="store_true", help="keep dataset order in every epoch")
    if with_seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floorgnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic floor-plan JSONL dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-plans", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rooms-min", type=int, default=3)
    p.add_argument("--rooms-max", type=int, default=8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="convert floor plans to room graphs")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.03)
    p.add_argument("--nesting-ratio", type=float, default=0.7)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("split", help="prefix-split a floor-plan dataset")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--shuffle-seed", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--graphs", required=True)
    p.add_argument("--model", choices=KINDS, required=True)
    p.add_argument("--depth", type=int, required=True)
    _add_train_flags(p)
    p.add_argument("--test-graphs")
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-metrics", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--graphs", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-metrics", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate every (model, depth) cell")
    p.add_argument("--graphs-train", required=True)
    p.add_argument("--graphs-test", required=True)
    p.add_argument("--models", type=parse_models, default=list(KINDS))
    p.add_argument("--depths", type=parse_depths, default=parse_depths("2..12"))
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    p.add_argument("--out-metrics", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("embed", help="export node embeddings of an untrained model")
    p.add_argument("--graphs", required=True)
    p.add_argument("--model", choices=KINDS, required=True)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--cap", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("tsne", help="exact t-SNE of an embedding CSV")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tsne)

    p = sub.add_parser("reproduce", help="full-scale sweep on a supplied dataset (slow)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=120000)
    p.add_argument("--vocab")
    p.add_argument("--models", type=parse_models, default=list(KINDS))
    p.add_argument("--depths", type=parse_depths, default=parse_depths("2..12"))
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except FloorGNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
