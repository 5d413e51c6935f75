import argparse
import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, get_args

import pandas as pd
import torch

from . import __version__
from .errors import CheckpointError, ConfigError, MeldError
from .evaluation import (
    PERM_POLICIES,
    basic_metrics,
    bonds_of,
    clash_count,
    entropy_report,
    timestep_grid,
)
from .graphmol import (
    GraphSample,
    Vocabulary,
    graph_records,
    load_dataset,
    parse_smiles,
    random_molecules,
    record_to_graph,
    symmetric_ring_corpus,
    write_smiles,
)
from .sampler import generate, reconstruct_report
from .schedules import (
    PermAssignment,
    alpha_table,
    build_schedule,
    embedding_similarity,
    schedule_param_count,
    variation_report,
)
from .schemas.config import RunConfig, ScheduleMode, load_config
from .training import Trainer, load_model
from .utils import numpy_rng, read_jsonl, seed_everything, write_csv, write_json, write_jsonl, write_text
from .utils.checkpoint import load_checkpoint

logger = logging.getLogger("meld")

EXIT_GENERIC, EXIT_CONFIG, EXIT_IO, EXIT_CHECKPOINT = 1, 2, 3, 4

# CFG scale used when conditions are given without --guidance
DEFAULT_COND_GUIDANCE = 2.0

ABLATION_MODES = [
    "fixed_powerlaw",
    "learn_classwise",
    "learn_kindshared",
    "learn_node_only",
    "learn_edge_only",
    "learn_elementwise",
]


# argument helpers

def _int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _timesteps(text: str, grid: int) -> List[float]:
    """Comma list of times; "T-k" labels map to (T - k) / T."""
    values = []
    for item in (x.strip() for x in text.split(",")):
        if not item:
            continue
        if item.upper().startswith("T"):
            offset = item[1:].lstrip("-") or "0"
            values.extend(timestep_grid([int(offset)], grid))
        else:
            values.append(float(item))
    for t in values:
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"timestep {t} outside [0, 1]")
    return values


def _conditions(items: Sequence[str]) -> Dict[str, float]:
    cond: Dict[str, float] = {}
    for chunk in items:
        for pair in chunk.split(","):
            key, sep, value = pair.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"condition must look like name=value, got {pair!r}")
            try:
                cond[key.strip()] = float(value)
            except ValueError as exc:
                raise ConfigError(f"condition {key.strip()!r} is not a number: {value!r}") from exc
    return cond


def _read_graphs(path: Path, vocab: Vocabulary) -> List[GraphSample]:
    """JSONL records, or one SMILES string per line for any other suffix."""
    if path.suffix == ".jsonl":
        return [record_to_graph(r, vocab) for r in read_jsonl(path)]
    lines = path.read_text(encoding="utf-8").splitlines()
    return [parse_smiles(line, vocab) for line in lines if line.strip()]


def _run_record(path: Path, command: str, config: RunConfig, seed: Optional[int],
                extra: Optional[Dict[str, Any]] = None) -> None:
    write_json(path, {
        "meld_version": __version__,
        "command": command,
        "seed": seed,
        "config": config.model_dump(mode="json"),
        **(extra or {}),
    })


def _record_path(out: Path) -> Path:
    """run.json inside output directories, <stem>.run.json next to output files."""
    if out.suffix:
        return out.with_name(f"{out.stem}.run.json")
    return out / "run.json"


def _config(args: argparse.Namespace, overrides: Sequence[str] = (),
            base: Optional[Dict[str, Any]] = None) -> RunConfig:
    return load_config(args.config, list(overrides) + list(args.set or []), base=base)


# commands

def cmd_train(args: argparse.Namespace) -> int:
    overrides = [f"train.seed={args.seed}"] if args.seed is not None else []
    base = None
    if args.resume:
        manifest, _ = load_checkpoint(args.resume)
        base = manifest["config"]
    config = _config(args, overrides, base)
    if not config.data.train_path:
        raise ConfigError("data.train_path: a training corpus is required")

    print("\nInitializing training...")
    print("Configuration:")
    print(f"  - Corpus: {config.data.train_path}")
    print(f"  - Schedule: {config.schedule.mode}")
    print(f"  - Steps: {config.train.steps} (batch {config.train.batch_size})")
    print(f"  - Seed: {config.train.seed}")

    dataset = load_dataset(config.data.train_path, config.data.vocabulary(), args.workers)
    trainer = Trainer(config, dataset, args.out, show_progress=not args.quiet)
    if args.resume:
        trainer.load_state(args.resume)
        print(f"  - Resumed from step {trainer.step}")

    print("\nStarting training...")
    trainer.run()
    run_dir = trainer.logger.current_run_dir
    _run_record(run_dir / "run.json", "train", config, config.train.seed,
                {"resumed_from": str(args.resume) if args.resume else None})
    report = trainer.generate_report()
    print("\nTraining completed successfully!")
    print(f"  - Final loss (mean of last 10): {report.get('final_loss_mean10', float('nan')):.4f}")
    print(f"  - Schedule parameters: {report['schedule_params']}")
    print(f"  - Outputs: {run_dir}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    bundle = load_model(args.ckpt)
    overrides = []
    if args.count is not None:
        overrides.append(f"sample.count={args.count}")
    if args.steps is not None:
        overrides.append(f"sample.steps={args.steps}")
    if args.seed is not None:
        overrides.append(f"sample.seed={args.seed}")
    config = _config(args, overrides, base=bundle.config.model_dump(mode="json"))
    cond = _conditions(args.cond or [])
    if cond:
        unknown = sorted(set(cond) - set(bundle.properties))
        if unknown:
            raise ConfigError(f"sample.condition: model was not trained on {unknown}")
        config.sample.condition = cond
        config.sample.guidance_scale = DEFAULT_COND_GUIDANCE if args.guidance is None else args.guidance
    elif args.guidance is not None:
        config.sample.guidance_scale = args.guidance
    if args.trace:
        config.sample.trace = True

    out = Path(args.out)
    print(f"\nSampling {config.sample.count} graphs with T={config.sample.steps} "
          f"(guidance {config.sample.guidance_scale})...")
    seed_everything(config.sample.seed)
    graphs, traces = generate(
        bundle.sampling_model(config.sample.use_ema),
        bundle.schedule,
        config.sample,
        bundle.vocab,
        bundle.size_histogram,
        properties=bundle.properties,
        property_stats=bundle.property_stats,
        show_progress=not args.quiet,
    )
    records = graph_records(graphs, bundle.vocab)
    for k, record in enumerate(records):
        record["index"] = k
    count = write_jsonl(out, records)
    if traces:
        trace_dir = out.with_name(f"{out.stem}_traces")
        for k, trace in enumerate(traces):
            write_csv(trace_dir / f"sample_{k}.csv", reconstruct_report(trace))
        print(f"  - Traces: {trace_dir}")
    _run_record(_record_path(out), "sample", config, config.sample.seed,
                {"checkpoint": str(args.ckpt), "checkpoint_step": bundle.step})
    print(f"Wrote {count} graphs to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    vocab = config.data.vocabulary()
    generated = [record_to_graph(r, vocab) for r in read_jsonl(args.generated)]
    training = load_dataset(args.train, vocab, args.workers).samples
    ev = config.eval
    report = basic_metrics(
        generated, training, vocab,
        max_nodes=ev.canonical_max_nodes,
        with_mmd=args.mmd,
        mmd_kwargs={"sigma": ev.kernel_sigma, "clustering_bins": ev.clustering_bins,
                    "spectral_bins": ev.spectral_bins, "workers": args.workers},
    )
    out = Path(args.out)
    write_json(out, report.model_dump(mode="json"))
    write_text(out.with_suffix(".txt"), report.to_text())
    _run_record(_record_path(out), "eval", config, config.train.seed,
                {"generated": str(args.generated), "train": str(args.train)})
    print()
    print(report.to_text(), end="")
    return 0


def _resolve_schedule(source: str, config: RunConfig) -> Tuple[Any, Vocabulary, str]:
    """A checkpoint path, or a schedule mode name built with config defaults."""
    if Path(source).exists():
        bundle = load_model(source)
        return bundle.schedule, bundle.vocab, f"checkpoint {source}"
    if source not in get_args(ScheduleMode):
        raise ConfigError(f"--ckpt-or-schedule: {source!r} is neither a file nor a schedule mode")
    vocab = config.data.vocabulary()
    schedule_config = config.schedule.model_copy(update={"mode": source})
    return build_schedule(schedule_config, vocab, config.data.n_max), vocab, f"untrained {source}"


def cmd_clash(args: argparse.Namespace) -> int:
    config = _config(args)
    schedule, vocab, origin = _resolve_schedule(args.ckpt_or_schedule, config)
    graphs = load_dataset(args.data, vocab, args.workers).samples
    if args.nodes is not None:
        graphs = [g for g in graphs if g.n == args.nodes]
    timesteps = (_timesteps(args.timesteps, config.eval.clash_grid) if args.timesteps
                 else list(config.eval.clash_timesteps))
    seeds = args.seeds if args.seeds is not None else config.eval.clash_seeds
    seed_list = list(range(args.seed, args.seed + seeds))

    print(f"\nCounting unique states for {len(graphs)} graphs under {origin} ({seeds} seeds)...")
    table = clash_count(graphs, schedule, vocab, timesteps, seeds=seed_list,
                        perm_policy=args.perm_policy, max_nodes=config.eval.canonical_max_nodes)
    out = Path(args.out)
    write_csv(out, table, index=True)
    _run_record(_record_path(out), "clash", config, args.seed,
                {"schedule": origin, "timesteps": timesteps, "seed_count": seeds, "seeds": seed_list})
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    return 0


def _inspect_variance(bundle: Any, config: RunConfig, args: argparse.Namespace) -> pd.DataFrame:
    n = args.n or max(bundle.size_histogram)
    grid = config.eval.clash_grid
    perms = [PermAssignment.random(bundle.schedule.n_max, numpy_rng(args.seed, k))
             for k in range(args.perms)]
    t_grid = [k / grid for k in range(1, grid + 1)]
    return variation_report(bundle.schedule, perms, n, t_grid, delta=1.0 / grid)


def _inspect_entropy(bundle: Any, args: argparse.Namespace, out: Path) -> int:
    vocab = bundle.vocab
    graphs = _read_graphs(Path(args.entropy), vocab)[:args.limit]
    model = bundle.sampling_model(True)
    rows = []
    for k, g in enumerate(graphs):
        mask_edges = bonds_of(g, vocab, args.mask_atom) if args.mask_atom else []
        mask_nodes = _int_list(args.mask_nodes) if args.mask_nodes else []
        maps = entropy_report(model, g, vocab, mask_nodes, mask_edges, t=args.t,
                              properties=bundle.properties, property_stats=bundle.property_stats,
                              carry_over=args.carry_over)
        write_csv(out / f"entropy_{k}_edges.csv", maps.edge_frame(), index=True)
        write_csv(out / f"entropy_{k}_nodes.csv", pd.DataFrame({
            "node": range(g.n),
            "atom": [vocab.atom_types[int(x)] for x in g.nodes],
            "masked": [i in mask_nodes for i in range(g.n)],
            "entropy": maps.node,
        }))
        rows.append({"input": k, "n": g.n, "masked_edges": len(mask_edges),
                     "mean_masked_edge_entropy": maps.mean_masked_edge_entropy()})
    write_csv(out / "entropy_summary.csv", pd.DataFrame(rows))
    return len(graphs)


def cmd_inspect(args: argparse.Namespace) -> int:
    bundle = load_model(args.ckpt)
    config = _config(args, base=bundle.config.model_dump(mode="json"))
    out = Path(args.out)
    print(f"\nInspecting {bundle.schedule.mode} schedule "
          f"({schedule_param_count(bundle.schedule)} parameters, step {bundle.step})")

    if args.schedule_variance:
        frame = _inspect_variance(bundle, config, args)
        write_csv(out, frame)
        print(f"  - Mean node std {frame['node_std'].mean():.4g}, edge std {frame['edge_std'].mean():.4g}")
    elif args.embedding_similarity:
        n = args.n or 6
        nodes = list(range(n))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
        sims = embedding_similarity(bundle.schedule, nodes, edges,
                                    PermAssignment.identity(bundle.schedule.n_max))
        write_csv(out, pd.DataFrame([sims]))
        print(f"  - Cosine similarity: nodes {sims['nodes']:.4f}, edges {sims['edges']:.4f}, "
              f"all {sims['all']:.4f}")
    elif args.alpha_table:
        g = _read_graphs(Path(args.alpha_table), bundle.vocab)[0]
        grid = config.eval.clash_grid
        frame = alpha_table(bundle.schedule, g, PermAssignment.identity(bundle.schedule.n_max),
                            [k / grid for k in range(grid + 1)])
        write_csv(out, frame)
    else:
        count = _inspect_entropy(bundle, args, out)
        print(f"  - Entropy maps for {count} inputs")
    _run_record(_record_path(out), "inspect", config, args.seed, {"checkpoint": str(args.ckpt)})
    print(f"Report written to {out}")
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    config = _config(args)
    vocab = config.data.vocabulary()
    records = []
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            g = parse_smiles(line, vocab)
        except MeldError:
            logger.error("%s line %d: cannot parse %r", args.input, line_no, line.strip())
            raise
        records.append({"smiles": line.strip(), **g.to_record()})
    count = write_jsonl(args.out, records)
    _run_record(_record_path(Path(args.out)), "parse", config, None,
                {"input": str(args.input), "count": count})
    print(f"Parsed {count} molecules into {args.out}")
    return 0


def cmd_write(args: argparse.Namespace) -> int:
    config = _config(args)
    vocab = config.data.vocabulary()
    smiles = [write_smiles(record_to_graph(r, vocab), vocab) for r in read_jsonl(args.input)]
    write_text(args.out, "".join(s + "\n" for s in smiles))
    _run_record(_record_path(Path(args.out)), "write", config, None,
                {"input": str(args.input), "count": len(smiles)})
    print(f"Wrote {len(smiles)} SMILES strings to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = _config(args)
    vocab = config.data.vocabulary()
    rng = numpy_rng(args.seed)
    if args.kind == "ring":
        graphs = symmetric_ring_corpus(args.count, args.nodes, vocab, rng)
    else:
        graphs = random_molecules(args.count, args.max_atoms, vocab, rng)
    count = write_jsonl(args.out, graph_records(graphs, vocab))
    _run_record(_record_path(Path(args.out)), "synth", config, args.seed,
                {"kind": args.kind, "count": count})
    print(f"Wrote {count} synthetic {args.kind} graphs to {args.out}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _config(args)
    if not config.data.train_path:
        raise ConfigError("data.train_path: a training corpus is required")
    if args.out:
        out = Path(args.out)
    else:
        out = Path(config.train.out_dir) / f"ablate_{datetime.now().strftime('%Y-%m-%d_%H-%M-%S')}"
    modes = args.modes.split(",") if args.modes else ABLATION_MODES
    dataset = load_dataset(config.data.train_path, config.data.vocabulary(), args.workers)
    vocab = config.data.vocabulary()
    ev = config.eval

    rows = []
    for mode in modes:
        mode_config = load_config(base=config.model_dump(mode="json"), overrides=[f"schedule.mode={mode}"])
        print(f"\n[{mode}] training {mode_config.train.steps} steps...")
        trainer = Trainer(mode_config, dataset, out / mode, show_progress=not args.quiet)
        trainer.run()
        seed_everything(mode_config.sample.seed)
        graphs, _ = generate(trainer.ema, trainer.schedule, mode_config.sample, vocab,
                             dataset.size_histogram, trainer.config.train.properties,
                             dataset.property_stats)
        report = basic_metrics(graphs, dataset.samples, vocab, ev.canonical_max_nodes, with_mmd=ev.mmd,
                               mmd_kwargs={"sigma": ev.kernel_sigma, "clustering_bins": ev.clustering_bins,
                                           "spectral_bins": ev.spectral_bins, "workers": args.workers})
        write_json(out / mode / "metrics.json", report.model_dump(mode="json"))
        write_text(out / mode / "metrics.txt", report.to_text())
        write_jsonl(out / mode / "samples.jsonl", graph_records(graphs, vocab))
        _run_record(out / mode / "run.json", "ablate", mode_config, mode_config.train.seed)
        rows.append({
            "mode": mode,
            "schedule_params": trainer.schedule.param_count(),
            "validity_pct": report.validity_pct,
            "uniqueness_pct": report.uniqueness_pct,
            "novelty_pct": report.novelty_pct,
            **{f"mmd_{k}": v for k, v in report.mmd.items()},
        })
        print(f"[{mode}] validity {report.validity_pct:.2f}%, uniqueness {report.uniqueness_pct:.2f}%")

    table = pd.DataFrame(rows)
    write_csv(out / "ablation.csv", table)
    print(f"\nAblation table written to {out / 'ablation.csv'}")
    print(table.to_string(index=False))
    return 0


# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='TOML (or JSON) run configuration')
    common.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='Override a config key (repeatable)')
    common.add_argument('--workers', type=int, default=os.cpu_count() or 1,
                        help='Upper bound on internal parallelism (default: available cores)')
    common.add_argument('--log-level', type=str, default='INFO', help='Logging level (default: INFO)')
    common.add_argument('--quiet', action='store_true', help='Hide progress bars')

    parser = argparse.ArgumentParser(
        prog='meld',
        description='Masked graph diffusion with element-wise learnable noise schedules.',
    )
    parser.add_argument('--version', action='version', version=f'meld {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', parents=[common], help='Train denoiser and schedule')
    p.add_argument('--resume', type=str, default=None, help='Checkpoint to continue from')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', type=str, default=None, help='Run directory (default: timestamped)')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('sample', parents=[common], help='Generate graphs from a checkpoint')
    p.add_argument('--ckpt', type=str, required=True)
    p.add_argument('--count', type=int, default=None)
    p.add_argument('--steps', type=int, default=None, help='Reverse steps T')
    p.add_argument('--guidance', type=float, default=None,
                   help=f'CFG scale (default: 0, or {DEFAULT_COND_GUIDANCE} with --cond)')
    p.add_argument('--cond', action='append', default=[], metavar='NAME=VALUE[,...]')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--trace', action='store_true', help='Write per-sample reconstruction curves')
    p.add_argument('--out', type=str, required=True, help='JSONL output')
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser('eval', parents=[common], help='Metrics of a generated set')
    p.add_argument('--generated', type=str, required=True)
    p.add_argument('--train', type=str, required=True)
    p.add_argument('--mmd', action='store_true', help='Also compute degree/clustering/spectral MMD')
    p.add_argument('--out', type=str, required=True, help='JSON report (text copy beside it)')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('clash', parents=[common], help='Unique corrupted states per timestep')
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--ckpt-or-schedule', type=str, required=True,
                   help='Checkpoint path or schedule mode name')
    p.add_argument('--timesteps', type=str, default=None, help='Comma list of t or T-k labels')
    p.add_argument('--seeds', type=int, default=None, help='Number of seeds')
    p.add_argument('--seed', type=int, default=0, help='First seed of the run')
    p.add_argument('--nodes', type=int, default=None, help='Keep only graphs with this node count')
    p.add_argument('--perm-policy', choices=PERM_POLICIES, default='random')
    p.add_argument('--out', type=str, required=True, help='CSV output')
    p.set_defaults(func=cmd_clash)

    p = sub.add_parser('inspect', parents=[common], help='Schedule and entropy reports')
    p.add_argument('--ckpt', type=str, required=True)
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument('--schedule-variance', action='store_true')
    which.add_argument('--embedding-similarity', action='store_true')
    which.add_argument('--entropy', type=str, metavar='INPUT', help='JSONL or SMILES file')
    which.add_argument('--alpha-table', type=str, metavar='INPUT', help='Per-element alpha curves')
    p.add_argument('--n', type=int, default=None, help='Node count for schedule reports')
    p.add_argument('--perms', type=int, default=8, help='Permutations for --schedule-variance')
    p.add_argument('--mask-atom', type=str, default='N', help='Mask every bond of this atom symbol')
    p.add_argument('--mask-nodes', type=str, default=None, help='Comma list of nodes to mask')
    p.add_argument('--t', type=float, default=None, help='Time fed to the denoiser')
    p.add_argument('--carry-over', action='store_true')
    p.add_argument('--limit', type=int, default=16, help='Inputs read for --entropy')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', type=str, required=True, help='CSV file (directory for --entropy)')
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser('parse', parents=[common], help='SMILES file to JSONL')
    p.add_argument('--in', dest='input', type=str, required=True)
    p.add_argument('--out', type=str, required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser('write', parents=[common], help='JSONL to SMILES file')
    p.add_argument('--in', dest='input', type=str, required=True)
    p.add_argument('--out', type=str, required=True)
    p.set_defaults(func=cmd_write)

    p = sub.add_parser('synth', parents=[common], help='Bundled synthetic corpora')
    p.add_argument('--kind', choices=['ring', 'molecules'], default='molecules')
    p.add_argument('--count', type=int, default=500)
    p.add_argument('--nodes', type=int, default=8, help='Node count of ring graphs')
    p.add_argument('--max-atoms', type=int, default=9)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', type=str, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('ablate', parents=[common], help='Train, sample and score every schedule mode')
    p.add_argument('--modes', type=str, default=None, help=f'Comma list (default: {",".join(ABLATION_MODES)})')
    p.add_argument('--out', type=str, default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, CheckpointError):
        return EXIT_CHECKPOINT
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_GENERIC


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(max(1, args.workers))

    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("\n\nInterrupted by user.")
        return EXIT_GENERIC
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        logger.debug("traceback", exc_info=True)
        return _exit_code(e)


if __name__ == '__main__':
    sys.exit(main())
