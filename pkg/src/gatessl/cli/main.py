"""Main CLI entry point."""

import sys
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Tuple

import click
from pydantic import ValidationError
from rich.table import Table

from .. import __version__
from ..autograd import set_debug
from ..core.pipeline import (
    Evaluation,
    checkpoint_config,
    count_flops,
    evaluate_checkpoint,
    infer_stats,
    restore_model,
    sweep as run_sweep,
    train_run,
)
from ..data import load_split
from ..models.config import RunConfig
from ..storage.checkpoint import Checkpoint, load_checkpoint
from ..storage.filesystem import RESOLVED_CONFIG_FILE, RunDirectory
from ..storage.serialization import Serializer
from ..utils import config as config_loader
from ..utils.errors import ArtifactMismatchError, ConfigurationError, EvaluationError, GateSSLError
from ..utils.logger import Logger, console

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3
EXIT_INTERRUPT = 130

FLOPS_FILE = "flops.json"
STATS_FILE = "stats.json"


def exit_code(error: BaseException) -> int:
    if isinstance(error, (ConfigurationError, ValidationError)):
        return EXIT_CONFIG
    if isinstance(error, ArtifactMismatchError):
        return EXIT_ARTIFACT
    return EXIT_RUNTIME


def guarded(command: Callable) -> Callable:
    """Turn package errors into the documented exit codes."""

    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (GateSSLError, ValidationError) as e:
            Logger.error(str(e))
            if Logger.is_debug():
                Logger.exception("Traceback")
            sys.exit(exit_code(e))
        except KeyboardInterrupt:
            # click would turn this into Abort (exit 1)
            console.print("\n[yellow]Interrupted[/yellow]")
            sys.exit(EXIT_INTERRUPT)

    return wrapper


def run_options(command: Callable) -> Callable:
    """Flags shared by every subcommand."""
    options = [
        click.option('--config', '-c', 'config_path', type=click.Path(path_type=Path),
                     help='YAML config file'),
        click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE',
                     help='Override a config key, e.g. budget.t_d=0.5 (repeatable)'),
        click.option('--data-dir', type=click.Path(path_type=Path), help='Directory holding the CIFAR binaries'),
        click.option('--checkpoint', type=click.Path(path_type=Path), help='Checkpoint file to load'),
        click.option('--out', '-o', type=click.Path(path_type=Path), help='Output directory'),
        click.option('--seed', type=int, help='Run seed'),
        click.option('--threads', type=int, help='Worker threads for augmentation and evaluation'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def resolve(
    config_path: Optional[Path],
    overrides: Iterable[str],
    data_dir: Optional[Path] = None,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    base: Optional[Dict[str, Any]] = None,
    echo: bool = True,
) -> RunConfig:
    """Merge every config layer, apply debug switches and echo the result into the output directory."""
    flags = {
        "data.data_dir": str(data_dir) if data_dir else None,
        "runtime.out_dir": str(out) if out else None,
        "train.seed": seed,
        "runtime.threads": threads,
    }
    cfg = config_loader.load(config_path, overrides, flags, base=base)
    if cfg.runtime.debug:
        set_debug(True)
        if not Logger.is_debug():
            Logger.setup_logger(debug=True)
    if Logger.is_debug():
        show_config(cfg)
    if echo:
        config_loader.save(cfg, Path(cfg.runtime.out_dir) / RESOLVED_CONFIG_FILE)
    return cfg


def resolve_with_checkpoint(
    checkpoint_path: Optional[Path], config_path: Optional[Path], overrides: Iterable[str], **flags
) -> Tuple[RunConfig, Checkpoint]:
    """Without --config, the checkpoint's own training configuration is the base layer."""
    if checkpoint_path is None:
        raise ConfigurationError("this command needs a checkpoint; pass --checkpoint", field="--checkpoint")
    checkpoint = load_checkpoint(checkpoint_path)
    base = None
    if config_path is None:
        base = checkpoint_config(checkpoint).to_dict()
        base["runtime"]["out_dir"] = str(Path(checkpoint_path).parent.parent)
    return resolve(config_path, overrides, base=base, **flags), checkpoint


def show_config(cfg: RunConfig) -> None:
    table = Table(show_header=True, header_style="bold", title="Resolved config")
    table.add_column("Section")
    table.add_column("Key")
    table.add_column("Value")
    for section, values in cfg.to_dict().items():
        for key, value in values.items():
            table.add_row(section, key, str(value))
    console.print(table)


def show_blocks(evaluation: Evaluation) -> None:
    """Per-block budget and channel categories."""
    usage = evaluation.usage.counts() if evaluation.usage is not None else {}
    table = Table(show_header=True, header_style="bold")
    table.add_column("Block", style="cyan")
    table.add_column("Active", justify="right")
    table.add_column("MACs", justify="right")
    table.add_column("Ratio", justify="right")
    table.add_column("Off / On / Dynamic", justify="right")
    for block in evaluation.budget.blocks:
        counts = usage.get(block.name)
        categories = f"{counts.always_off} / {counts.always_on} / {counts.dynamic}" if counts else "-"
        table.add_row(
            block.name,
            f"{block.active_mean:.2f}/{block.channels}",
            f"{block.macs_mean:,.0f}",
            f"{block.ratio_with_overhead:.3f}",
            categories,
        )
    console.print(table)


def summary_line(evaluation: Evaluation) -> str:
    summary = evaluation.summary
    parts = []
    if summary.knn_acc is not None:
        parts.append(f"knn@{summary.k}={summary.knn_acc:.4f}")
    parts.append(f"flop_ratio={summary.flop_ratio:.4f}")
    parts.append(f"reduction={100 * summary.flops_reduction:.1f}%")
    return " ".join(parts)


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose output')
@click.option('--debug', is_flag=True, help='Enable debug mode (also checks every op for NaN/Inf)')
@click.version_option(__version__)
@click.pass_context
def cli(ctx, verbose, debug):
    """gatessl - budgeted channel gating for self-supervised learning.

    Train a gated ResNet under a FLOP budget, then evaluate, analyse and run it sparsely.
    """
    ctx.ensure_object(dict)
    Logger.setup_logger(debug=verbose or debug)
    set_debug(debug)


@cli.command()
@run_options
@click.option('--resume', is_flag=True, help='Continue from the newest checkpoint in the output directory')
@guarded
def train(config_path, overrides, data_dir, checkpoint, out, seed, threads, resume):
    """Train a gated SimSiam model and summarise the final checkpoint."""
    if checkpoint is not None:
        Logger.warning("--checkpoint is ignored by train; use --resume with --out")
    cfg = resolve(config_path, overrides, data_dir=data_dir, out=out, seed=seed, threads=threads, echo=False)
    _, evaluation = train_run(cfg, resume=resume)
    if evaluation is None:
        Logger.success(f"Trained {cfg.train.epochs} epochs into {cfg.runtime.out_dir}")
        return
    if Logger.is_debug():
        show_blocks(evaluation)
    Logger.print(summary_line(evaluation))


@cli.command('eval-knn')
@run_options
@click.option('--split', default='val', type=click.Choice(['train', 'val']), help='Split to measure')
@guarded
def eval_knn(config_path, overrides, data_dir, checkpoint, out, seed, threads, split):
    """KNN accuracy and measured FLOP ratio of a checkpoint."""
    cfg, ckpt = resolve_with_checkpoint(
        checkpoint, config_path, overrides, data_dir=data_dir, out=out, seed=seed, threads=threads
    )
    evaluation = evaluate_checkpoint(ckpt, cfg, cfg.runtime.out_dir, knn=True, split=split, source=str(checkpoint))
    if Logger.is_debug():
        show_blocks(evaluation)
    Logger.print(summary_line(evaluation))


@cli.command('analyze-gates')
@run_options
@click.option('--split', default='val', type=click.Choice(['train', 'val']), help='Split to analyse')
@guarded
def analyze_gates(config_path, overrides, data_dir, checkpoint, out, seed, threads, split):
    """Per-channel activation frequencies and always-off / always-on / dynamic counts."""
    cfg, ckpt = resolve_with_checkpoint(
        checkpoint, config_path, overrides, data_dir=data_dir, out=out, seed=seed, threads=threads
    )
    if not cfg.backbone.gated:
        raise EvaluationError("the checkpoint has no gates to analyse")
    evaluation = evaluate_checkpoint(ckpt, cfg, cfg.runtime.out_dir, knn=False, split=split, source=str(checkpoint))
    show_blocks(evaluation)
    totals = [0, 0, 0]
    for usage in evaluation.usage.counts().values():
        totals[0] += usage.always_off
        totals[1] += usage.always_on
        totals[2] += usage.dynamic
    Logger.print(
        f"always_off={totals[0]} always_on={totals[1]} dynamic={totals[2]} "
        f"flop_ratio={evaluation.summary.flop_ratio:.4f}"
    )


@cli.command('count-flops')
@run_options
@click.option('--split', default='val', type=click.Choice(['train', 'val']), help='Split to average over')
@guarded
def count_flops_cmd(config_path, overrides, data_dir, checkpoint, out, seed, threads, split):
    """Ledger FLOP counts per gated block, printed as JSON."""
    cfg, ckpt = resolve_with_checkpoint(
        checkpoint, config_path, overrides, data_dir=data_dir, out=out, seed=seed, threads=threads
    )
    model = restore_model(ckpt, cfg)
    report = count_flops(model, load_split(cfg, split), cfg.eval.batch_size)
    path = RunDirectory(cfg.runtime.out_dir).save_json(report.model_dump(mode="json"), FLOPS_FILE)
    click.echo(path.read_text(encoding="utf-8"), nl=False)
    Logger.info(f"ratio={report.ratio:.4f} written to {path}")


@cli.command()
@run_options
@click.option('--split', default='val', type=click.Choice(['train', 'val']), help='Split to run')
@guarded
def infer(config_path, overrides, data_dir, checkpoint, out, seed, threads, split):
    """Sparse inference over a split; writes per-block stats.json.

    --out may name the JSON file itself or a directory to hold stats.json.
    """
    target = None
    if out is not None and out.suffix == ".json":
        target, out = out, out.parent
    cfg, ckpt = resolve_with_checkpoint(
        checkpoint, config_path, overrides, data_dir=data_dir, out=out, seed=seed, threads=threads
    )
    model = restore_model(ckpt, cfg)
    stats = infer_stats(model, load_split(cfg, split), cfg.eval.batch_size, cfg.runtime.threads)
    target = target or Path(cfg.runtime.out_dir) / STATS_FILE
    target.parent.mkdir(parents=True, exist_ok=True)
    Serializer.to_json(stats, target)
    Logger.print(f"flop_ratio={stats['ratio']:.4f} samples={stats['samples']} -> {target}")


def parse_budgets(text: str) -> Tuple[float, ...]:
    try:
        budgets = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigurationError(f"cannot parse budgets {text!r}", field="--budgets")
    if not budgets or any(not 0.0 < b <= 1.0 for b in budgets):
        raise ConfigurationError("budgets must be values in (0, 1]", field="--budgets")
    return budgets


@cli.command()
@run_options
@click.option('--budgets', default='0.1,0.3,0.5,0.7', show_default=True, help='Comma-separated target densities')
@click.option('--baseline', is_flag=True, help='Also train the ungated baseline')
@guarded
def sweep(config_path, overrides, data_dir, checkpoint, out, seed, threads, budgets, baseline):
    """Train one run per budget and write the accuracy / FLOPs trade-off table."""
    targets = parse_budgets(budgets)
    cfg = resolve(config_path, overrides, data_dir=data_dir, out=out, seed=seed, threads=threads)
    rows = run_sweep(cfg, targets, baseline=baseline)

    table = Table(show_header=True, header_style="bold")
    for column in ("t_d", "knn_acc", "flop_ratio", "reduction"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(
            "baseline" if row.t_d is None else f"{row.t_d:g}",
            f"{row.knn_acc:.4f}",
            f"{row.flop_ratio:.4f}",
            f"{100 * row.flops_reduction:.1f}%",
        )
    console.print(table)


def main():
    """Main entry point."""
    try:
        cli(obj={})
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted[/yellow]")
        sys.exit(EXIT_INTERRUPT)
    except Exception as e:
        Logger.error(f"Unexpected error: {e}")
        if Logger.is_debug():
            import traceback
            traceback.print_exc()
        sys.exit(EXIT_RUNTIME)


if __name__ == '__main__':
    main()
