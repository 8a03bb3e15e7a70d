"""Command-line front end: run experiments, compare strategies, report eigengaps.

Configuration is a flat key=value file (same keys as ExperimentConfig
fields) optionally overridden by flags; flags win over the file, the file
wins over defaults. Metrics land in a fixed-schema CSV next to a JSON run
manifest. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .clustering import laplacian_eigengaps, similarity_matrix
from .data import class_distribution
from .errors import ConfigError, DataFormatError, NumericError, ParameterError, PartitionError
from .orchestrator import (
    STRATEGIES,
    ExperimentConfig,
    RoundMetrics,
    build_context,
    run_experiment,
)

CSV_HEADER = "round,strategy,seed,alpha,accuracy,loss,mean_train_loss,cluster_sizes,degeneracies,duration_ms"

OUT_DIR_ENV = "FEDSIM_OUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

_FIELD_TYPES = {f.name: f for f in dataclasses.fields(ExperimentConfig)}

_INT_KEYS = {
    "n_clients", "rounds", "local_epochs", "batch_size", "clusters",
    "features", "hidden", "qubits", "layers", "classes", "per_class", "seed",
}
_FLOAT_KEYS = {"alpha", "local_lr", "server_lr", "lambda1", "lambda2", "prox_mu", "spread"}
_STR_KEYS = {"strategy", "dataset", "idx_images", "idx_labels"}


def _coerce(key: str, raw) -> object:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key '{key}'")
    if key == "keep_classes":
        if raw is None or isinstance(raw, tuple):
            return raw
        try:
            return tuple(int(part) for part in str(raw).split(",") if part.strip() != "")
        except ValueError:
            raise ConfigError(f"key 'keep_classes' expects a comma-separated list of integers, got '{raw}'")
    if key in _INT_KEYS:
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"key '{key}' expects an integer, got '{raw}'")
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"key '{key}' expects a number, got '{raw}'")
    if key in _STR_KEYS:
        return str(raw)
    raise ConfigError(f"unknown config key '{key}'")


def _read_config_file(path) -> dict[str, str]:
    text = Path(path).read_text()
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{stripped}'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_config(file_path=None, flag_overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a full ExperimentConfig with precedence flags > file > defaults.

    Unknown keys and mistyped values raise ConfigError naming the offending
    key. When keep_classes is given, the class count is derived from it.
    """
    resolved: dict[str, object] = {}
    if file_path is not None:
        for key, value in _read_config_file(file_path).items():
            resolved[key] = _coerce(key, value)
    for key, value in (flag_overrides or {}).items():
        if value is None:
            continue
        resolved[key] = _coerce(key, value)
    if resolved.get("keep_classes"):
        resolved["classes"] = len(resolved["keep_classes"])
    try:
        config = ExperimentConfig(**resolved)
    except TypeError as exc:
        raise ConfigError(str(exc))
    return config.validate()


def serialize_config(config: ExperimentConfig) -> str:
    """Flat key = value rendering of a config; parse_config inverts it."""
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name == "keep_classes":
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def _config_dict(config: ExperimentConfig) -> dict:
    out = dataclasses.asdict(config)
    if out["keep_classes"] is not None:
        out["keep_classes"] = list(out["keep_classes"])
    return out


@dataclasses.dataclass
class RunManifest:
    """Machine-readable record of one metrics file: config, version, paths."""

    config: dict
    artifact_version: str
    timestamp: str
    outputs: dict

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def _format_float(x: float) -> str:
    return f"{x:.6f}"


def metrics_rows(metrics: list[RoundMetrics]) -> list[str]:
    """CSV data rows for a metrics sequence (deterministic: timing is zeroed).

    Wall-clock durations stay on the in-memory RoundMetrics and in console
    output; the CSV keeps its duration_ms column byte-stable across reruns.
    """
    rows = []
    for m in metrics:
        rows.append(",".join([
            str(m.round_index),
            m.strategy,
            str(m.seed),
            _format_float(m.alpha),
            _format_float(m.accuracy),
            _format_float(m.loss),
            _format_float(m.mean_train_loss),
            "|".join(str(s) for s in m.cluster_sizes),
            str(m.degeneracies),
            _format_float(0.0),
        ]))
    return rows


def write_metrics(metrics: list[RoundMetrics], path, config: ExperimentConfig) -> Path:
    """Write the per-round CSV plus a sibling .manifest.json, return the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER] + metrics_rows(metrics)
    path.write_text("\n".join(lines) + "\n")
    manifest_path = path.with_suffix(".manifest.json")
    manifest = RunManifest(
        config=_config_dict(config),
        artifact_version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(),
        outputs={"metrics_csv": str(path), "manifest": str(manifest_path)},
    )
    manifest_path.write_text(manifest.to_json())
    return path


def _print_round_summary(metrics: list[RoundMetrics]) -> None:
    print(f"{'round':>5}  {'accuracy':>8}  {'loss':>8}  {'train_loss':>10}  {'clusters':>10}  {'ms':>8}")
    for m in metrics:
        sizes = "|".join(str(s) for s in m.cluster_sizes)
        print(
            f"{m.round_index:>5}  {m.accuracy:>8.4f}  {m.loss:>8.4f}  "
            f"{m.mean_train_loss:>10.4f}  {sizes:>10}  {m.duration_ms:>8.1f}"
        )


def _out_dir(args) -> Path:
    if args.out is not None:
        return Path(args.out)
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path(".")


def _flag_overrides(args) -> dict:
    mapping = {
        "strategy": args.strategy,
        "dataset": args.dataset,
        "idx_images": args.idx_images,
        "idx_labels": args.idx_labels,
        "alpha": args.alpha,
        "n_clients": args.clients,
        "rounds": args.rounds,
        "local_epochs": args.epochs,
        "batch_size": args.batch,
        "local_lr": args.lr,
        "server_lr": args.server_lr,
        "clusters": args.clusters,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "prox_mu": args.prox_mu,
        "qubits": args.qubits,
        "layers": args.layers,
        "hidden": args.hidden,
        "seed": args.seed,
    }
    overrides = {k: v for k, v in mapping.items() if v is not None}
    if args.classes is not None:
        # a comma list selects original labels to keep (IDX path); a bare
        # integer is the synthetic class count
        if "," in args.classes:
            overrides["keep_classes"] = args.classes
        else:
            overrides["classes"] = args.classes
    return overrides


def cmd_run(args) -> int:
    config = parse_config(args.config, _flag_overrides(args))
    metrics = run_experiment(config)
    out = _out_dir(args)
    csv_path = write_metrics(metrics, out / f"metrics_{config.strategy}_seed{config.seed}.csv", config)
    _print_round_summary(metrics)
    print(f"wrote {csv_path}")
    return EXIT_OK


def _parse_strategies(raw: str | None) -> list[str]:
    if raw is None:
        return list(STRATEGIES)
    strategies = [s.strip() for s in raw.split(",") if s.strip()]
    if not strategies:
        raise ConfigError("no strategies given")
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy '{s}' (choose from {', '.join(STRATEGIES)})")
    return strategies


def _parse_alphas(raw: str | None) -> list[float] | None:
    if raw is None or "," not in raw:
        return None
    try:
        return [float(a) for a in raw.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"key 'alpha' expects numbers, got '{raw}'")


def run_compare(strategies: list[str], alphas: list[float], base_config: ExperimentConfig, out_dir: Path):
    """Run each strategy at each alpha with the shared seed and partition.

    Returns (final-accuracy table rows, {alpha: per-round ablation rows}).
    The ablation tables list one accuracy column per requested strategy for
    every round, and are produced whenever an ablation variant is included.
    """
    final_acc: dict[tuple[str, float], float] = {}
    per_round: dict[tuple[str, float], list[RoundMetrics]] = {}
    for alpha in alphas:
        for strategy in strategies:
            config = dataclasses.replace(base_config, strategy=strategy, alpha=alpha).validate()
            metrics = run_experiment(config)
            write_metrics(
                metrics,
                out_dir / f"metrics_{strategy}_alpha{alpha:g}_seed{config.seed}.csv",
                config,
            )
            final_acc[(strategy, alpha)] = metrics[-1].accuracy
            per_round[(strategy, alpha)] = metrics

    comparison_rows = [["strategy"] + [f"alpha_{a:g}" for a in alphas]]
    for strategy in strategies:
        comparison_rows.append(
            [strategy] + [_format_float(final_acc[(strategy, a)]) for a in alphas]
        )

    ablation_tables: dict[float, list[list[str]]] = {}
    if any(s in ("fedcompass_no_clustering", "fedcompass_no_circular") for s in strategies):
        family = [s for s in strategies if s.startswith("fedcompass")]
        for alpha in alphas:
            rows = [["round"] + family]
            n_rounds = len(per_round[(family[0], alpha)])
            for r in range(n_rounds):
                rows.append(
                    [str(r)] + [_format_float(per_round[(s, alpha)][r].accuracy) for s in family]
                )
            ablation_tables[alpha] = rows
    return comparison_rows, ablation_tables


def _write_table(rows: list[list[str]], path: Path) -> None:
    path.write_text("\n".join(",".join(row) for row in rows) + "\n")


def _print_table(rows: list[list[str]]) -> None:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))


def cmd_compare(args) -> int:
    overrides = _flag_overrides(args)
    alphas = _parse_alphas(args.alpha)
    if alphas is not None:
        overrides.pop("alpha", None)
    strategies = _parse_strategies(args.strategy)
    overrides.pop("strategy", None)
    base = parse_config(args.config, overrides)
    if alphas is None:
        alphas = [base.alpha]
    out = _out_dir(args)
    comparison, ablations = run_compare(strategies, alphas, base, out)
    _write_table(comparison, out / "comparison.csv")
    print("final-round accuracy per strategy and alpha:")
    _print_table(comparison)
    for alpha, rows in ablations.items():
        _write_table(rows, out / f"ablation_alpha{alpha:g}.csv")
        print(f"\nper-round accuracy, alpha={alpha:g}:")
        _print_table(rows)
    print(f"\nwrote tables to {out}")
    return EXIT_OK


def cmd_eigengap(args) -> int:
    config = parse_config(args.config, _flag_overrides(args))
    context = build_context(config)
    dists = [class_distribution(c, context.dataset) for c in context.clients]
    sim = similarity_matrix(dists, config.lambda1, config.lambda2)
    values, gaps = laplacian_eigengaps(sim)
    print("normalized-Laplacian spectrum for the partition:")
    print(f"{'k':>3}  {'eigenvalue':>12}  {'gap to next':>12}")
    for k, value in enumerate(values):
        gap = f"{gaps[k]:.6f}" if k < len(gaps) else ""
        print(f"{k:>3}  {value:>12.6f}  {gap:>12}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Deterministic hybrid classical-quantum federated learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, desc in (
        ("run", cmd_run, "run a single experiment"),
        ("compare", cmd_compare, "run a strategy sweep with a shared seed"),
        ("eigengap", cmd_eigengap, "report the Laplacian spectrum for a partition"),
    ):
        p = sub.add_parser(name, help=desc)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--strategy", default=None,
                       help="strategy name (comma-separated list for compare)")
        p.add_argument("--dataset", default=None, choices=("synthetic", "idx"))
        p.add_argument("--idx-images", dest="idx_images", default=None)
        p.add_argument("--idx-labels", dest="idx_labels", default=None)
        p.add_argument("--classes", default=None,
                       help="class count, or comma-separated labels to keep from an IDX file")
        p.add_argument("--alpha", default=None,
                       help="Dirichlet concentration (comma-separated list for compare)")
        p.add_argument("--clients", default=None)
        p.add_argument("--rounds", default=None)
        p.add_argument("--epochs", default=None)
        p.add_argument("--batch", default=None)
        p.add_argument("--lr", default=None)
        p.add_argument("--server-lr", dest="server_lr", default=None)
        p.add_argument("--clusters", default=None)
        p.add_argument("--lambda1", default=None)
        p.add_argument("--lambda2", default=None)
        p.add_argument("--prox-mu", dest="prox_mu", default=None)
        p.add_argument("--qubits", default=None)
        p.add_argument("--layers", default=None)
        p.add_argument("--hidden", default=None)
        p.add_argument("--seed", default=None)
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_DIR_ENV} or .)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, PartitionError, ParameterError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
