"""Command-line entry point: kernel, generate, cluster, sweep and score."""
import argparse
import json
from pathlib import Path
from typing import Any, Optional, Sequence

from loguru import logger
from pydantic import ValidationError

from config.errors import ConfigError, CorticalError
from config.logger import setup_logger
from config.hashing import sha256_hex
from config.settings import settings
from evaluation import match_units, score, sweep
from kernels import KernelCache, KernelParams, ProcessKind, ProcessSpec, marginal
from services import AffinityMode, GroupingConfig, GroupingService, KernelService
from spectral import ClusterLabels
from stimuli import GENERATORS, LabeledDataset, generate
from .config import (
    RUN_CONFIGS,
    ClusterRunConfig,
    GenerateRunConfig,
    KernelRunConfig,
    RunConfig,
    ScoreRunConfig,
    SweepRunConfig,
    merge_overrides,
)


def _drop_none(values: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_pairs(pairs: Optional[list[str]], flag: str) -> dict[str, Any]:
    """``KEY=VALUE`` flags into a dict, values parsed as JSON when possible."""
    parsed = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"{flag} expects KEY=VALUE, got '{pair}'")
        parsed[key] = _parse_value(value)
    return parsed


def _parse_axes(pairs: Optional[list[str]]) -> dict[str, list[float]]:
    axes = {}
    for pair in pairs or []:
        name, sep, values = pair.partition("=")
        if not sep or not values:
            raise ConfigError(f"--axis expects NAME=V1,V2,..., got '{pair}'")
        try:
            axes[name] = [float(v) for v in values.split(",")]
        except ValueError:
            raise ConfigError(f"--axis {name} has a non-numeric value in '{values}'") from None
    return axes


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def write_manifest(out: Path, run_config: RunConfig, outputs: Sequence[Path], **extra) -> Path:
    """``manifest.json``: validated run config, output hashes and any inputs or sub-seeds."""
    manifest = {
        **extra,
        "command": run_config.command,
        "config": run_config.model_dump(mode="json"),
        "outputs": {p.name: sha256_hex(p.read_bytes()) for p in sorted(outputs)},
    }
    return _write_json(out / "manifest.json", manifest)


def write_error(out: Path, command: str, error: Exception) -> Optional[Path]:
    record = {"command": command, "error_type": type(error).__name__, "message": str(error)}
    try:
        return _write_json(out / "error.json", record)
    except OSError as e:
        logger.error(f"Could not write error record to {out}: {e}")
        return None


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------
def cmd_kernel(config: KernelRunConfig) -> list[Path]:
    out = Path(config.out)
    process = ProcessSpec(kind=config.process, kappa=config.kappa, alpha=config.alpha)
    widths = {} if config.n_theta is None else {"n_theta": config.n_theta}
    params = KernelParams.build(process.manifold, H=config.H, N=config.N, seed=config.seed, v_max=config.v_max, **widths)
    service = KernelService(cache=KernelCache(config.cache_dir), jobs=config.jobs)
    kernel, key = service.get(process, params)

    outputs = []
    if config.marginal is not None:
        for b in sorted(kernel.slices):
            path = out / f"marginal_{config.marginal}_v{b}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            marginal(kernel, config.marginal, v_bin=b).to_csv(path, index=False, lineterminator="\n")
            outputs.append(path)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, config, outputs, kernel_key=key, cache_dir=str(service.cache.cache_dir))
    return outputs


def cmd_generate(config: GenerateRunConfig) -> list[Path]:
    out = Path(config.out)
    params = dict(config.params)
    if config.velocity_V is not None:
        params["velocity_V"] = config.velocity_V
    dataset = generate(config.generator, seed=config.seed, **params)
    path = dataset.to_csv(out / "dataset.csv")
    outputs = [path, path.with_name("dataset.meta.json")]
    write_manifest(out, config, outputs, dataset_hash=dataset.content_hash())
    return outputs


def cmd_cluster(config: ClusterRunConfig) -> list[Path]:
    out = Path(config.out)
    dataset = LabeledDataset.from_csv(config.dataset, expected_hash=config.dataset_hash)
    kernels = KernelService(cache=KernelCache(config.cache_dir), auto_build=config.auto_kernel, jobs=config.jobs)
    result = GroupingService(kernel_service=kernels, jobs=config.jobs).group(dataset, config.grouping)

    labels_path = result.labels.to_csv(out / "labels.csv")
    clustering_path = _write_json(
        out / "clustering.json",
        {"K": result.labels.K, "q": result.labels.q, "sizes": result.labels.sizes.tolist(), **result.labels.info},
    )
    outputs = [labels_path, clustering_path]
    if dataset.n_units > 0:
        outputs.append(_write_score(out, result.labels, dataset))
    write_manifest(out, config, outputs, dataset_hash=dataset.content_hash(), kernel_keys=result.kernel_keys)
    return outputs


def _write_score(out: Path, labels: ClusterLabels, dataset: LabeledDataset) -> Path:
    breakdown = score(labels, dataset.truth)
    matched = match_units(labels, dataset.truth)
    payload = {**breakdown.model_dump(), "matching": {str(u): c for u, c in matched.items()}}
    return _write_json(out / "score.json", payload)


def cmd_sweep(config: SweepRunConfig) -> list[Path]:
    out = Path(config.out)
    kernels = KernelService(cache=KernelCache(config.cache_dir), auto_build=config.auto_kernel, jobs=config.jobs)
    grouping_service = GroupingService(kernel_service=kernels)
    result = sweep(config.grid, config.pipeline, grouping_service=grouping_service, jobs=config.jobs)
    result.write(out)
    outputs = [out / "sweep_long.csv", out / "sweep_summary.csv"]
    write_manifest(out, config, outputs, **result.manifest())
    return outputs


def cmd_score(config: ScoreRunConfig) -> list[Path]:
    out = Path(config.out)
    dataset = LabeledDataset.from_csv(config.dataset, expected_hash=config.dataset_hash)
    labels = ClusterLabels.from_csv(config.labels)
    path = _write_score(out, labels, dataset)
    write_manifest(
        out,
        config,
        [path],
        dataset_hash=dataset.content_hash(),
        labels_hash=sha256_hex(Path(config.labels).read_bytes()),
    )
    return [path]


COMMANDS = {
    "kernel": cmd_kernel,
    "generate": cmd_generate,
    "cluster": cmd_cluster,
    "sweep": cmd_sweep,
    "score": cmd_score,
}


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------
def _add_grouping_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--affinity", choices=[m.value for m in AffinityMode], help="Affinity mode")
    parser.add_argument("--sigma", type=float, help="Gaussian affinity width")
    parser.add_argument("--kappa", type=float, help="Angular diffusion of the kernel process")
    parser.add_argument("--H", type=int, help="Kernel evolution scale")
    parser.add_argument("--alpha0", type=float, help="Velocity diffusion of the contour kernel")
    parser.add_argument("--alphaT", type=float, help="Velocity diffusion of the trajectory kernel")
    parser.add_argument("--N", type=int, help="Paths per kernel")
    parser.add_argument("--v-max", type=float, help="Velocity fiber bound")
    parser.add_argument("--n-theta", type=int, help="Angular bins of the kernel grid")
    parser.add_argument("--eps", type=float, help="Eigenvalue threshold epsilon")
    parser.add_argument("--tau", type=int, help="Diffusion parameter tau")
    parser.add_argument("--M", type=int, help="Minimum cluster size")
    parser.add_argument("--no-auto-kernel", action="store_true", help="Fail instead of estimating missing kernels")
    parser.add_argument("--cache-dir", help="Kernel cache directory")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Root seed of every random stream")
    common.add_argument("--jobs", type=int, help="Worker threads (outputs do not depend on it)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--config", help="JSON run config overriding the flags")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")

    parser = argparse.ArgumentParser(description="Cortical connectivity kernels and perceptual grouping")
    subparsers = parser.add_subparsers(dest="command", required=True)

    kernel = subparsers.add_parser("kernel", parents=[common], help="Estimate and cache a connectivity kernel")
    kernel.add_argument("--process", choices=[k.value for k in ProcessKind], help="Stochastic process")
    kernel.add_argument("--kappa", type=float, help="Angular diffusion")
    kernel.add_argument("--alpha", type=float, help="Velocity diffusion")
    kernel.add_argument("--H", type=int, help="Evolution scale")
    kernel.add_argument("--N", type=int, help="Number of paths")
    kernel.add_argument("--v-max", type=float, help="Velocity fiber bound")
    kernel.add_argument("--n-theta", type=int, help="Angular bins of the kernel grid")
    kernel.add_argument("--marginal", choices=["xy", "xyt", "xytheta"], help="Also write a summed projection")
    kernel.add_argument("--cache-dir", help="Kernel cache directory")

    gen = subparsers.add_parser("generate", parents=[common], help="Generate a stimulus dataset")
    gen.add_argument("--generator", choices=sorted(GENERATORS), help="Stimulus generator")
    gen.add_argument("--param", action="append", metavar="KEY=VALUE", help="Generator parameter (repeatable)")
    gen.add_argument("--velocity-V", type=float, help="Lift to velocities with a sinusoid of amplitude V")

    clu = subparsers.add_parser("cluster", parents=[common], help="Group a dataset")
    clu.add_argument("--dataset", help="Dataset CSV")
    clu.add_argument("--dataset-hash", help="Expected SHA-256 of the dataset CSV")
    _add_grouping_flags(clu)

    swp = subparsers.add_parser("sweep", parents=[common], help="Run a parameter sweep")
    swp.add_argument("--family", help="Stimulus family")
    swp.add_argument("--axis", action="append", metavar="NAME=V1,V2", help="Sweep axis (repeatable)")
    swp.add_argument("--reps", type=int, help="Repetitions per cell")
    swp.add_argument("--stimulus-param", action="append", metavar="KEY=VALUE", help="Stimulus parameter (repeatable)")
    swp.add_argument("--reestimate-kernels", action="store_true", help="Fresh kernel seed per repetition")
    _add_grouping_flags(swp)

    sc = subparsers.add_parser("score", parents=[common], help="Score labels against a dataset's ground truth")
    sc.add_argument("--dataset", help="Dataset CSV")
    sc.add_argument("--labels", help="Labels CSV")
    sc.add_argument("--dataset-hash", help="Expected SHA-256 of the dataset CSV")
    return parser


def _grouping_from_flags(args: argparse.Namespace) -> dict[str, Any]:
    grouping = _drop_none(
        {
            "mode": args.affinity,
            "sigma": args.sigma,
            "kappa": args.kappa,
            "H": args.H,
            "alpha0": args.alpha0,
            "alphaT": args.alphaT,
            "N": args.N,
            "v_max": args.v_max,
            "n_theta": args.n_theta,
        }
    )
    clustering = _drop_none({"epsilon": args.eps, "tau": args.tau, "M": args.M})
    if clustering:
        grouping["clustering"] = {**GroupingConfig().clustering.model_dump(), **clustering}
    return grouping


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """
    Validated run config from parsed flags, overridden by ``--config`` JSON.

    Raises:
        ConfigError: if flags are malformed or the config file cannot be read
        ValidationError: if the merged values are invalid
    """
    values: dict[str, Any] = _drop_none(
        {
            "command": args.command,
            "seed": args.seed,
            "jobs": args.jobs if args.jobs is not None else settings.jobs,
            "out": args.out or str(Path(settings.output_dir) / args.command),
        }
    )
    if args.command == "kernel":
        values.update(
            _drop_none(
                {
                    "process": args.process,
                    "kappa": args.kappa,
                    "alpha": args.alpha,
                    "H": args.H,
                    "N": args.N,
                    "v_max": args.v_max,
                    "n_theta": args.n_theta,
                    "marginal": args.marginal,
                    "cache_dir": args.cache_dir,
                }
            )
        )
    elif args.command == "generate":
        values.update(_drop_none({"generator": args.generator, "velocity_V": args.velocity_V}))
        values["params"] = _parse_pairs(args.param, "--param")
    elif args.command == "cluster":
        grouping = _grouping_from_flags(args)
        values.update(_drop_none({"dataset": args.dataset, "dataset_hash": args.dataset_hash, "cache_dir": args.cache_dir}))
        values["grouping"] = grouping
        values["auto_kernel"] = not args.no_auto_kernel
    elif args.command == "sweep":
        grid = _drop_none({"reps": args.reps})
        grid["axes"] = _parse_axes(args.axis)
        pipeline: dict[str, Any] = _drop_none({"family": args.family})
        pipeline["stimulus"] = _parse_pairs(args.stimulus_param, "--stimulus-param")
        pipeline["grouping"] = _grouping_from_flags(args)
        pipeline["reestimate_kernels"] = args.reestimate_kernels
        values.update(_drop_none({"cache_dir": args.cache_dir}))
        values.update(grid=grid, pipeline=pipeline, auto_kernel=not args.no_auto_kernel)
    elif args.command == "score":
        values.update(_drop_none({"dataset": args.dataset, "labels": args.labels, "dataset_hash": args.dataset_hash}))

    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {args.config}: {e}") from None
        if not isinstance(overrides, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
        values = merge_overrides(values, overrides)
        values["command"] = args.command
    # the root seed reaches kernels and sweeps unless the config pins their own
    if args.command == "cluster":
        values["grouping"].setdefault("kernel_seed", values.get("seed", 0))
    elif args.command == "sweep":
        values["grid"].setdefault("base_seed", values.get("seed", 0))
    return RUN_CONFIGS[args.command].model_validate(values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 when every output was written, 1 on a handled error (``error.json``
        is then written to the output directory)
    """
    args = build_parser().parse_args(argv)
    if args.log_level:
        setup_logger(args.log_level)
    out = Path(args.out or Path(settings.output_dir) / args.command)
    try:
        config = config_from_args(args)
        out = Path(config.out)
        logger.info(f"Running {args.command} into {out}")
        outputs = COMMANDS[args.command](config)
        logger.info(f"{args.command} finished: {len(outputs)} output file(s) in {out}")
        return 0
    except (CorticalError, ValidationError, OSError, ValueError, TypeError) as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        write_error(out, args.command, e)
        return 1
