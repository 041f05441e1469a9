"""Command-line entry point: validate, train, predict, experiment, synth, stats.

Every command reads one flat config file (plus `--set key=value` overrides),
writes its artifacts under `<outdir>/<run-id>/` next to a manifest.json, and
is deterministic given the config and input bytes: the run id is a content
hash, nothing embeds a timestamp, so reruns are byte-identical.

Exit codes: 0 success, 2 configuration or data error, 3 runtime or protocol
error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .data import (
    AdoptionMatrix,
    DataFormatError,
    EmptyDataError,
    NetworkStack,
    adoption_lines,
    dataset_stats,
    network_edge_lines,
    popularity_counts,
)
from .experiments import Dataset, LeakError, run_experiment
from .model import ModelParams
from .predict import score_app
from .solver import SolverError, fit_mle
from .synth import gen_networks, planted_params, sample_adoptions_teacher

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(problems: list[str], code: int) -> int:
    for p in problems:
        print(f"error: {p}", file=sys.stderr)
    return code


def _build_dataset(cfg: RunConfig) -> Dataset:
    """Dataset from config; any loading problem is a configuration error."""
    try:
        return cfg.build_dataset()
    except ConfigError:
        raise
    except (OSError, ValueError) as e:
        raise ConfigError([str(e)]) from e


def _input_hashes(cfg: RunConfig) -> dict[str, dict[str, str]]:
    out = {}
    for key, path in sorted(cfg.input_paths().items()):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        out[key] = {"path": str(path), "sha256": digest}
    return out


def _emit(
    cfg: RunConfig,
    command: str,
    files: dict[str, str],
    extra: dict | None = None,
) -> Path:
    """Write artifacts plus manifest under a content-addressed run directory."""
    inputs = _input_hashes(cfg)
    payload = json.dumps(
        {"command": command, "config": sorted(cfg.entries.items()), "inputs": inputs},
        sort_keys=True,
    )
    run_id = hashlib.sha256(payload.encode()).hexdigest()[:12]
    run_dir = cfg.outdir / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (run_dir / name).write_text(files[name])
    manifest = {
        "run_id": run_id,
        "command": command,
        "version": __version__,
        "config": dict(sorted(cfg.entries.items())),
        "inputs": inputs,
        "root_seed": cfg.seed,
        "outputs": sorted(files),
        **(extra or {}),
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return run_dir


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig, jobs: int) -> int:
    adoptions: AdoptionMatrix | None = None
    try:
        networks = cfg.build_networks() if cfg.network_indices() else ()
        if "adoptions.path" in cfg.entries:
            adoptions = cfg.build_adoptions()
        if networks and adoptions is not None:
            Dataset(networks=NetworkStack(networks=networks), adoptions=adoptions)
    except ConfigError as e:
        return _fail(e.problems, EXIT_CONFIG)
    except (OSError, ValueError) as e:
        return _fail([str(e)], EXIT_CONFIG)
    print(f"config ok: {len(networks)} network(s)")
    if adoptions is None:
        print("no adoption file referenced")
    elif not adoptions.installed.any():
        print("adoptions: no installs recorded")
    else:
        print(dataset_stats(adoptions).to_json())
    return EXIT_OK


def cmd_train(cfg: RunConfig, jobs: int) -> int:
    data = _build_dataset(cfg)
    fit_cfg = cfg.fit_config()
    use_pop = cfg.get_bool("experiment.use_popularity", True)
    pop = popularity_counts(data.adoptions) if use_pop else None
    stack = NetworkStack(networks=data.networks.networks, popularity=pop)
    apps = cfg.app_list("train.apps", data.adoptions.num_apps)
    params, result = fit_mle(stack, data.adoptions, apps, fit_cfg)
    run_dir = _emit(
        cfg,
        "train",
        {
            "params.json": params.to_json() + "\n",
            "convergence.json": result.to_json() + "\n",
        },
    )
    print(
        f"iterations={result.iterations} converged={result.converged}"
        f" objective={result.final_objective!r}"
    )
    print(f"wrote {run_dir}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, jobs: int) -> int:
    data = _build_dataset(cfg)
    cfg.require("predict.params")
    try:
        params = ModelParams.from_json(cfg.resolve_path("predict.params").read_text())
    except (OSError, ValueError) as e:
        raise ConfigError([f"predict.params: {e}"]) from e
    if params.num_users != data.adoptions.num_users:
        raise ConfigError(["predict.params: user count does not match the data"])
    if params.num_networks != data.networks.num_networks:
        raise ConfigError(["predict.params: network count does not match the data"])
    use_pop = cfg.get_bool("experiment.use_popularity", True)
    pop = popularity_counts(data.adoptions) if use_pop else None
    stack = NetworkStack(networks=data.networks.networks, popularity=pop)
    apps = cfg.app_list("predict.apps", data.adoptions.num_apps)
    rows = ["app_id,user_id,score,evaluated"]
    for app in apps:
        a = int(app)
        c = float(pop[a]) if pop is not None else 0.0
        sheet = score_app(params, stack, data.adoptions.installed[:, a], c, app_id=a)
        rows += sheet.csv_rows()
    run_dir = _emit(cfg, "predict", {"sheets.csv": "\n".join(rows) + "\n"})
    print(f"scored {apps.size} app(s)")
    print(f"wrote {run_dir}")
    return EXIT_OK


def _summary_csv(report) -> str:
    """One wide row per series: config plus its mean metrics."""
    metric_names: list[str] = []
    means = {}
    for s in report.series:
        means[s.name] = s.mean_metrics()
        metric_names += [m for m in means[s.name] if m not in metric_names]
    rows = ["config," + ",".join(metric_names)]
    for s in report.series:
        cells = [
            repr(means[s.name][m]) if m in means[s.name] else "" for m in metric_names
        ]
        rows.append(s.name + "," + ",".join(cells))
    return "\n".join(rows) + "\n"


def cmd_experiment(cfg: RunConfig, jobs: int) -> int:
    data = _build_dataset(cfg)
    spec = cfg.experiment_spec()
    report = run_experiment(data, spec)
    run_dir = _emit(
        cfg,
        "experiment",
        {
            "report.json": report.to_json() + "\n",
            "report.csv": "\n".join(report.csv_rows()) + "\n",
            "summary.csv": _summary_csv(report),
        },
        extra={"jobs": jobs},
    )
    for s in report.series:
        mean = s.mean_metrics()
        shown = {
            k: v
            for k, v in mean.items()
            if k == "rmse" or k.startswith("mp@") or k == "optimal_f1"
        }
        print(s.name + ": " + " ".join(f"{k}={v:.4f}" for k, v in shown.items()))
    print(f"wrote {run_dir}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, jobs: int) -> int:
    spec = cfg.synth_spec()
    stack = gen_networks(spec)
    params = planted_params(spec)
    teacher = sample_adoptions_teacher(stack, params, spec)
    files = {
        f"network{m}.csv": "\n".join(network_edge_lines(g)) + "\n"
        for m, g in enumerate(stack.networks)
    }
    files["adoptions.csv"] = "\n".join(adoption_lines(teacher.adoptions)) + "\n"
    files["planted.json"] = (
        json.dumps(
            {"spec": asdict(spec), "params": json.loads(params.to_json())},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    run_dir = _emit(cfg, "synth", files)
    print(f"wrote {len(files)} dataset file(s) to {run_dir}")
    return EXIT_OK


def cmd_stats(cfg: RunConfig, jobs: int) -> int:
    try:
        adoptions = cfg.build_adoptions()
        stats = dataset_stats(adoptions)
    except ConfigError:
        raise
    except (OSError, ValueError) as e:
        raise ConfigError([str(e)]) from e
    text = stats.to_json()
    run_dir = _emit(cfg, "stats", {"stats.json": text + "\n"})
    print(text)
    print(f"wrote {run_dir}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "train": cmd_train,
    "predict": cmd_predict,
    "experiment": cmd_experiment,
    "synth": cmd_synth,
    "stats": cmd_stats,
}

HELP = {
    "validate": "check config schema and load every referenced data file",
    "train": "fit the composite-network model, write params + convergence",
    "predict": "score apps with previously fitted parameters",
    "experiment": "run an evaluation protocol and write its reports",
    "synth": "generate a synthetic dataset bundle with planted parameters",
    "stats": "print adoption-count statistics for a dataset",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adoptnet",
        description="composite social-network adoption model runner",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler_help in HELP.items():
        p = sub.add_parser(name, help=handler_help)
        p.add_argument("config", type=Path, help="flat key=value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="KEY=VALUE",
            help="override one config entry (repeatable)",
        )
        p.add_argument(
            "--jobs",
            type=int,
            default=1,
            help="upper bound on worker parallelism (orchestration is serial)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError(["--jobs must be at least 1"])
        cfg = load_config(args.config, args.overrides)
    except ConfigError as e:
        return _fail(e.problems, EXIT_CONFIG)
    try:
        return COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as e:
        return _fail(e.problems, EXIT_CONFIG)
    except (DataFormatError, EmptyDataError, OSError) as e:
        return _fail([str(e)], EXIT_CONFIG)
    except (SolverError, LeakError, FloatingPointError, ValueError, KeyError) as e:
        return _fail([str(e)], EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
