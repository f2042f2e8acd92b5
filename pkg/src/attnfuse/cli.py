"""Command-line entry point: ``attnfuse synth | ingest-check | label | eval | report``.

Every command that writes an output directory also leaves a ``run.json``
manifest there with the tool version, the effective configuration, content
hashes of the inputs, timestamps and the written paths.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import jsonschema

from . import __version__
from ._files import atomic_write_text, digest, dump_json, tree_hashes
from .errors import AttnFuseError, InvalidParams
from .fusion import DEFAULT_SWEEP_MODULES, enumerate_combinations, parse_subset, subset_key
from .ingest import ModuleId, load_sessions, session_integrity_report
from .protocol import THRESHOLD_MODES, ExperimentConfig, run_experiment, write_results
from .synthgen import PRESETS, generate_sessions, preset, write_sessions
from .windowing import LabeledDataset, WindowLabeler

log = logging.getLogger("attnfuse")

MANIFEST = "run.json"

_number = {"type": "number"}
_integer = {"type": "integer"}
_string = {"type": "string"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": _integer,
        "synth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(PRESETS)},
                "users": _integer,
                "duration": _integer,
                "seed": _integer,
                "out": _string,
            },
        },
        "ingest_check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"data": _string, "fps": _integer, "out": _string},
        },
        "label": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "data": _string,
                "low": _number,
                "high": _number,
                "window": _integer,
                "min_valid": _number,
                "threshold_source": {"enum": ["window_means", "raw"]},
                "fps": _integer,
                "out": _string,
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dataset": _string,
                "subsets": _string,
                "include_hd": {"type": "boolean"},
                "threshold_mode": {"enum": list(THRESHOLD_MODES)},
                "seed": _integer,
                "inner_folds": _integer,
                "loss": {"enum": ["squared_hinge", "hinge"]},
                "save_models": {"type": "boolean"},
                "out": _string,
            },
        },
        "report": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"results": _string},
        },
    },
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _input_hashes(paths) -> dict:
    hashes = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            hashes[str(p)] = digest({k: v for k, v in tree_hashes(p).items() if Path(k).name != MANIFEST})
        else:
            hashes[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()
    return hashes


def write_manifest(out_dir, command: str, config: dict, inputs=(), started: str | None = None) -> dict:
    """Write ``run.json``; flag the run as a reproduction when a previous
    manifest recorded the same command, config and input hashes."""
    out = Path(out_dir)
    path = out / MANIFEST
    hashes = _input_hashes(inputs)
    outputs = sorted(k for k in tree_hashes(out) if k != MANIFEST)
    manifest = {
        "tool": "attnfuse",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": hashes,
        "outputs": outputs,
        "output_digest": digest({k: v for k, v in tree_hashes(out).items() if k != MANIFEST}),
        "started": started or _now(),
        "finished": _now(),
        "reproduction": False,
    }
    if path.exists():
        try:
            prev = json.loads(path.read_text())
        except (OSError, ValueError):
            prev = {}
        same = all(prev.get(k) == manifest[k] for k in ("command", "config", "inputs"))
        if same:
            manifest["reproduction"] = True
            manifest["reproduces"] = prev.get("started")
            manifest["identical_outputs"] = prev.get("output_digest") == manifest["output_digest"]
    atomic_write_text(path, dump_json(manifest))
    return manifest


def expand_subsets(spec: str, available=None, include_hd: bool = False) -> list[str]:
    """Parse ``"eb;eb+hp;all"`` into canonical subset keys (deduplicated, in order)."""
    sweep = list(DEFAULT_SWEEP_MODULES) + ([ModuleId.HD] if include_hd else [])
    if available is not None:
        sweep = [m for m in sweep if m in set(available)]
    keys = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if part.lower() == "all":
            new = [subset_key(c) for c in enumerate_combinations(sweep)]
        else:
            new = [subset_key(parse_subset(part))]
        keys.extend(k for k in new if k not in keys)
    if not keys:
        raise ValueError("no module subsets given")
    return keys


def _echo(ctx, msg=""):
    if not ctx.find_root().obj.get("quiet"):
        click.echo(msg)


def _fail(err: Exception, code: str):
    click.echo(json.dumps({"error": code, "type": type(err).__name__, "message": str(err)}), err=True)
    sys.exit(1)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AttnFuseError as e:
            _fail(e, e.code)
        except OSError as e:
            _fail(e, "io_error")
        except ValueError as e:
            _fail(e, "invalid_input")


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON config file; command-line flags override it.")
@click.option("--seed", type=int, default=None, help="Seed applied to every command unless the command's own --seed is given.")
@click.option("--quiet", is_flag=True, help="Suppress tables and progress output.")
@click.version_option(__version__, prog_name="attnfuse")
@click.pass_context
def main(ctx, config_path, seed, quiet):
    """Attention-level estimation from face-analysis feature streams."""
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(message)s")
    if quiet:
        logging.getLogger().setLevel(logging.WARNING)
    cfg = {}
    if config_path:
        try:
            cfg = json.loads(Path(config_path).read_text())
            jsonschema.validate(cfg, CONFIG_SCHEMA)
        except ValueError as e:
            raise click.BadParameter(f"not valid JSON: {e}", param_hint="--config") from None
        except jsonschema.ValidationError as e:
            raise click.BadParameter(f"config does not match schema: {e.message}", param_hint="--config") from None
    default_map = {}
    global_seed = seed if seed is not None else cfg.get("seed")
    for cmd in ("synth", "ingest_check", "label", "eval", "report"):
        section = dict(cfg.get(cmd, {}))
        if global_seed is not None and cmd in ("synth", "eval") and (seed is not None or "seed" not in section):
            section["seed"] = global_seed
        default_map[cmd.replace("_", "-")] = section
    ctx.default_map = default_map
    ctx.obj = {"quiet": quiet, "config": cfg}


@main.command()
@click.option("--preset", "preset_name", type=click.Choice(sorted(PRESETS)), default="easy", show_default=True, help="Coupling preset.")
@click.option("--users", type=int, default=6, show_default=True, help="Number of synthetic users.")
@click.option("--duration", type=int, default=600, show_default=True, help="Session length in seconds.")
@click.option("--seed", type=int, default=0, show_default=True, help="Generator seed.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory receiving one folder per user.")
@click.pass_context
def synth(ctx, preset_name, users, duration, seed, out):
    """Generate synthetic sessions with planted attention couplings."""
    started = _now()
    params = preset(preset_name, n_users=users, duration_seconds=duration, seed=seed)
    paths = write_sessions(generate_sessions(params), out)
    config = {"preset": preset_name, "users": users, "duration": duration, "seed": seed}
    write_manifest(out, "synth", config, started=started)
    _echo(ctx, f"wrote {len(paths)} sessions to {out}")


@main.command("ingest-check")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, help="Directory of session folders.")
@click.option("--fps", type=int, default=30, show_default=True, help="Frame rate of the feature streams.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the report as JSON.")
@click.pass_context
def ingest_check(ctx, data, fps, out):
    """Parse every session and report per-module integrity."""
    sessions = load_sessions(data, fps)
    if not sessions:
        raise InvalidParams(f"no session folders with attention.csv under {data}")
    report = {s.user_id: session_integrity_report(s) for s in sessions}
    if out:
        atomic_write_text(out, dump_json(report))
    for uid, r in report.items():
        mods = " ".join(f"{m}:{v['valid_fraction']:.3f}" for m, v in sorted(r["modules"].items()))
        _echo(ctx, f"{uid}  {r['duration_seconds']}s  valid {mods}  gaps {len(r['attention_gaps'])}")


@main.command()
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, help="Directory of session folders.")
@click.option("--low", type=float, default=10.0, show_default=True, help="Low-attention percentile p_L.")
@click.option("--high", type=float, default=90.0, show_default=True, help="High-attention percentile p_H.")
@click.option("--window", type=int, default=60, show_default=True, help="Window length in seconds.")
@click.option("--min-valid", type=float, default=0.8, show_default=True, help="Minimum fraction of valid frames per window.")
@click.option(
    "--threshold-source",
    type=click.Choice(["window_means", "raw"]),
    default="window_means",
    show_default=True,
    help="Pool used for the percentiles.",
)
@click.option("--fps", type=int, default=30, show_default=True, help="Frame rate of the feature streams.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output dataset directory.")
@click.pass_context
def label(ctx, data, low, high, window, min_valid, threshold_source, fps, out):
    """Window sessions and label them High/Low by attention percentiles."""
    started = _now()
    sessions = load_sessions(data, fps)
    if not sessions:
        raise InvalidParams(f"no session folders with attention.csv under {data}")
    labeler = WindowLabeler(low, high, window, None, min_valid, threshold_source)
    ds = labeler.fit_transform(sessions)
    ds.save(out)
    config = {
        "low": low,
        "high": high,
        "window": window,
        "min_valid": min_valid,
        "threshold_source": threshold_source,
        "fps": fps,
    }
    write_manifest(out, "label", config, inputs=[data], started=started)
    c = ds.counts
    _echo(ctx, f"thresholds  tau_L={ds.thresholds.tau_L:.4f}  tau_H={ds.thresholds.tau_H:.4f}")
    _echo(ctx, f"total={c['candidate']} high={c['high']} low={c['low']} excluded={c['excluded']}")
    if c.get("undefined") or c.get("low_validity"):
        _echo(ctx, f"dropped: undefined={c.get('undefined', 0)} low_validity={c.get('low_validity', 0)}")


def _table(rows, calibrated: bool) -> str:
    head = f"{'subset':<24} | {'max_acc':>7} | {'1-EER':>7}"
    if calibrated:
        head += f" | {'acc@0.5':>7}"
    lines = [head, "-" * len(head)]
    size = None
    for r in rows:
        if size is not None and r.size != size:
            lines.append("")
        size = r.size
        line = f"{r.subset:<24} | {r.max_acc:7.4f} | {r.acc_at_eer:7.4f}"
        if calibrated:
            line += f" | {r.calibrated['accuracy']:7.4f}"
        lines.append(line)
    return "\n".join(lines)


@main.command("eval")
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True, help="Labeled dataset directory.")
@click.option(
    "--subsets",
    default="eb;eb+hp;eb+expr+hp;all",
    show_default=True,
    help="Module subsets: ids joined by '+', separated by ';'; 'all' expands to every combination.",
)
@click.option("--include-hd", is_flag=True, help="Let 'all' include head-distance features.")
@click.option(
    "--threshold-mode",
    type=click.Choice(THRESHOLD_MODES),
    default="pooled_test",
    show_default=True,
    help="Headline operating point: thresholds chosen on pooled test scores, or fixed 0.5 from calibration.",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the run.")
@click.option("--inner-folds", type=int, default=3, show_default=True, help="Inner folds used to choose C.")
@click.option("--loss", type=click.Choice(["squared_hinge", "hinge"]), default="squared_hinge", show_default=True, help="SVM loss.")
@click.option("--save-models/--no-save-models", default=True, show_default=True, help="Write per-fold model JSON.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Results directory.")
@click.pass_context
def eval_(ctx, dataset, subsets, include_hd, threshold_mode, seed, inner_folds, loss, save_models, out):
    """Leave-one-user-out evaluation of monomodal and fused subsets."""
    started = _now()
    meta = json.loads((Path(dataset) / "manifest.json").read_text())
    available = [ModuleId.parse(m) for m in meta.get("modules", [m.value for m in ModuleId])]
    try:
        keys = expand_subsets(subsets, available, include_hd)
    except ValueError as e:
        raise click.UsageError(f"--subsets: {e}") from None
    config = ExperimentConfig(subsets=keys, threshold_mode=threshold_mode, seed=seed, inner_folds=inner_folds, loss=loss)
    missing = [m.value for m in config.modules if m not in available]
    if missing:
        valid = ", ".join(m.value for m in available)
        raise click.UsageError(f"--subsets: dataset has no features for {missing}; valid ids: {valid}")
    ds = LabeledDataset.load(dataset, modules=config.modules)
    config.p_L, config.p_H = ds.thresholds.p_L, ds.thresholds.p_H
    config.window_seconds, config.fps = ds.window_seconds, ds.fps
    result = run_experiment(config, ds)
    write_results(result, out, save_models=save_models)
    write_manifest(out, "eval", config.to_json(), inputs=[dataset], started=started)
    _echo(ctx, _table(result.rows(), threshold_mode == "train_calibrated"))


@main.command()
@click.option("--results", type=click.Path(exists=True, file_okay=False), required=True, help="Directory written by eval.")
@click.pass_context
def report(ctx, results):
    """Print the results table of a finished eval run."""
    data = json.loads((Path(results) / "report.json").read_text())
    subsets = data["subsets"]
    calibrated = data.get("threshold_mode") == "train_calibrated"

    class _Row:
        def __init__(self, d):
            self.subset = d["subset"]
            self.size = len(d["modules"])
            self.max_acc = d["max_acc"]
            self.acc_at_eer = d["acc_at_eer"]
            self.calibrated = d["train_calibrated"]

    rows = [_Row(subsets[k]) for k in data["table"]]
    _echo(ctx, _table(rows, calibrated))
    ds = data.get("dataset", {})
    _echo(ctx, f"\n{ds.get('n_samples')} samples ({ds.get('n_high')} high / {ds.get('n_low')} low), {len(ds.get('users', []))} users")


if __name__ == "__main__":  # pragma: no cover
    main()
