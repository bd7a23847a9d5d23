"""Command-line pipeline runner.

Every subcommand is driven by one YAML config file (``--set section.key=value``
overrides individual keys), writes its artifacts into the configured output
directory, and prints a one-line JSON summary to stdout. Runs are
deterministic: the same config and seed produce byte-identical artifacts.

Exit codes: 0 success, 1 failed check, 2 config error, 3 missing file,
4 malformed data, 5 numeric failure.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import yaml

from . import autodiff as ad
from . import granger as gr
from . import ingest as ing
from . import model as mdl
from . import synth as syn
from . import trainer as tr


class ConfigError(ValueError):
    pass


EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5


# ---------------------------------------------------------------------------
# config handling


def default_config() -> dict:
    return {
        "synth": {
            "n_airports": 8,
            "hours": 2000,
            "edge_density": 0.15,
            "weight_range": [0.5, 0.9],
            "lag_range": [1, 2],
            "daily_amp": 2.0,
            "weekly_amp": 1.0,
            "noise_std": 1.0,
            "spike_rate": 0.01,
            "spike_mag": 8.0,
            "receivers": 0,
            "seed": 0,
        },
        "granger": {
            "lag": 2,
            "significance": 0.05,
            "window_hours": {"year": None, "month": 720, "week": 168, "day": 24},
            "diff_interval": {"year": 24, "month": 24, "week": 24, "day": 1},
            "refresh_hours": 24,
        },
        "model": {
            "hidden": 64,
            "emb_dim": 40,
            "hops": 2,
            "enc_steps": 3,
            "dec_steps": 3,
            "alpha": 0.5,
            "beta": 0.5,
            "variant": "full",
            "corr_hops": 1,
            "geo_sigma_d": None,
            "geo_cutoff_km": None,
        },
        "train": {
            "lr": 1e-4,
            "decay": 0.6,
            "decay_every": 5,
            "epochs": 150,
            "batch_size": 64,
            "patience": 15,
            "seed": 0,
        },
        "ingest": {
            "cancel_minutes": 180.0,
            "outlier_quantile": 0.99,
            "apply_outlier_clip": True,
            "fractions": [0.70, 0.15, 0.15],
            "span": None,
        },
        "paths": {
            "out_dir": "runs/default",
            "data_csv": None,
            "mask_csv": None,
            "records_csv": None,
            "truth_json": None,
            "coords_csv": None,
            "checkpoint": None,
        },
    }


def _merge_checked(base: dict, override: dict, trail: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        path = f"{trail}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge_checked(base[key], value, f"{path}.")
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: tuple[str, ...]) -> dict:
    cfg = default_config()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file {path} not found")
        try:
            data = yaml.safe_load(p.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path}: invalid YAML: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config {path}: top level must be a mapping")
        cfg = _merge_checked(cfg, data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"bad --set override {item!r}, expected section.key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        value = yaml.safe_load(raw)
        node = cfg
        for k in keys[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[k]
        if keys[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[keys[-1]] = value
    return cfg


def _synth_cfg(cfg: dict) -> syn.SynthConfig:
    d = cfg["synth"]
    try:
        noise = d["noise_std"]
        if isinstance(noise, (list, tuple)):
            noise = tuple(float(x) for x in noise)
        return syn.SynthConfig(
            n_airports=int(d["n_airports"]),
            hours=int(d["hours"]),
            edge_density=float(d["edge_density"]),
            weight_range=tuple(float(x) for x in d["weight_range"]),
            lag_range=tuple(int(x) for x in d["lag_range"]),
            daily_amp=float(d["daily_amp"]),
            weekly_amp=float(d["weekly_amp"]),
            noise_std=noise,
            spike_rate=float(d["spike_rate"]),
            spike_mag=float(d["spike_mag"]),
            receivers=int(d["receivers"]),
            seed=int(d["seed"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"synth section: {exc}") from None


def _granger_cfg(cfg: dict) -> gr.GrangerConfig:
    d = cfg["granger"]
    try:
        return gr.GrangerConfig(
            lag=int(d["lag"]),
            significance=float(d["significance"]),
            window_hours={k: (None if v is None else int(v)) for k, v in d["window_hours"].items()},
            diff_interval={k: int(v) for k, v in d["diff_interval"].items()},
            refresh_hours=int(d["refresh_hours"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"granger section: {exc}") from None


def _model_cfg(cfg: dict, n_airports: int) -> mdl.ModelConfig:
    d = cfg["model"]
    try:
        return mdl.ModelConfig(
            n_airports=n_airports,
            in_dim=1,
            hidden=int(d["hidden"]),
            emb_dim=int(d["emb_dim"]),
            hops=int(d["hops"]),
            enc_steps=int(d["enc_steps"]),
            dec_steps=int(d["dec_steps"]),
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            variant=str(d["variant"]),
            corr_hops=int(d["corr_hops"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model section: {exc}") from None


def _train_cfg(cfg: dict, seed: int | None = None) -> tr.TrainConfig:
    d = cfg["train"]
    try:
        return tr.TrainConfig(
            lr=float(d["lr"]),
            decay=float(d["decay"]),
            decay_every=int(d["decay_every"]),
            epochs=int(d["epochs"]),
            batch_size=int(d["batch_size"]),
            patience=int(d["patience"]),
            seed=int(d["seed"] if seed is None else seed),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"train section: {exc}") from None


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["paths"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_path(cfg: dict, key: str) -> Path:
    value = cfg["paths"][key]
    if value is None:
        raise ConfigError(f"paths.{key} is required for this command")
    p = Path(value)
    if not p.exists():
        raise FileNotFoundError(f"paths.{key}: {p} not found")
    return p


def _emit(out_dir: Path, summary: dict) -> None:
    text = json.dumps(summary, sort_keys=True)
    (out_dir / "summary.json").write_text(text + "\n")
    click.echo(text)


def _load_matrix(cfg: dict) -> ing.DelayMatrix:
    data = _require_path(cfg, "data_csv")
    mask = cfg["paths"]["mask_csv"]
    if mask is not None and not Path(mask).exists():
        raise FileNotFoundError(f"paths.mask_csv: {mask} not found")
    return ing.read_delay_csv(data, mask)


def _load_coords(cfg: dict, airports: list[str]) -> np.ndarray:
    coords_csv = cfg["paths"]["coords_csv"]
    if coords_csv is not None:
        path = Path(coords_csv)
        if not path.exists():
            raise FileNotFoundError(f"paths.coords_csv: {path} not found")
        table = {}
        with open(path, newline="") as fh:
            import csv as _csv

            reader = _csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["airport", "lat", "lon"]:
                raise ing.IngestError(f"{path}: expected header airport,lat,lon")
            for row in reader:
                if row:
                    table[row[0].strip()] = (float(row[1]), float(row[2]))
        missing = [a for a in airports if a not in table]
        if missing:
            raise ing.IngestError(f"{path}: missing coordinates for {missing}")
        return np.asarray([table[a] for a in airports], dtype=np.float64)
    truth_path = _require_path(cfg, "truth_json")
    t_airports, truth = syn.read_truth(truth_path)
    if t_airports != list(airports):
        raise ing.IngestError(
            f"{truth_path}: airport order does not match the delay matrix header"
        )
    return truth.coords


def _geo(cfg: dict, coords: np.ndarray) -> np.ndarray:
    d = cfg["model"]
    sigma = d["geo_sigma_d"]
    cutoff = d["geo_cutoff_km"]
    return syn.geo_graph(
        coords,
        sigma_d=None if sigma is None else float(sigma),
        cutoff_km=None if cutoff is None else float(cutoff),
    )


def _prepare_dataset(cfg: dict, matrix: ing.DelayMatrix) -> tuple[tr.Dataset, mdl.ModelConfig]:
    model_cfg = _model_cfg(cfg, matrix.n_airports)
    coords = _load_coords(cfg, matrix.airports)
    geo = _geo(cfg, coords)
    fractions = tuple(float(x) for x in cfg["ingest"]["fractions"])
    ds = tr.prepare_dataset(
        matrix,
        geo,
        granger_cfg=_granger_cfg(cfg),
        r=model_cfg.enc_steps,
        horizon=model_cfg.dec_steps,
        fractions=fractions,
    )
    return ds, model_cfg


# ---------------------------------------------------------------------------
# commands


@click.group()
def main() -> None:
    """Causality-graph delay forecasting pipeline."""


def _common(fn):
    fn = click.option("--config", "config_path", type=str, default=None, help="YAML config file.")(fn)
    fn = click.option("--set", "overrides", multiple=True, help="Override section.key=value.")(fn)
    fn = click.option("--out", "out_override", type=str, default=None, help="Output directory.")(fn)
    return fn


def _run(fn, config_path, overrides, out_override, **kwargs):
    try:
        cfg = load_config(config_path, overrides)
        if out_override is not None:
            cfg["paths"]["out_dir"] = out_override
        code = fn(cfg, **kwargs)
        sys.exit(0 if code is None else code)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except FileNotFoundError as exc:
        click.echo(f"missing file: {exc}", err=True)
        sys.exit(EXIT_MISSING)
    except (ing.IngestError, gr.GrangerError, syn.SynthError, mdl.ModelError, json.JSONDecodeError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except (tr.TrainError, FloatingPointError, ZeroDivisionError) as exc:
        click.echo(f"numeric error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@main.command()
def defaults() -> None:
    """Print the full default config as YAML."""
    click.echo(yaml.safe_dump(default_config(), sort_keys=True), nl=False)


@main.command()
@_common
def synth(config_path, overrides, out_override):
    """Generate a synthetic delay dataset with planted propagation."""

    def run(cfg):
        out = _out_dir(cfg)
        scfg = _synth_cfg(cfg)
        matrix, truth = syn.generate(scfg)
        data_path = out / "data.csv"
        ing.write_delay_csv(matrix, data_path, out / "data.mask.csv")
        syn.write_truth(truth, matrix.airports, out / "truth.json")
        with open(out / "coords.csv", "w", newline="") as fh:
            import csv as _csv

            w = _csv.writer(fh)
            w.writerow(["airport", "lat", "lon"])
            for a, (lat, lon) in zip(matrix.airports, truth.coords):
                w.writerow([a, repr(float(lat)), repr(float(lon))])
        _emit(
            out,
            {
                "command": "synth",
                "data_csv": "data.csv",
                "truth_json": "truth.json",
                "n_airports": scfg.n_airports,
                "hours": scfg.hours,
                "planted_edges": int((truth.weights > 0).sum()),
                "seed": scfg.seed,
            },
        )

    _run(run, config_path, overrides, out_override)


@main.command()
@_common
def ingest(config_path, overrides, out_override):
    """Bin departure records into an hourly delay matrix."""

    def run(cfg):
        out = _out_dir(cfg)
        records_path = _require_path(cfg, "records_csv")
        records = ing.read_records_csv(records_path)
        if not records:
            raise ing.IngestError(f"{records_path}: no records")
        span_cfg = cfg["ingest"]["span"]
        if span_cfg is not None:
            start = ing._parse_ts(span_cfg[0])
            end = ing._parse_ts(span_cfg[1])
        else:
            lo = min(r.scheduled for r in records)
            hi = max(r.scheduled for r in records)
            start = lo.replace(minute=0, second=0, microsecond=0)
            end = hi.replace(minute=0, second=0, microsecond=0) + ing.HOUR
        airports = sorted({r.airport for r in records})
        matrix = ing.bin_delays(
            records, airports, (start, end), float(cfg["ingest"]["cancel_minutes"])
        )
        clipped = 0.0
        if cfg["ingest"]["apply_outlier_clip"]:
            matrix, clipped = ing.remove_outliers(matrix, float(cfg["ingest"]["outlier_quantile"]))
        data_path = out / "data.csv"
        ing.write_delay_csv(matrix, data_path, out / "data.mask.csv")
        _emit(
            out,
            {
                "command": "ingest",
                "data_csv": "data.csv",
                "n_airports": matrix.n_airports,
                "hours": matrix.n_hours,
                "clipped_fraction": clipped,
            },
        )

    _run(run, config_path, overrides, out_override)


@main.command()
@_common
def graphs(config_path, overrides, out_override):
    """Build causality graph sets at every refresh anchor."""

    def run(cfg):
        out = _out_dir(cfg)
        matrix = _load_matrix(cfg)
        gcfg = _granger_cfg(cfg)
        anchors, sets = gr.precompute_graph_sets(matrix.values, gcfg)
        gdir = out / "graphs"
        gdir.mkdir(exist_ok=True)
        for gs in sets:
            gr.write_graph_set(gs, matrix.airports, gdir / f"anchor_{gs.anchor:06d}.json")
        edge_counts = [int(s.graphs.sum()) for s in sets]
        _emit(
            out,
            {
                "command": "graphs",
                "graphs_dir": "graphs",
                "n_anchors": len(sets),
                "first_anchor": int(anchors[0]),
                "total_edges": sum(edge_counts),
            },
        )

    _run(run, config_path, overrides, out_override)


@main.command()
@_common
@click.option("--repeats", type=int, default=1, help="Seeded repetitions (seed, seed+1, ...).")
def train(config_path, overrides, out_override, repeats):
    """Train the configured model; write checkpoint, metrics, history."""

    def run(cfg):
        out = _out_dir(cfg)
        matrix = _load_matrix(cfg)
        ds, model_cfg = _prepare_dataset(cfg, matrix)
        base_seed = int(cfg["train"]["seed"])
        results = []
        for k in range(repeats):
            tcfg = _train_cfg(cfg, seed=base_seed + k)
            params, history = tr.train(model_cfg, ds, tcfg)
            suffix = "" if repeats == 1 else f"_seed{tcfg.seed}"
            ckpt = cfg["paths"]["checkpoint"]
            ckpt_path = Path(ckpt) if (ckpt and repeats == 1) else out / f"checkpoint{suffix}.bin"
            mdl.save_checkpoint(ckpt_path, model_cfg, params)
            tr.write_history_csv(out / f"history{suffix}.csv", history)
            results.append(tr.evaluate_split(ds, params, model_cfg, "test", seed=tcfg.seed))
        results.append(tr.persistence_baseline(ds))
        tr.write_metrics_csv(out / "metrics.csv", results)
        _emit(
            out,
            {
                "command": "train",
                "variant": model_cfg.variant,
                "repeats": repeats,
                "test_mae": [float(x) for x in np.round(results[0].mae, 6)],
                "test_rmse": [float(x) for x in np.round(results[0].rmse, 6)],
                "metrics_csv": "metrics.csv",
            },
        )

    _run(run, config_path, overrides, out_override)


@main.command("eval")
@_common
@click.option("--preds-csv", type=str, default=None, help="Predictions matrix CSV.")
@click.option("--truth-csv", type=str, default=None, help="Truth matrix CSV.")
def eval_cmd(config_path, overrides, out_override, preds_csv, truth_csv):
    """Evaluate a checkpoint on the test split, or score a predictions CSV."""

    def run(cfg):
        out = _out_dir(cfg)
        if (preds_csv is None) != (truth_csv is None):
            raise ConfigError("--preds-csv and --truth-csv must be given together")
        if preds_csv is not None:
            pm = ing.read_delay_csv(preds_csv)
            tm = ing.read_delay_csv(truth_csv)
            if pm.airports != tm.airports or pm.n_hours != tm.n_hours:
                raise ing.IngestError("predictions and truth matrices do not align")
            mae, rmse = tr.evaluate(
                pm.values.T[None], tm.values.T[None], tm.mask.T[None]
            )
            result = tr.ForecastResult(
                preds=pm.values.T[None], mae=mae, rmse=rmse, variant="external"
            )
            tr.write_metrics_csv(out / "metrics.csv", [result])
            _emit(
                out,
                {
                    "command": "eval",
                    "mae": [float(x) for x in mae],
                    "rmse": [float(x) for x in rmse],
                    "metrics_csv": "metrics.csv",
                },
            )
            return
        ckpt_path = cfg["paths"]["checkpoint"]
        if ckpt_path is None or not Path(ckpt_path).exists():
            raise FileNotFoundError(f"paths.checkpoint: {ckpt_path} not found")
        model_cfg, params = mdl.load_checkpoint(ckpt_path)
        matrix = _load_matrix(cfg)
        if model_cfg.n_airports != matrix.n_airports:
            raise mdl.ModelError(
                f"checkpoint built for {model_cfg.n_airports} airports, data has {matrix.n_airports}"
            )
        coords = _load_coords(cfg, matrix.airports)
        ds = tr.prepare_dataset(
            matrix,
            _geo(cfg, coords),
            granger_cfg=_granger_cfg(cfg),
            r=model_cfg.enc_steps,
            horizon=model_cfg.dec_steps,
            fractions=tuple(float(x) for x in cfg["ingest"]["fractions"]),
        )
        result = tr.evaluate_split(ds, params, model_cfg, "test")
        baseline = tr.persistence_baseline(ds)
        tr.write_metrics_csv(out / "metrics.csv", [result, baseline])
        _emit(
            out,
            {
                "command": "eval",
                "variant": model_cfg.variant,
                "mae": [float(x) for x in result.mae],
                "rmse": [float(x) for x in result.rmse],
                "persistence_mae": [float(x) for x in baseline.mae],
                "metrics_csv": "metrics.csv",
            },
        )

    _run(run, config_path, overrides, out_override)


@main.command()
@_common
@click.option("--variants", type=str, default="full,NC,NMC,GRU,NF", help="Comma-separated variants.")
@click.option("--repeats", type=int, default=1, help="Seeded repetitions per variant.")
def ablate(config_path, overrides, out_override, variants, repeats):
    """Train ablation variants under identical data, seeds, and schedule."""

    def run(cfg):
        out = _out_dir(cfg)
        wanted = [v.strip() for v in variants.split(",") if v.strip()]
        for v in wanted:
            if v not in mdl.VARIANTS:
                raise ConfigError(f"unknown variant {v!r}, expected subset of {mdl.VARIANTS}")
        matrix = _load_matrix(cfg)
        ds, model_cfg = _prepare_dataset(cfg, matrix)
        base_seed = int(cfg["train"]["seed"])
        results = []
        for variant in wanted:
            for k in range(repeats):
                tcfg = _train_cfg(cfg, seed=base_seed + k)
                result, params, _ = tr.ablate(variant, model_cfg, ds, tcfg)
                mdl.save_checkpoint(
                    out / f"checkpoint_{variant}_seed{tcfg.seed}.bin",
                    replace(model_cfg, variant=variant),
                    params,
                )
                results.append(result)
        results.append(tr.persistence_baseline(ds))
        tr.write_metrics_csv(out / "metrics.csv", results)
        medians = {
            v: float(np.median([np.mean(r.mae) for r in results if r.variant == v]))
            for v in wanted
        }
        _emit(
            out,
            {
                "command": "ablate",
                "variants": wanted,
                "repeats": repeats,
                "median_mae": medians,
                "persistence_mae": [float(x) for x in results[-1].mae],
                "metrics_csv": "metrics.csv",
            },
        )

    _run(run, config_path, overrides, out_override)


@main.command()
@_common
@click.option("--airports", type=int, default=3)
@click.option("--hidden", type=int, default=8)
@click.option("--emb-dim", type=int, default=4)
@click.option("--enc-steps", type=int, default=2)
@click.option("--dec-steps", type=int, default=2)
@click.option("--hops", type=int, default=2)
@click.option("--eps", type=float, default=1e-5)
@click.option("--threshold", type=float, default=1e-4)
@click.option("--seed", type=int, default=0)
def gradcheck(config_path, overrides, out_override, airports, hidden, emb_dim, enc_steps, dec_steps, hops, eps, threshold, seed):
    """Check model gradients against central finite differences."""

    def run(cfg):
        out = _out_dir(cfg)
        variant = str(cfg["model"]["variant"])
        started = time.monotonic()
        result = run_model_gradcheck(
            n_airports=airports,
            hidden=hidden,
            emb_dim=emb_dim,
            enc_steps=enc_steps,
            dec_steps=dec_steps,
            hops=hops,
            eps=eps,
            seed=seed,
            variant=variant,
        )
        elapsed = time.monotonic() - started
        passed = result.max_rel_err < threshold
        _emit(
            out,
            {
                "command": "gradcheck",
                "max_rel_err": result.max_rel_err,
                "checked": result.checked,
                "excluded": result.excluded,
                "threshold": threshold,
                "elapsed_s": round(elapsed, 3),
                "passed": bool(passed),
            },
        )
        return 0 if passed else EXIT_CHECK_FAILED

    _run(run, config_path, overrides, out_override)


def run_model_gradcheck(
    n_airports: int = 3,
    hidden: int = 8,
    emb_dim: int = 4,
    enc_steps: int = 2,
    dec_steps: int = 2,
    hops: int = 2,
    eps: float = 1e-5,
    seed: int = 0,
    variant: str = "full",
) -> ad.GradCheckResult:
    """Finite-difference check of the full forward/backward on a toy sample."""
    cfg = mdl.ModelConfig(
        n_airports=n_airports,
        hidden=hidden,
        emb_dim=emb_dim,
        hops=hops,
        enc_steps=enc_steps,
        dec_steps=dec_steps,
        variant=variant,
    )
    rng = np.random.default_rng(seed)
    n = cfg.n_airports
    x_steps = [rng.standard_normal((1, n, cfg.in_dim)) for _ in range(cfg.enc_steps + 1)]
    stack = (rng.random((len(gr.SCALES), n, n)) < 0.4).astype(np.float64)
    for i in range(len(gr.SCALES)):
        np.fill_diagonal(stack[i], 0.0)
    enc = [stack] * (cfg.enc_steps + 1)
    dec = [stack] * cfg.dec_steps
    coords = np.column_stack([rng.uniform(25, 48, n), rng.uniform(-122, -71, n)])
    geo = syn.geo_graph(coords)
    targets = [rng.standard_normal((1, n, 1)) for _ in range(cfg.dec_steps)]
    params = mdl.init_params(cfg, rng)
    names = sorted(params)

    def f(leaves):
        tp = dict(zip(names, leaves))
        preds = mdl.forward(x_steps, enc, dec, geo, tp, cfg)
        loss = None
        for pred, tgt in zip(preds, targets):
            err = ad.sub(pred, ad.Tensor(tgt))
            s = ad.tsum(ad.mul(err, err))
            loss = s if loss is None else ad.add(loss, s)
        return ad.mul(ad.Tensor(0.5), loss)

    return ad.grad_check(f, [params[k] for k in names], eps=eps)


@main.command()
@_common
def analyze(config_path, overrides, out_override):
    """Correction-distance and adaptive-weight analyses of a checkpoint."""

    def run(cfg):
        out = _out_dir(cfg)
        ckpt_path = cfg["paths"]["checkpoint"]
        if ckpt_path is None or not Path(ckpt_path).exists():
            raise FileNotFoundError(f"paths.checkpoint: {ckpt_path} not found")
        model_cfg, params = mdl.load_checkpoint(ckpt_path)
        matrix = _load_matrix(cfg)
        coords = _load_coords(cfg, matrix.airports)
        ds = tr.prepare_dataset(
            matrix,
            _geo(cfg, coords),
            granger_cfg=_granger_cfg(cfg),
            r=model_cfg.enc_steps,
            horizon=model_cfg.dec_steps,
            fractions=tuple(float(x) for x in cfg["ingest"]["fractions"]),
        )
        c_sets, ca_sets = tr.collect_correction_sets(ds, params, model_cfg, "test")
        distances = tr.analyze_correction(c_sets, ca_sets)
        with open(out / "correction_distances.csv", "w", newline="") as fh:
            import csv as _csv

            w = _csv.writer(fh)
            w.writerow(["scale", "mean_distance"])
            for scale in gr.SCALES:
                w.writerow([scale, repr(float(distances[scale]))])
        scores = tr.report_adaptive_weights(params)
        with open(out / "adaptive_weights.csv", "w", newline="") as fh:
            import csv as _csv

            w = _csv.writer(fh)
            w.writerow(["airport", "score"])
            for a, s in zip(matrix.airports, scores):
                w.writerow([a, repr(float(s))])
        summary = {
            "command": "analyze",
            "correction_distance": {k: distances[k] for k in gr.SCALES},
            "adaptive_weights_csv": "adaptive_weights.csv",
        }
        truth_path = cfg["paths"]["truth_json"]
        if truth_path is not None and Path(truth_path).exists():
            t_airports, truth = syn.read_truth(truth_path)
            if t_airports == matrix.airports:
                from scipy.stats import spearmanr

                rho = spearmanr(scores, truth.susceptibility).statistic
                summary["susceptibility_rank_corr"] = None if np.isnan(rho) else float(rho)
        _emit(out, summary)

    _run(run, config_path, overrides, out_override)


if __name__ == "__main__":
    main()
