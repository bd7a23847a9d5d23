"""Reproducible synthetic-data studies: graph recovery and ablations.

These drive the acceptance experiments and the runnable scripts. Every
study is deterministic given its seed list.
"""

from __future__ import annotations

import numpy as np

from . import granger as gr
from . import model as mdl
from . import synth as syn
from . import trainer as tr

RECOVERY_SYNTH = dict(
    n_airports=8,
    hours=2000,
    edge_density=0.15,
    weight_range=(0.5, 0.9),
    lag_range=(1, 2),
    noise_std=1.0,
)

# Fixed recovery protocol: the month-scale graph scored at a stringent
# threshold. Chosen from a scale x significance scan; see the study notes
# in the acceptance suite.
RECOVERY_SCALE = "month"
RECOVERY_SIGNIFICANCE = 1e-12


def f1_score(pred: np.ndarray, truth: np.ndarray) -> float:
    """Directed-edge F1 of a 0/1 prediction against a 0/1 ground truth."""
    pred = np.asarray(pred) > 0
    truth = np.asarray(truth) > 0
    tp = float(np.sum(pred & truth))
    fp = float(np.sum(pred & ~truth))
    fn = float(np.sum(~pred & truth))
    if tp == 0.0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def recovery_study(
    seeds=range(10),
    scale: str = RECOVERY_SCALE,
    significance: float = RECOVERY_SIGNIFICANCE,
    granger_cfg: gr.GrangerConfig | None = None,
    **synth_overrides,
) -> dict:
    """Planted-graph recovery F1 per seed on the reference synthetic config."""
    cfg_kw = dict(RECOVERY_SYNTH)
    cfg_kw.update(synth_overrides)
    gcfg = granger_cfg or gr.GrangerConfig()
    s_idx = gr.SCALES.index(scale)
    rows = []
    for seed in seeds:
        matrix, truth = syn.generate(syn.SynthConfig(seed=seed, **cfg_kw))
        gs = gr.build_graph_set(matrix, matrix.n_hours, gcfg)
        pred = (gs.p_values[s_idx] < significance).astype(float)
        np.fill_diagonal(pred, 0.0)
        rows.append(
            {
                "seed": int(seed),
                "planted_edges": int(truth.adjacency.sum()),
                "recovered_edges": int(pred.sum()),
                "f1": f1_score(pred, truth.adjacency),
            }
        )
    return {
        "scale": scale,
        "significance": significance,
        "rows": rows,
        "median_f1": float(np.median([r["f1"] for r in rows])),
    }


def false_positive_calibration(
    n_pairs: int = 1000, length: int = 200, lag: int = 2, significance: float = 0.05, seed: int = 0
) -> dict:
    """Edge frequency of the pairwise test on independent white noise."""
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_pairs):
        ya = rng.standard_normal(length)
        yb = rng.standard_normal(length)
        _, p = gr.granger_test(ya, yb, lag)
        hits += p < significance
    return {"pairs": n_pairs, "significance": significance, "edge_frequency": hits / n_pairs}


# ---------------------------------------------------------------------------
# ablation-direction study


# Five noisy source airports drive five quiet receivers at lag 2; delays at
# the receivers are mostly inherited, so spatial information is decisive.
ABLATION_SYNTH = dict(
    n_airports=10,
    hours=1440,  # 60 days
    edge_density=0.15,
    weight_range=(0.6, 0.9),
    lag_range=(2, 2),
    daily_amp=2.0,
    weekly_amp=1.0,
    noise_std=(1.5,) * 5 + (0.3,) * 5,
    spike_rate=0.03,
    spike_mag=10.0,
    receivers=5,
)

# Short trailing windows: the precomputed graphs stay deliberately partial
# and per-anchor noisy, which is the regime the learned correction exists
# to compensate.
ABLATION_GRANGER = gr.GrangerConfig(
    window_hours={"day": 24, "week": 48, "month": 96, "year": 168},
    diff_interval={"day": 1, "week": 1, "month": 24, "year": 24},
    refresh_hours=24,
)

ABLATION_MODEL = dict(hidden=16, emb_dim=8, hops=2, enc_steps=2, dec_steps=3)

ABLATION_TRAIN = dict(lr=2e-3, decay=0.6, decay_every=15, epochs=60, batch_size=64, patience=15)


def ablation_study(
    seeds=range(5),
    variants=("full", "NMC", "NC"),
    synth_overrides: dict | None = None,
    model_overrides: dict | None = None,
    train_overrides: dict | None = None,
    granger_cfg: gr.GrangerConfig | None = None,
    log=None,
) -> dict:
    """Train each variant per seed on a fresh synthetic dataset.

    Returns per-variant per-seed test MAE (mean over horizons and per
    horizon) plus the persistence baseline, and the across-seed medians.
    """
    synth_kw = dict(ABLATION_SYNTH)
    synth_kw.update(synth_overrides or {})
    model_kw = dict(ABLATION_MODEL)
    model_kw.update(model_overrides or {})
    train_kw = dict(ABLATION_TRAIN)
    train_kw.update(train_overrides or {})

    results: dict[str, list] = {v: [] for v in variants}
    results["persistence"] = []
    per_h1: dict[str, list] = {v: [] for v in (*variants, "persistence")}
    for seed in seeds:
        matrix, truth = syn.generate(syn.SynthConfig(seed=seed, **synth_kw))
        geo = syn.geo_graph(truth.coords)
        ds = tr.prepare_dataset(
            matrix,
            geo,
            granger_cfg=granger_cfg or ABLATION_GRANGER,
            r=model_kw["enc_steps"],
            horizon=model_kw["dec_steps"],
        )
        model_cfg = mdl.ModelConfig(n_airports=matrix.n_airports, **model_kw)
        tcfg = tr.TrainConfig(seed=seed, **train_kw)
        for variant in variants:
            result, _, _ = tr.ablate(variant, model_cfg, ds, tcfg)
            results[variant].append(float(np.mean(result.mae)))
            per_h1[variant].append(float(result.mae[0]))
            if log is not None:
                log(f"seed {seed} {variant}: mae={np.round(result.mae, 4).tolist()}")
        base = tr.persistence_baseline(ds)
        results["persistence"].append(float(np.mean(base.mae)))
        per_h1["persistence"].append(float(base.mae[0]))
        if log is not None:
            log(f"seed {seed} persistence: mae={np.round(base.mae, 4).tolist()}")
    medians = {k: float(np.median(v)) for k, v in results.items()}
    medians_h1 = {k: float(np.median(v)) for k, v in per_h1.items()}
    return {
        "seeds": [int(s) for s in seeds],
        "variants": list(variants),
        "mean_mae": results,
        "h1_mae": per_h1,
        "median_mean_mae": medians,
        "median_h1_mae": medians_h1,
    }
