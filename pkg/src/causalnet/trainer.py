"""Training loop, metrics, ablations, and post-hoc analyses.

The loss is mean absolute error in standardized space over every decoded
horizon, with never-scheduled hours excluded through the mask. Reported
metrics are in de-standardized minutes. Runs are bit-reproducible for a
fixed seed: parameter init, batch order, and every reduction follow a
fixed order drawn from seeded generators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .autodiff import Tensor
from .granger import SCALES, GrangerConfig, precompute_graph_sets
from .ingest import DelayMatrix, SplitWindows, split_windows, zscore_apply, zscore_fit, zscore_invert


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    decay: float = 0.6
    decay_every: int = 5
    epochs: int = 150
    batch_size: int = 64
    patience: int = 15
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise TrainError(f"lr must be >= 0, got {self.lr}")
        for name in ("decay", "decay_every", "epochs", "batch_size", "patience"):
            if getattr(self, name) <= 0:
                raise TrainError(f"{name} must be positive, got {getattr(self, name)}")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay ** (epoch // self.decay_every)


@dataclass
class ForecastResult:
    """Per-horizon predictions in minutes plus their evaluation metrics."""

    preds: np.ndarray  # (horizon, samples, N) minutes
    mae: np.ndarray  # (horizon,)
    rmse: np.ndarray  # (horizon,)
    variant: str = "full"
    seed: int = 0

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.preds)):
            raise TrainError("forecast contains non-finite predictions")
        if np.any(self.rmse < self.mae - 1e-9):
            raise TrainError(f"RMSE {self.rmse} below MAE {self.mae}")


# ---------------------------------------------------------------------------
# Adam


def adam_init(params: dict[str, np.ndarray]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place, over every key of grads."""
    state["step"] += 1
    t = state["step"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in grads:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainError(f"non-finite gradient for parameter {name!r}")
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# dataset assembly


@dataclass
class Dataset:
    """Standardized series, split anchors, and precomputed graph sets."""

    matrix: DelayMatrix
    std_values: np.ndarray  # (N, T), masked hours imputed as 0
    zparams: object
    splits: SplitWindows
    graph_anchors: np.ndarray
    graph_stack: np.ndarray  # (n_anchors, 4, N, N)
    geo: np.ndarray  # (N, N) raw weights

    @property
    def n_airports(self) -> int:
        return self.matrix.n_airports


def prepare_dataset(
    matrix: DelayMatrix,
    geo: np.ndarray,
    granger_cfg: GrangerConfig | None = None,
    r: int = 3,
    horizon: int = 3,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
) -> Dataset:
    """Standardize, window, and precompute causality graphs for training.

    Z-score statistics come from the training hours only. Graph sets are
    built from the raw (pre-standardization) series on trailing windows, so
    no sample ever sees information from after its own anchor. Samples
    whose earliest encoder step precedes the first graph anchor are
    dropped.
    """
    gcfg = granger_cfg or GrangerConfig()
    splits = split_windows(matrix, fractions, r, horizon)
    train_end = splits.bounds[1]
    zp = zscore_fit(matrix.slice_hours(0, train_end))
    std = np.where(matrix.mask, zscore_apply(zp, matrix.values), 0.0)
    anchors, sets = precompute_graph_sets(matrix.values, gcfg)
    stack = np.stack([s.graphs for s in sets])
    first = int(anchors[0])
    return Dataset(
        matrix=matrix,
        std_values=std,
        zparams=zp,
        splits=replace(
            splits,
            train=splits.train[splits.train - r >= first],
            val=splits.val[splits.val - r >= first],
            test=splits.test[splits.test - r >= first],
        ),
        graph_anchors=anchors,
        graph_stack=stack,
        geo=np.asarray(geo, dtype=np.float64),
    )


def _gather(ds: Dataset, ts: np.ndarray, r: int, horizon: int):
    """Batch arrays for sample anchors ts: inputs, graph stacks, targets."""
    x_steps = []
    enc_stacks = []
    for i in range(r + 1):
        hours = ts - r + i
        x_steps.append(ds.std_values[:, hours].T[:, :, None])
        idx = np.searchsorted(ds.graph_anchors, hours, side="right") - 1
        enc_stacks.append(ds.graph_stack[idx])
    dec_idx = np.searchsorted(ds.graph_anchors, ts, side="right") - 1
    dec_stack = ds.graph_stack[dec_idx]
    dec_stacks = [dec_stack] * horizon
    tgt_std = np.stack([ds.std_values[:, ts + j].T for j in range(1, horizon + 1)])
    tgt_min = np.stack([ds.matrix.values[:, ts + j].T for j in range(1, horizon + 1)])
    tgt_mask = np.stack([ds.matrix.mask[:, ts + j].T for j in range(1, horizon + 1)])
    return x_steps, enc_stacks, dec_stacks, tgt_std, tgt_min, tgt_mask


def _batch_loss(preds: list[Tensor], tgt_std: np.ndarray, tgt_mask: np.ndarray) -> Tensor:
    """Masked MAE over all horizons, in standardized units."""
    count = float(tgt_mask.sum())
    if count == 0:
        raise TrainError("batch has no unmasked target entries")
    total = None
    for j, pred in enumerate(preds):
        err = ad.tabs(ad.sub(pred, Tensor(tgt_std[j][:, :, None])))
        masked = ad.mul(err, Tensor(tgt_mask[j][:, :, None].astype(np.float64)))
        s = ad.tsum(masked)
        total = s if total is None else ad.add(total, s)
    return ad.div(total, Tensor(count))


# ---------------------------------------------------------------------------
# training


def train(
    model_cfg: mdl.ModelConfig,
    ds: Dataset,
    cfg: TrainConfig,
    log=None,
) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Train on ds.splits.train, select the best epoch on validation MAE.

    Returns (best parameters, history rows). History rows carry epoch,
    train_loss (standardized), val_mae (minutes, mean over horizons), lr.
    """
    r, horizon = ds.splits.r, ds.splits.horizon
    if model_cfg.enc_steps != r or model_cfg.dec_steps != horizon:
        raise TrainError(
            f"model steps ({model_cfg.enc_steps}, {model_cfg.dec_steps}) "
            f"do not match dataset windows ({r}, {horizon})"
        )
    if ds.splits.train.size == 0 or ds.splits.val.size == 0:
        raise TrainError("empty train or validation split")
    params = mdl.init_params(model_cfg, np.random.default_rng([cfg.seed, 0]))
    batch_rng = np.random.default_rng([cfg.seed, 1])
    trainable = mdl.trainable_names(model_cfg)
    state = adam_init({k: params[k] for k in trainable})
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = batch_rng.permutation(ds.splits.train)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, order.size, cfg.batch_size):
            ts = order[lo : lo + cfg.batch_size]
            x_steps, enc, dec, tgt_std, _, tgt_mask = _gather(ds, ts, r, horizon)
            tape = ad.Tape()
            tp = mdl.params_to_tensors(params, tape)
            preds = mdl.forward(x_steps, enc, dec, ds.geo, tp, model_cfg)
            loss = _batch_loss(preds, tgt_std, tgt_mask)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainError(f"non-finite loss at epoch {epoch}, batch {n_batches}")
            grads = ad.backward(loss)
            gmap = {}
            for name in trainable:
                g = grads.get(tp[name])
                if g is not None:
                    gmap[name] = g
            adam_step(params, gmap, state, lr)
            epoch_loss += value
            n_batches += 1
        val_mae = float(np.mean(evaluate_split(ds, params, model_cfg, "val").mae))
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(1, n_batches),
                "val_mae": val_mae,
                "lr": lr,
            }
        )
        if log is not None:
            log(history[-1])
        if val_mae < best_val - 1e-12:
            best_val = val_mae
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_params, history


# ---------------------------------------------------------------------------
# evaluation


def evaluate(
    preds: np.ndarray, truth: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-horizon MAE and RMSE over unmasked entries (minute units).

    All arrays are (horizon, ...); the metric for horizon j pools every
    unmasked entry of slice j, so the result is invariant to sample order.
    """
    preds = np.asarray(preds, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if preds.shape != truth.shape or preds.shape != mask.shape:
        raise TrainError(f"shape mismatch: preds {preds.shape}, truth {truth.shape}, mask {mask.shape}")
    mae = []
    rmse = []
    for j in range(preds.shape[0]):
        sel = mask[j]
        if not sel.any():
            raise TrainError(f"horizon {j + 1}: empty mask")
        err = preds[j][sel] - truth[j][sel]
        mae.append(float(np.abs(err).mean()))
        rmse.append(float(np.sqrt((err**2).mean())))
    return np.asarray(mae), np.asarray(rmse)


def predict_split(
    ds: Dataset,
    params: dict[str, np.ndarray],
    model_cfg: mdl.ModelConfig,
    which: str = "test",
    batch_size: int = 256,
    record_corrections: list | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """De-standardized predictions, truths, and masks for one split."""
    anchors = getattr(ds.splits, which)
    if anchors.size == 0:
        raise TrainError(f"split {which!r} has no samples")
    r, horizon = ds.splits.r, ds.splits.horizon
    tp = mdl.params_to_tensors(params, None)
    preds = []
    truths = []
    masks = []
    for lo in range(0, anchors.size, batch_size):
        ts = anchors[lo : lo + batch_size]
        x_steps, enc, dec, _, tgt_min, tgt_mask = _gather(ds, ts, r, horizon)
        out = mdl.forward(
            x_steps, enc, dec, ds.geo, tp, model_cfg, record_corrections=record_corrections
        )
        preds.append(zscore_invert(ds.zparams, mdl.predictions_to_array(out)))
        truths.append(tgt_min)
        masks.append(tgt_mask)
    return (
        np.concatenate(preds, axis=1),
        np.concatenate(truths, axis=1),
        np.concatenate(masks, axis=1),
    )


def evaluate_split(
    ds: Dataset,
    params: dict[str, np.ndarray],
    model_cfg: mdl.ModelConfig,
    which: str = "test",
    variant: str | None = None,
    seed: int = 0,
) -> ForecastResult:
    preds, truth, mask = predict_split(ds, params, model_cfg, which)
    mae, rmse = evaluate(preds, truth, mask)
    return ForecastResult(
        preds=preds, mae=mae, rmse=rmse, variant=variant or model_cfg.variant, seed=seed
    )


def persistence_baseline(ds: Dataset, which: str = "test") -> ForecastResult:
    """Repeat the last observed value for every horizon step."""
    anchors = getattr(ds.splits, which)
    if anchors.size == 0:
        raise TrainError(f"split {which!r} has no samples")
    horizon = ds.splits.horizon
    last = ds.matrix.values[:, anchors].T  # (samples, N) minutes
    preds = np.stack([last] * horizon)
    truth = np.stack([ds.matrix.values[:, anchors + j].T for j in range(1, horizon + 1)])
    mask = np.stack([ds.matrix.mask[:, anchors + j].T for j in range(1, horizon + 1)])
    mae, rmse = evaluate(preds, truth, mask)
    return ForecastResult(preds=preds, mae=mae, rmse=rmse, variant="persistence")


# ---------------------------------------------------------------------------
# ablation


def ablate(
    variant: str,
    model_cfg: mdl.ModelConfig,
    ds: Dataset,
    train_cfg: TrainConfig,
    log=None,
) -> tuple[ForecastResult, dict[str, np.ndarray], list[dict]]:
    """Train and test one variant with everything else held fixed."""
    cfg = replace(model_cfg, variant=variant)
    params, history = train(cfg, ds, train_cfg, log=log)
    result = evaluate_split(ds, params, cfg, "test", variant=variant, seed=train_cfg.seed)
    return result, params, history


# ---------------------------------------------------------------------------
# analyses


def analyze_correction(c_sets, ca_sets) -> dict[str, float]:
    """Per-scale mean Frobenius distance between corrected and raw graphs.

    ``c_sets`` and ``ca_sets`` are matched sequences of (4, N, N) arrays
    (scale order as in granger.SCALES).
    """
    c_sets = [np.asarray(c, dtype=np.float64) for c in c_sets]
    ca_sets = [np.asarray(c, dtype=np.float64) for c in ca_sets]
    if len(c_sets) != len(ca_sets) or not c_sets:
        raise TrainError("analyze_correction: need matched, nonempty graph collections")
    out = {}
    for s_idx, scale in enumerate(SCALES):
        dists = [
            float(np.linalg.norm(ca[s_idx] - c[s_idx])) for c, ca in zip(c_sets, ca_sets)
        ]
        out[scale] = float(np.mean(dists))
    return out


def collect_correction_sets(
    ds: Dataset,
    params: dict[str, np.ndarray],
    model_cfg: mdl.ModelConfig,
    which: str = "test",
    batch_size: int = 256,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Raw and corrected graph stacks from replaying a split's encoder."""
    recorded: list = []
    predict_split(ds, params, model_cfg, which, batch_size, record_corrections=recorded)
    c_sets = []
    ca_sets = []
    for c_stack, ca_stack in recorded:
        for b in range(c_stack.shape[0]):
            c_sets.append(c_stack[b])
            ca_sets.append(ca_stack[b])
    return c_sets, ca_sets


def report_adaptive_weights(params: dict[str, np.ndarray]) -> np.ndarray:
    """Per-airport susceptibility score: channel mean of the causal fusion
    weights. Higher values mark airports whose hidden state leans more on
    propagated (inbound) information."""
    return np.asarray(params["fit_causal"], dtype=np.float64).mean(axis=1)


# ---------------------------------------------------------------------------
# CSV artifacts


def write_metrics_csv(path: str | Path, results: list[ForecastResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["horizon", "mae", "rmse", "variant", "seed"])
        for res in results:
            for j in range(res.mae.size):
                w.writerow(
                    [j + 1, repr(float(res.mae[j])), repr(float(res.rmse[j])), res.variant, res.seed]
                )


def write_history_csv(path: str | Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_mae", "lr"])
        for row in history:
            w.writerow(
                [
                    row["epoch"],
                    repr(float(row["train_loss"])),
                    repr(float(row["val_mae"])),
                    repr(float(row["lr"])),
                ]
            )
