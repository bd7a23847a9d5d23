"""Self-corrective causal graph network with K-hop fusion and gated cells.

Forward structure per encoder step: the binary causality graphs are first
passed through a learned correction that adds a nonnegative mask derived
from the current delays and hidden state; the corrected graphs and a fixed
geographic graph then drive a two-way K-hop graph convolution inside each
gate of a recurrent cell. A decoder reuses the cell with zero inputs to
roll the hidden state forward and a linear head emits one delay per
airport per horizon step.

Tensors may carry a leading batch axis. The four per-scale graphs travel
as one stacked (batch, 4, N, N) tensor; per-scale kernels are stacked
(4, F, F) parameters applied through one batched matrix product, which
keeps the op count (and tape length) small.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .granger import SCALES

VARIANTS = ("full", "NC", "NMC", "GRU", "NF")

LGRU_GATES = ("reset", "update", "out", "cand")
GRU_GATES = ("reset", "update", "cand")
DIRECTIONS = ("fwd", "rev")

N_SCALES = len(SCALES)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_airports: int
    in_dim: int = 1
    hidden: int = 64
    emb_dim: int = 40
    hops: int = 2
    enc_steps: int = 3  # past steps fed to the encoder (inputs = enc_steps + 1)
    dec_steps: int = 3
    alpha: float = 0.5
    beta: float = 0.5
    variant: str = "full"
    corr_hops: int = 1

    def __post_init__(self) -> None:
        for name in ("n_airports", "in_dim", "hidden", "emb_dim", "hops", "dec_steps", "corr_hops"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.enc_steps < 0:
            raise ModelError(f"enc_steps must be >= 0, got {self.enc_steps}")
        if self.alpha < 0 or self.beta < 0:
            raise ModelError("alpha and beta must be >= 0")
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")

    @property
    def cat_dim(self) -> int:
        """Width of the concatenated (features || hidden) cell input."""
        return self.in_dim + self.hidden

    @property
    def gates(self) -> tuple[str, ...]:
        return GRU_GATES if self.variant == "GRU" else LGRU_GATES


# ---------------------------------------------------------------------------
# parameters


def param_spec(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    """Name -> (shape, init) for every parameter, in a fixed order.

    init is one of "kaiming" (fan-in scaled normal), "ones", "zeros".
    Per-scale kernels and scale weights are stored stacked along a leading
    axis of length 4 (scale order as in granger.SCALES).
    """
    n, f, w, e = cfg.n_airports, cfg.cat_dim, cfg.hidden, cfg.emb_dim
    spec: dict[str, tuple[tuple[int, ...], str]] = {}
    spec["corr_proj_w"] = ((f, e), "kaiming")
    spec["corr_proj_b"] = ((e,), "zeros")
    spec["emb_a"] = ((n, e), "kaiming")
    spec["emb_b"] = ((n, e), "kaiming")
    spec["corr_gcn"] = ((N_SCALES, f, f), "kaiming")
    for gate in cfg.gates:
        for d in DIRECTIONS:
            spec[f"{gate}_{d}_theta_scales"] = ((N_SCALES, f, f), "kaiming")
            spec[f"{gate}_{d}_theta_geo"] = ((f, f), "kaiming")
            spec[f"{gate}_{d}_w_in"] = ((), "ones")
            spec[f"{gate}_{d}_w_scales"] = ((N_SCALES, 1, 1), "ones")
            spec[f"{gate}_{d}_w_geo"] = ((), "ones")
            for k in range(1, cfg.hops + 1):
                spec[f"{gate}_{d}_hop{k}_out"] = ((f, w), "kaiming")
    spec["fit_causal"] = ((n, f), "ones")
    spec["fit_geo"] = ((n, f), "ones")
    spec["out_w"] = ((w, 1), "kaiming")
    spec["out_b"] = ((1,), "zeros")
    return spec


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    # Kaiming-uniform in its framework-default form (a = sqrt(5), bound =
    # 1/sqrt(fan_in)). The gates sum six unit-weighted branches per hop, so
    # a larger gain saturates every gate at initialization.
    params = {}
    for name, (shape, kind) in param_spec(cfg).items():
        if kind == "ones":
            params[name] = np.ones(shape)
        elif kind == "zeros":
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[-2] if len(shape) >= 2 else max(shape)
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def trainable_names(cfg: ModelConfig) -> list[str]:
    names = list(param_spec(cfg))
    if cfg.variant == "NF":
        names = [n for n in names if n not in ("fit_causal", "fit_geo")]
    return names


def params_to_tensors(
    params: dict[str, np.ndarray], tape: ad.Tape | None
) -> dict[str, Tensor]:
    if tape is None:
        return {k: Tensor(v) for k, v in params.items()}
    return {k: tape.tensor(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# graph normalization


def normalize_adj(ca: Tensor) -> Tensor:
    """Row-stochastic self-looped normalization D^-1 (CA + I).

    D is diagonal with 1 + row sums of CA, so every output row sums to 1
    for any nonnegative CA (CA = 0 gives exactly the identity). Works on
    any (..., N, N) stack.
    """
    n = ca.shape[-1]
    eye = np.eye(n)
    denom = ad.add(ad.tsum(ca, axis=-1, keepdims=True), Tensor(1.0))
    return ad.div(ad.add(ca, Tensor(eye)), denom)


def normalize_geo(a: np.ndarray) -> np.ndarray:
    """Row-normalized geographic graph; all-zero rows stay zero."""
    a = np.asarray(a, dtype=np.float64)
    rs = a.sum(axis=-1, keepdims=True)
    return np.divide(a, rs, out=np.zeros_like(a), where=rs > 0)


def _normalize_const(c: np.ndarray) -> np.ndarray:
    eye = np.eye(c.shape[-1])
    denom = 1.0 + c.sum(axis=-1, keepdims=True)
    return (c + eye) / denom


# ---------------------------------------------------------------------------
# self-causal correction


def correction_mask(rho1: Tensor, rho2: Tensor) -> Tensor:
    """relu(tanh(rho1 rho2^T - rho2 rho1^T)).

    The pre-activation is antisymmetric, so the mask is nonnegative with
    at most one direction surviving per pair (CM ⊙ CM^T = 0) and an exactly
    zero diagonal; equal comparison matrices give an exactly zero mask.
    """
    fwd = ad.matmul(rho1, ad.transpose_last2(rho2))
    rev = ad.matmul(rho2, ad.transpose_last2(rho1))
    return ad.relu(ad.tanh(ad.sub(fwd, rev)))


def _as_graph_stack(c_stack) -> np.ndarray:
    arr = np.asarray(c_stack.data if isinstance(c_stack, Tensor) else c_stack, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != N_SCALES:
        raise ModelError(f"expected a (batch, {N_SCALES}, N, N) graph stack, got {arr.shape}")
    return arr


def self_causal_correction(
    x: Tensor,
    h_prev: Tensor,
    c_stack,
    params: dict[str, Tensor],
    cfg: ModelConfig,
) -> Tensor:
    """Corrected graphs CA = C + CM, stacked (batch, 4, N, N).

    Per scale, node information is mixed as alpha * (x || h) plus beta
    times a graph convolution of it over that scale's graph, projected to
    the embedding width, compared through the two node embeddings, and
    turned into a nonnegative correction mask.
    """
    c_arr = _as_graph_stack(c_stack)
    z = ad.concat([x, h_prev], axis=-1)  # (B, N, F)
    z4 = ad.reshape(z, (z.shape[0], 1, z.shape[1], z.shape[2]))
    c_norm = Tensor(_normalize_const(c_arr))
    prop = z4
    for _ in range(cfg.corr_hops):
        prop = ad.matmul(ad.matmul(c_norm, prop), params["corr_gcn"])
    hc = ad.add(ad.mul(Tensor(cfg.alpha), z4), ad.mul(Tensor(cfg.beta), prop))
    proj = ad.affine(hc, params["corr_proj_w"], params["corr_proj_b"])  # (B, 4, N, E)
    rho1 = ad.tanh(ad.mul(proj, params["emb_a"]))
    rho2 = ad.tanh(ad.mul(proj, params["emb_b"]))
    return ad.add(Tensor(c_arr), correction_mask(rho1, rho2))


# ---------------------------------------------------------------------------
# K-hop two-way graph convolution


class GraphContext:
    """Normalized causal and geographic operators shared by the cell gates."""

    __slots__ = ("ca_norm", "ca_norm_t", "a_norm", "a_norm_t")

    def __init__(self, ca_norm: Tensor, a_norm: np.ndarray):
        self.ca_norm = ca_norm
        self.ca_norm_t = ad.transpose_last2(ca_norm)
        self.a_norm = Tensor(a_norm)
        self.a_norm_t = Tensor(np.swapaxes(a_norm, -1, -2))


def build_context(ca: Tensor, a: np.ndarray) -> GraphContext:
    return GraphContext(normalize_adj(ca), normalize_geo(a))


def _khop_apply(
    ctx: GraphContext, h_in: Tensor, params: dict[str, Tensor], gate: str, cfg: ModelConfig
) -> Tensor:
    """Two-way K-hop pass: run once over the normalized operators and once
    over their transposes, each hop fusing the causal and geographic images
    through the shared adaptive weights, and sum per-hop linear readouts."""
    b, n, f = h_in.shape
    total = None
    for d, ca_op, a_op in (
        ("fwd", ctx.ca_norm, ctx.a_norm),
        ("rev", ctx.ca_norm_t, ctx.a_norm_t),
    ):
        p = f"{gate}_{d}"
        theta_s = params[f"{p}_theta_scales"]
        w_scales = params[f"{p}_w_scales"]
        h = h_in
        out_d = None
        for k in range(1, cfg.hops + 1):
            h4 = ad.reshape(h, (b, 1, n, f))
            prop = ad.matmul(ad.matmul(ca_op, h4), theta_s)  # (B, 4, N, F)
            fc = ad.add(
                ad.mul(params[f"{p}_w_in"], h_in),
                ad.tsum(ad.mul(w_scales, prop), axis=1),
            )
            fa = ad.mul(
                params[f"{p}_w_geo"],
                ad.matmul(ad.matmul(a_op, h), params[f"{p}_theta_geo"]),
            )
            h = ad.add(ad.mul(params["fit_causal"], fc), ad.mul(params["fit_geo"], fa))
            contrib = ad.matmul(h, params[f"{p}_hop{k}_out"])
            out_d = contrib if out_d is None else ad.add(out_d, contrib)
        total = out_d if total is None else ad.add(total, out_d)
    return total


def khop_gcn(
    h_in: Tensor,
    ca,
    a: np.ndarray,
    params: dict[str, Tensor],
    gate: str,
    cfg: ModelConfig,
) -> Tensor:
    """Public entry: ``ca`` is a raw corrected-graph stack (Tensor or array,
    (batch, 4, N, N) or (4, N, N)); normalization happens inside."""
    if not isinstance(ca, Tensor):
        ca = Tensor(_as_graph_stack(ca))
    elif ca.ndim == 3:
        ca = ad.reshape(ca, (1, *ca.shape))
    return _khop_apply(build_context(ca, a), h_in, params, gate, cfg)


# ---------------------------------------------------------------------------
# recurrent cells


def _lgru_step(
    x: Tensor, h_prev: Tensor, ctx: GraphContext, params: dict[str, Tensor], cfg: ModelConfig
) -> Tensor:
    z = ad.concat([x, h_prev], axis=-1)
    re = ad.sigmoid(_khop_apply(ctx, z, params, "reset", cfg))
    up = ad.sigmoid(_khop_apply(ctx, z, params, "update", cfg))
    o = ad.sigmoid(_khop_apply(ctx, z, params, "out", cfg))
    lm = ad.tanh(_khop_apply(ctx, z, params, "cand", cfg))
    return ad.mul(o, ad.tanh(ad.add(ad.mul(up, h_prev), ad.mul(re, lm))))


def _gru_step(
    x: Tensor, h_prev: Tensor, ctx: GraphContext, params: dict[str, Tensor], cfg: ModelConfig
) -> Tensor:
    z_cat = ad.concat([x, h_prev], axis=-1)
    r = ad.sigmoid(_khop_apply(ctx, z_cat, params, "reset", cfg))
    z = ad.sigmoid(_khop_apply(ctx, z_cat, params, "update", cfg))
    cand_in = ad.concat([x, ad.mul(r, h_prev)], axis=-1)
    h_tilde = ad.tanh(_khop_apply(ctx, cand_in, params, "cand", cfg))
    return ad.add(ad.mul(z, h_prev), ad.mul(ad.sub(Tensor(1.0), z), h_tilde))


def _coerce_ca(ca) -> Tensor:
    if isinstance(ca, Tensor):
        return ad.reshape(ca, (1, *ca.shape)) if ca.ndim == 3 else ca
    return Tensor(_as_graph_stack(ca))


def lgru_cell(
    x: Tensor,
    h_prev: Tensor,
    ca,
    a: np.ndarray,
    params: dict[str, Tensor],
    cfg: ModelConfig,
) -> Tensor:
    """One recurrent update; every entry of the result lies in (-1, 1)."""
    return _lgru_step(x, h_prev, build_context(_coerce_ca(ca), a), params, cfg)


def gru_cell(
    x: Tensor,
    h_prev: Tensor,
    ca,
    a: np.ndarray,
    params: dict[str, Tensor],
    cfg: ModelConfig,
) -> Tensor:
    return _gru_step(x, h_prev, build_context(_coerce_ca(ca), a), params, cfg)


# ---------------------------------------------------------------------------
# encoder-decoder forward


def _as_batch(x, in_dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != in_dim:
        raise ModelError(f"expected (batch, N, {in_dim}) features, got {arr.shape}")
    return arr


def _step_graphs(
    x: Tensor, h: Tensor, c_stack, params: dict[str, Tensor], cfg: ModelConfig
) -> Tensor:
    """Corrected (or variant-substituted) causal graphs for one cell step."""
    c_arr = _as_graph_stack(c_stack)
    if cfg.variant == "NC":
        return Tensor(np.zeros_like(c_arr))
    if cfg.variant == "NMC":
        return Tensor(c_arr)
    return self_causal_correction(x, h, c_arr, params, cfg)


def forward(
    x_steps,
    enc_graphs,
    dec_graphs,
    a: np.ndarray,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    record_corrections: list | None = None,
) -> list[Tensor]:
    """Predict dec_steps future delay fields from enc_steps + 1 past ones.

    ``x_steps``: sequence of enc_steps + 1 feature arrays (batch, N, in_dim).
    ``enc_graphs`` / ``dec_graphs``: per-step graph stacks (batch, 4, N, N)
    (or (4, N, N), broadcast over the batch). The decoder feeds all-zero
    features and reuses the supplied historical graph stacks. Returns one
    (batch, N, 1) tensor per decoded step.

    When ``record_corrections`` is a list, every encoder step appends a
    pair (raw graph stack, corrected graph stack), both (batch, 4, N, N).
    """
    if len(x_steps) != cfg.enc_steps + 1:
        raise ModelError(f"expected {cfg.enc_steps + 1} encoder inputs, got {len(x_steps)}")
    if len(enc_graphs) != cfg.enc_steps + 1:
        raise ModelError(
            f"missing encoder graph sets: expected {cfg.enc_steps + 1}, got {len(enc_graphs)}"
        )
    if len(dec_graphs) != cfg.dec_steps:
        raise ModelError(
            f"missing decoder graph sets: expected {cfg.dec_steps}, got {len(dec_graphs)}"
        )
    step = _gru_step if cfg.variant == "GRU" else _lgru_step
    xs = [_as_batch(x, cfg.in_dim) for x in x_steps]
    batch = xs[0].shape[0]
    h = Tensor(np.zeros((batch, cfg.n_airports, cfg.hidden)))
    for x_arr, c_stack in zip(xs, enc_graphs):
        x = Tensor(x_arr)
        ca = _step_graphs(x, h, c_stack, params, cfg)
        if record_corrections is not None:
            raw = _as_graph_stack(c_stack)
            if raw.shape[0] != batch:
                raw = np.broadcast_to(raw, (batch, *raw.shape[1:]))
            record_corrections.append((raw, ca.data))
        h = step(x, h, build_context(ca, a), params, cfg)
    preds = []
    zero_x = Tensor(np.zeros((batch, cfg.n_airports, cfg.in_dim)))
    for c_stack in dec_graphs:
        ca = _step_graphs(zero_x, h, c_stack, params, cfg)
        h = step(zero_x, h, build_context(ca, a), params, cfg)
        preds.append(ad.affine(h, params["out_w"], params["out_b"]))
    return preds


def predictions_to_array(preds: list[Tensor]) -> np.ndarray:
    """(dec_steps, batch, N) array from the forward output."""
    return np.stack([p.data[..., 0] for p in preds], axis=0)


# ---------------------------------------------------------------------------
# checkpoint io

_MAGIC = b"CNCK1\n"


def save_checkpoint(path: str | Path, cfg: ModelConfig, params: dict[str, np.ndarray]) -> None:
    """Single-file checkpoint: JSON header + little-endian float64 blobs."""
    names = sorted(params)
    header = {
        "config": asdict(cfg),
        "params": [{"name": k, "shape": list(params[k].shape)} for k in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in names:
            fh.write(np.ascontiguousarray(params[k], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ModelError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        cfg = ModelConfig(**header["config"])
        expected = param_spec(cfg)
        params = {}
        for entry in header["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in expected:
                raise ModelError(f"{path}: unknown parameter {name!r} for this config")
            if shape != expected[name][0]:
                raise ModelError(
                    f"{path}: parameter {name!r} has shape {shape}, config implies {expected[name][0]}"
                )
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ModelError(f"{path}: truncated data for parameter {name!r}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        missing = set(expected) - set(params)
        if missing:
            raise ModelError(f"{path}: missing parameters {sorted(missing)}")
    return cfg, params
