"""Synthetic airport-delay networks with a known propagation graph.

Each airport's hourly delay is a daily plus weekly cycle, Gaussian noise,
sparse spikes, and a lagged linear pull from its planted upstream airports,
floored at zero. The linear recursion is rescaled to a companion spectral
radius below 0.95 so the process is stable and graph recovery is
well-posed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .ingest import DelayMatrix

DEFAULT_START = datetime(2024, 1, 1, tzinfo=timezone.utc)

STABLE_RADIUS = 0.95


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_airports: int = 8
    hours: int = 2000
    edge_density: float = 0.15
    weight_range: tuple[float, float] = (0.5, 0.9)
    lag_range: tuple[int, int] = (1, 2)
    daily_amp: float = 2.0
    weekly_amp: float = 1.0
    # Scalar for homogeneous noise, or one std per airport.
    noise_std: float | tuple[float, ...] = 1.0
    spike_rate: float = 0.01
    spike_mag: float = 8.0
    # When > 0, the last `receivers` airports take propagation but emit
    # none: planted edges run source -> receiver only and spikes hit only
    # the sources. Models the big-airport/small-airport asymmetry.
    receivers: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_airports < 2:
            raise SynthError(f"need at least 2 airports, got {self.n_airports}")
        if not 0 <= self.receivers < self.n_airports:
            raise SynthError(
                f"receivers must lie in [0, {self.n_airports - 1}], got {self.receivers}"
            )
        if self.hours < 500:
            raise SynthError(f"need at least 500 hours, got {self.hours}")
        if not 0.0 <= self.edge_density <= 1.0:
            raise SynthError(f"edge density {self.edge_density} outside [0, 1]")
        if self.lag_range[0] < 1 or self.lag_range[1] < self.lag_range[0]:
            raise SynthError(f"bad lag range {self.lag_range}")
        if self.weight_range[0] <= 0 or self.weight_range[1] < self.weight_range[0]:
            raise SynthError(f"bad weight range {self.weight_range}")
        for name in ("daily_amp", "weekly_amp", "spike_rate", "spike_mag"):
            if getattr(self, name) < 0:
                raise SynthError(f"{name} must be >= 0")
        stds = np.atleast_1d(np.asarray(self.noise_std, dtype=np.float64))
        if (stds < 0).any():
            raise SynthError("noise_std must be >= 0")
        if stds.size not in (1, self.n_airports):
            raise SynthError(
                f"noise_std needs 1 or {self.n_airports} entries, got {stds.size}"
            )


@dataclass
class GroundTruth:
    """Planted graph: weights[i, j] is the pull of airport j on airport i."""

    weights: np.ndarray  # (N, N), zero diagonal
    lags: np.ndarray  # (N, N) int, 0 where no edge
    susceptibility: np.ndarray  # (N,) inbound weight sums
    coords: np.ndarray  # (N, 2) lat/lon degrees

    @property
    def adjacency(self) -> np.ndarray:
        return (self.weights > 0).astype(np.float64)


def _companion_radius(weights: np.ndarray, lags: np.ndarray, max_lag: int) -> float:
    """Spectral radius of the stacked-lag companion matrix."""
    n = weights.shape[0]
    if max_lag == 0 or not weights.any():
        return 0.0
    comp = np.zeros((n * max_lag, n * max_lag))
    for tau in range(1, max_lag + 1):
        block = np.where(lags == tau, weights, 0.0)
        comp[:n, (tau - 1) * n : tau * n] = block
    if max_lag > 1:
        comp[n:, : n * (max_lag - 1)] = np.eye(n * (max_lag - 1))
    return float(np.abs(np.linalg.eigvals(comp)).max())


def generate(cfg: SynthConfig) -> tuple[DelayMatrix, GroundTruth]:
    """Deterministic (per seed) delay matrix plus its planted ground truth."""
    rng = np.random.default_rng(cfg.seed)
    n, T = cfg.n_airports, cfg.hours

    # Planted directed edges, no self loops.
    if cfg.receivers > 0:
        sources = range(n - cfg.receivers)
        sinks = range(n - cfg.receivers, n)
        candidates = [(i, j) for i in sinks for j in sources]
        m_edges = min(len(candidates), int(round(cfg.edge_density * n * (n - 1))))
        adj = np.zeros((n, n), dtype=bool)
        for k in rng.choice(len(candidates), size=m_edges, replace=False):
            adj[candidates[k]] = True
    else:
        adj = rng.random((n, n)) < cfg.edge_density
        np.fill_diagonal(adj, False)
    weights = np.where(adj, rng.uniform(*cfg.weight_range, size=(n, n)), 0.0)
    lags = np.where(adj, rng.integers(cfg.lag_range[0], cfg.lag_range[1] + 1, size=(n, n)), 0)
    max_lag = int(lags.max()) if adj.any() else 0

    radius = _companion_radius(weights, lags, max_lag)
    if radius >= STABLE_RADIUS:
        # Shrink all edge weights together until the companion radius sits
        # just under the stability bound (radius is monotone in the scale).
        lo, hi = 0.0, 1.0
        target = STABLE_RADIUS * 0.98
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _companion_radius(weights * mid, lags, max_lag) < target:
                lo = mid
            else:
                hi = mid
        weights = weights * lo
        radius = _companion_radius(weights, lags, max_lag)
    if radius >= 1.0:
        raise SynthError(f"unstable planted recursion, companion radius {radius:.4f}")

    hours = np.arange(T)
    phase_d = rng.uniform(0.0, 24.0, size=n)
    phase_w = rng.uniform(0.0, 168.0, size=n)
    # Cycles kept nonnegative so their mean acts as the base delay level.
    signal = cfg.daily_amp * 0.5 * (1.0 + np.sin(2.0 * np.pi * (hours[None, :] + phase_d[:, None]) / 24.0))
    signal += cfg.weekly_amp * 0.5 * (1.0 + np.sin(2.0 * np.pi * (hours[None, :] + phase_w[:, None]) / 168.0))

    stds = np.broadcast_to(np.atleast_1d(np.asarray(cfg.noise_std, dtype=np.float64)), (n,))
    noise = rng.standard_normal((n, T)) * stds[:, None]
    spikes = np.zeros((n, T))
    if cfg.spike_rate > 0 and cfg.spike_mag > 0:
        hits = rng.random((n, T)) < cfg.spike_rate
        spikes = np.where(hits, cfg.spike_mag * rng.exponential(1.0, size=(n, T)), 0.0)
        if cfg.receivers > 0:
            spikes[n - cfg.receivers :] = 0.0

    values = np.zeros((n, T))
    lag_list = [(i, j, weights[i, j], int(lags[i, j])) for i, j in zip(*np.nonzero(weights))]
    for t in range(T):
        y = signal[:, t] + noise[:, t] + spikes[:, t]
        for i, j, w, tau in lag_list:
            if t - tau >= 0:
                y[i] += w * values[j, t - tau]
        values[:, t] = np.maximum(y, 0.0)

    coords = np.column_stack([rng.uniform(25.0, 48.0, size=n), rng.uniform(-122.0, -71.0, size=n)])
    truth = GroundTruth(
        weights=weights,
        lags=lags.astype(np.int64),
        susceptibility=weights.sum(axis=1),
        coords=coords,
    )
    matrix = DelayMatrix(
        airports=[f"A{i:02d}" for i in range(n)],
        start=DEFAULT_START,
        values=values,
        mask=np.ones((n, T), dtype=bool),
    )
    return matrix, truth


# ---------------------------------------------------------------------------
# geographic graph


EARTH_RADIUS_KM = 6371.0088


def great_circle_km(lat1, lon1, lat2, lon2) -> float:
    """Haversine distance in kilometres."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return float(2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h)))


def geo_graph(
    coords: np.ndarray,
    sigma_d: float | None = None,
    cutoff_km: float | None = None,
) -> np.ndarray:
    """Gaussian-kernel distance graph: A_ij = exp(-d_ij^2 / sigma_d^2).

    ``sigma_d`` defaults to the standard deviation of all pairwise
    distances; pairs beyond ``cutoff_km`` (when given) get weight 0. The
    result is symmetric with zero diagonal and entries in [0, 1].
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n < 2:
        raise SynthError(f"geo_graph: need at least 2 coordinates, got {n}")
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = great_circle_km(*coords[i], *coords[j])
    if sigma_d is None:
        off = d[np.triu_indices(n, k=1)]
        sigma_d = float(off.std())
        if sigma_d == 0.0:
            sigma_d = 1.0
    a = np.exp(-(d**2) / (sigma_d**2))
    if cutoff_km is not None:
        a = np.where(d <= cutoff_km, a, 0.0)
    np.fill_diagonal(a, 0.0)
    return a


# ---------------------------------------------------------------------------
# ground-truth export


def truth_to_json(truth: GroundTruth, airports: list[str]) -> str:
    edges = [
        [airports[j], airports[i], truth.weights[i, j], int(truth.lags[i, j])]
        for i, j in zip(*np.nonzero(truth.weights))
    ]
    payload = {
        "airports": list(airports),
        "edges": sorted(edges),
        "susceptibility": truth.susceptibility.tolist(),
        "coords": truth.coords.tolist(),
    }
    return json.dumps(payload, sort_keys=True)


def write_truth(truth: GroundTruth, airports: list[str], path: str | Path) -> None:
    Path(path).write_text(truth_to_json(truth, airports) + "\n")


def read_truth(path: str | Path) -> tuple[list[str], GroundTruth]:
    payload = json.loads(Path(path).read_text())
    airports = list(payload["airports"])
    index = {a: i for i, a in enumerate(airports)}
    n = len(airports)
    weights = np.zeros((n, n))
    lags = np.zeros((n, n), dtype=np.int64)
    for src, dst, w, tau in payload["edges"]:
        weights[index[dst], index[src]] = float(w)
        lags[index[dst], index[src]] = int(tau)
    return airports, GroundTruth(
        weights=weights,
        lags=lags,
        susceptibility=np.asarray(payload["susceptibility"], dtype=np.float64),
        coords=np.asarray(payload["coords"], dtype=np.float64),
    )
