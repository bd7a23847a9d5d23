"""Multi-scale delay-causality graphs from pairwise Granger tests.

For an ordered airport pair (source b, target a) over a trailing window,
both series are differenced to tame non-stationarity, then two lagged
least-squares regressions of the target are compared: one on its own lags
only, one adding the source's lags. The F statistic on the residual drop
gives a p-value; an edge b -> a is drawn when p falls under the
significance level. Four windows (day / week / month / year) yield four
graphs per anchor time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

SCALES = ("year", "month", "week", "day")

DEFAULT_WINDOW_HOURS: dict[str, int | None] = {
    "day": 24,
    "week": 168,
    "month": 720,
    "year": None,  # None = all available history
}

# Differencing step per scale: the day window takes plain first differences;
# longer windows difference at 24 hours to cancel the daily cycle.
DEFAULT_DIFF_INTERVAL: dict[str, int] = {"day": 1, "week": 24, "month": 24, "year": 24}


class GrangerError(ValueError):
    pass


@dataclass(frozen=True)
class GrangerConfig:
    lag: int = 2
    significance: float = 0.05
    window_hours: dict[str, int | None] = field(default_factory=lambda: dict(DEFAULT_WINDOW_HOURS))
    diff_interval: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_DIFF_INTERVAL))
    refresh_hours: int = 24  # rebuild cadence; steps in between reuse the last set

    def __post_init__(self) -> None:
        if self.lag < 1:
            raise GrangerError(f"lag must be >= 1, got {self.lag}")
        if not 0.0 < self.significance < 1.0:
            raise GrangerError(f"significance {self.significance} outside (0, 1)")
        if self.refresh_hours < 1:
            raise GrangerError(f"refresh_hours must be >= 1, got {self.refresh_hours}")
        for scale in SCALES:
            if scale not in self.window_hours or scale not in self.diff_interval:
                raise GrangerError(f"missing window or differencing interval for scale {scale!r}")
            win = self.window_hours[scale]
            interval = self.diff_interval[scale]
            if interval < 1:
                raise GrangerError(f"{scale}: differencing interval must be >= 1")
            if win is not None and win - interval < 2 * self.lag + 10:
                raise GrangerError(
                    f"{scale}: window of {win}h leaves fewer than {2 * self.lag + 10} "
                    f"observations after differencing at interval {interval}"
                )

    def min_anchor(self) -> int:
        """Earliest hour at which every scale's test is feasible.

        A window longer than the available history falls back to all of it,
        so the binding constraints are the full shortest window plus, per
        scale, enough post-differencing observations for the regressions.
        """
        shortest = min(w for w in self.window_hours.values() if w is not None)
        need = max(self.diff_interval[s] + 2 * self.lag + 10 for s in SCALES)
        return max(shortest, need)


@dataclass
class CausalGraphSet:
    """Binary causality graphs at the four time scales for one anchor hour.

    Entry (a, b) of a graph is 1 when the test found b -> a; diagonals are
    always 0, and an entry is 1 exactly when its p-value is below the
    configured significance.
    """

    anchor: int
    scales: tuple[str, ...]
    graphs: np.ndarray  # (4, N, N) float64 in {0, 1}
    p_values: np.ndarray  # (4, N, N)

    def scale_graph(self, scale: str) -> np.ndarray:
        return self.graphs[self.scales.index(scale)]


# ---------------------------------------------------------------------------
# building blocks


def difference(series: np.ndarray, interval: int) -> np.ndarray:
    """out[k] = series[k + interval] - series[k]."""
    series = np.asarray(series, dtype=np.float64)
    if interval < 1:
        raise GrangerError(f"difference: interval must be >= 1, got {interval}")
    if series.size <= interval:
        raise GrangerError(
            f"difference: series of length {series.size} too short for interval {interval}"
        )
    return series[interval:] - series[:-interval]


def ols_rss(y: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Least-squares fit of y on X (intercept included as a column of X).

    Returns (coefficients, residual sum of squares, full_rank). Solved via
    an orthogonal factorization (SVD); rank-deficient designs are flagged
    rather than raised, since constant overnight windows are routine.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise GrangerError(f"ols_rss: bad shapes y{y.shape}, X{X.shape}")
    if X.shape[0] <= X.shape[1]:
        raise GrangerError(f"ols_rss: {X.shape[0]} rows for {X.shape[1]} columns")
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    return beta, rss, rank == X.shape[1]


def f_pvalue(F: float, d1: int, d2: int) -> float:
    """Upper-tail probability of the F(d1, d2) distribution.

    Computed through the regularized incomplete beta function:
    P(X > F) = I_{d2 / (d2 + d1 F)}(d2/2, d1/2).
    """
    if d1 < 1 or d2 < 1:
        raise GrangerError(f"f_pvalue: degrees of freedom must be >= 1, got ({d1}, {d2})")
    if not np.isfinite(F):
        return 0.0
    if F <= 0.0:
        return 1.0
    x = d2 / (d2 + d1 * F)
    p = float(betainc(d2 / 2.0, d1 / 2.0, x))
    return min(1.0, max(0.0, p))


NO_EDGE = (0.0, 1.0)


def granger_test(ya: np.ndarray, yb: np.ndarray, lag: int) -> tuple[float, float]:
    """F statistic and p-value for "b's past improves prediction of a".

    Both inputs must already be differenced and equal length. Unrestricted
    model: ya[t] on intercept + ya lags 1..lag + yb lags 1..lag. Restricted
    model drops the yb lags. F = ((RSS_r - RSS_u)/lag) / (RSS_u/(n-2*lag-1))
    with n the usable observation count. Degenerate fits (rank deficiency
    or a perfect unrestricted fit) return the no-edge marker (F=0, p=1).
    """
    ya = np.asarray(ya, dtype=np.float64)
    yb = np.asarray(yb, dtype=np.float64)
    if ya.shape != yb.shape or ya.ndim != 1:
        raise GrangerError(f"granger_test: shapes {ya.shape} and {yb.shape} must match, 1-d")
    n_total = ya.size
    if n_total < 2 * lag + 10:
        raise GrangerError(
            f"granger_test: {n_total} observations < minimum {2 * lag + 10} for lag {lag}"
        )
    n = n_total - lag
    dof = n - 2 * lag - 1
    if dof < 1:
        return NO_EDGE

    y = ya[lag:]
    cols = [np.ones(n)]
    for k in range(1, lag + 1):
        cols.append(ya[lag - k : n_total - k])
    X_r = np.column_stack(cols)
    for k in range(1, lag + 1):
        cols.append(yb[lag - k : n_total - k])
    X_u = np.column_stack(cols)

    _, rss_r, ok_r = ols_rss(y, X_r)
    _, rss_u, ok_u = ols_rss(y, X_u)
    if not (ok_r and ok_u):
        return NO_EDGE
    # Nested models: the unrestricted fit can only lower the residual.
    assert rss_r >= rss_u - 1e-9 * max(1.0, rss_r), (rss_r, rss_u)
    if rss_u <= 0.0:
        return NO_EDGE
    F = max(0.0, (rss_r - rss_u) / lag) / (rss_u / dof)
    return F, f_pvalue(F, lag, dof)


# ---------------------------------------------------------------------------
# graph assembly


def build_graph_set(delays, t: int, cfg: GrangerConfig | None = None) -> CausalGraphSet:
    """Causality graphs at the four scales from trailing windows ending at t.

    ``delays`` is a DelayMatrix (or any object with an (N, T) ``values``
    array). Hour t uses history rows [t - window, t); a window longer than
    the available history falls back to all of it. Pairwise tests are
    independent, so the result does not depend on evaluation order.
    """
    cfg = cfg or GrangerConfig()
    values = np.asarray(getattr(delays, "values", delays), dtype=np.float64)
    if values.ndim != 2:
        raise GrangerError(f"build_graph_set: expected an (N, T) matrix, got {values.shape}")
    n = values.shape[0]
    if n < 2:
        raise GrangerError(f"build_graph_set: need at least 2 airports, got {n}")
    if t < cfg.min_anchor():
        raise GrangerError(f"build_graph_set: anchor {t} before first feasible {cfg.min_anchor()}")
    if t > values.shape[1]:
        raise GrangerError(f"build_graph_set: anchor {t} beyond series end {values.shape[1]}")

    graphs = np.zeros((len(SCALES), n, n))
    pvals = np.ones((len(SCALES), n, n))
    for s_idx, scale in enumerate(SCALES):
        win = cfg.window_hours[scale]
        lo = 0 if win is None else max(0, t - win)
        window = values[:, lo:t]
        interval = cfg.diff_interval[scale]
        if window.shape[1] - interval < 2 * cfg.lag + 10:
            raise GrangerError(
                f"build_graph_set: {scale} window [{lo},{t}) too short after differencing"
            )
        diffed = [difference(window[i], interval) for i in range(n)]
        for a in range(n):
            for b in range(n):
                if a == b:
                    continue
                _, p = granger_test(diffed[a], diffed[b], cfg.lag)
                pvals[s_idx, a, b] = p
                if p < cfg.significance:
                    graphs[s_idx, a, b] = 1.0
    return CausalGraphSet(anchor=t, scales=SCALES, graphs=graphs, p_values=pvals)


def precompute_graph_sets(delays, cfg: GrangerConfig | None = None, t_end: int | None = None):
    """Graph sets at every refresh anchor from the first feasible hour.

    Returns (anchors array, list of CausalGraphSet). A model step at hour s
    uses the set at the largest anchor <= s.
    """
    cfg = cfg or GrangerConfig()
    values = np.asarray(getattr(delays, "values", delays), dtype=np.float64)
    T = values.shape[1] if t_end is None else t_end
    first = cfg.min_anchor()
    first = ((first + cfg.refresh_hours - 1) // cfg.refresh_hours) * cfg.refresh_hours
    anchors = np.arange(first, T + 1, cfg.refresh_hours, dtype=np.int64)
    if anchors.size == 0:
        raise GrangerError(f"precompute_graph_sets: series of {T} hours has no feasible anchor")
    sets = [build_graph_set(values, int(t), cfg) for t in anchors]
    return anchors, sets


def anchor_index(anchors: np.ndarray, hour: int) -> int:
    """Index of the largest anchor <= hour; -1 when none exists."""
    return int(np.searchsorted(anchors, hour, side="right")) - 1


# ---------------------------------------------------------------------------
# export


def graph_set_to_json(gs: CausalGraphSet, airports: list[str]) -> str:
    payload = [
        {
            "anchor_time": int(gs.anchor),
            "scale": scale,
            "airports": list(airports),
            "adjacency": gs.graphs[i].astype(int).tolist(),
            "p_values": gs.p_values[i].tolist(),
        }
        for i, scale in enumerate(gs.scales)
    ]
    return json.dumps(payload, sort_keys=True)


def write_graph_set(gs: CausalGraphSet, airports: list[str], path: str | Path) -> None:
    Path(path).write_text(graph_set_to_json(gs, airports) + "\n")
