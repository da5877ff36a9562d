"""Parallelism / mean-height statistics between a curve and a center.

The lack-of-parallelism statistic ``T`` treats the residuals ``xi = y - c`` as
a one-way layout whose factor levels are overlapping windows of neighbouring
grid points; ``W`` is a two-sample t statistic on the curve averages; the two
are blended into ``TW_alpha = sqrt(alpha * T + (1 - alpha) * W)``.

Every statistic operates on the last axis, so arrays of residuals of shape
``(..., r)`` are evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .data import FunctionalDataset, TimeGrid
from .errors import ParameterError

DEFAULT_M = 5

# Relative slack when testing |t_j - t_s| against the window radius so that
# equally spaced grids are not split by rounding.
_RADIUS_SLACK = 1e-9


@dataclass(frozen=True)
class MeasureConfig:
    alpha: float = 0.5
    m: int = DEFAULT_M
    degenerate_t: float = 0.0
    variance_floor: float = 1e-12

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        _check_odd(self.m)
        if self.variance_floor < 0:
            raise ParameterError("variance_floor must be nonnegative")

    def with_alpha(self, alpha: float) -> "MeasureConfig":
        return MeasureConfig(alpha, self.m, self.degenerate_t, self.variance_floor)


def _check_odd(m):
    if int(m) != m or m < 1 or m % 2 == 0:
        raise ParameterError(f"window size m must be an odd positive integer, got {m}")


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Windows ``W_j`` for every grid point, stored 0-based.

    ``membership[j, s]`` is 1 when ``s`` belongs to ``W_j``; ``counts`` holds
    the window sizes and ``coverage`` the number of windows containing each
    grid point. ``contrast`` is the symmetric matrix ``Q`` with
    ``MST(xi) - MSE(xi) = xi' Q xi``.
    """

    m: int
    windows: tuple
    membership: np.ndarray
    counts: np.ndarray
    coverage: np.ndarray
    contrast: np.ndarray

    @property
    def r(self) -> int:
        return len(self.windows)


def build_windows(grid, m: int) -> WindowSet:
    """Windows of the ``(m - 1) / 2`` nearest grid points on each side.

    Distances are measured in units of the mean grid spacing, so on an
    equally spaced grid every interior window has exactly ``m`` members and
    windows are truncated at the boundaries.
    """
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    _check_odd(m)
    if m > grid.r:
        raise ParameterError(f"window size m={m} exceeds grid length r={grid.r}")
    return _build_windows(grid.points.tobytes(), grid.r, int(m))


@lru_cache(maxsize=256)
def _build_windows(key: bytes, r: int, m: int) -> WindowSet:
    t = np.frombuffer(key, dtype=float)
    spacing = (t[-1] - t[0]) / (r - 1)
    radius = (m - 1) / 2 * (1 + _RADIUS_SLACK)
    member = np.abs(t[:, None] - t[None, :]) / spacing <= radius
    windows = tuple(tuple(int(s) for s in np.flatnonzero(row)) for row in member)
    membership = member.astype(float)
    counts = membership.sum(axis=1)
    coverage = membership.sum(axis=0)
    contrast = _contrast(membership, counts, coverage, r, m)
    for arr in (membership, counts, coverage, contrast):
        arr.setflags(write=False)
    return WindowSet(m, windows, membership, counts, coverage, contrast)


def _contrast(membership, counts, coverage, r, m):
    if m < 3:
        return np.full((r, r), np.nan)
    proj = membership / counts[:, None]  # window means
    centered = proj - (coverage / counts.sum())[None, :]  # minus grand mean
    q_mst = m / (r - 1) * centered.T @ centered
    q_mse = (np.diag(coverage) - proj.T @ (counts[:, None] * proj)) / (r * (m - 1))
    q = q_mst - q_mse
    return (q + q.T) / 2


def _uniform_windows(r: int, m: int) -> WindowSet:
    return build_windows(TimeGrid.uniform(r), m)


def anova_mst_mse(xi, windows: WindowSet):
    """Treatment and error mean squares of the window-augmented layout.

    Window means use each window's actual member count; the leading constants
    ``m / (r - 1)`` and ``1 / (r (m - 1))`` use the nominal window size.
    """
    xi = np.asarray(xi, dtype=float)
    r = xi.shape[-1]
    m = windows.m
    if windows.r != r:
        raise ParameterError(f"windows built for r={windows.r}, residuals have r={r}")
    if m < 3:
        raise ParameterError("MSE is undefined for m=1 (division by m-1); use m >= 3")
    # both mean squares are shift invariant; centering keeps the expanded
    # sum-of-squares identity below well conditioned
    xi = xi - xi.mean(axis=-1, keepdims=True)
    sums = xi @ windows.membership.T
    wmeans = sums / windows.counts
    grand = sums.sum(axis=-1, keepdims=True) / windows.counts.sum()
    mst = m / (r - 1) * ((wmeans - grand) ** 2).sum(axis=-1)
    # sum_j sum_{s in W_j} (xi_s - mean_j)^2 = sum_s c_s xi_s^2 - sum_j n_j mean_j^2
    within = (xi**2) @ windows.coverage - (windows.counts * wmeans**2).sum(axis=-1)
    mse = np.maximum(within, 0.0) / (r * (m - 1))
    return mst, mse


def tau_hat_sq(xi):
    """Difference-based variance estimate of the standardized ANOVA statistic."""
    xi = np.asarray(xi, dtype=float)
    r = xi.shape[-1]
    if r < 5:
        raise ParameterError(f"tau_hat_sq needs r >= 5, got {r}")
    d = np.diff(xi, axis=-1) ** 2
    # (xi_s - xi_{s-1})^2 (xi_{s+2} - xi_{s+1})^2 for s = 2..r-2 (1-based)
    return (d[..., : r - 3] * d[..., 2:]).sum(axis=-1) / (4 * (r - 3))


# Residuals whose consecutive differences are within this many ulps of the data magnitude are
# treated as exactly constant (perfectly parallel).
_CONSTANT_ULPS = 16


def t_from_parts(mst, mse, tau_sq, r: int, m: int, degenerate_t: float = 0.0):
    scale = np.sqrt(2 * m * (2 * m - 1) / (3 * (m - 1)))
    tau = np.sqrt(tau_sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.abs(np.sqrt(r) * (mst - mse) / (tau * scale))
    return np.where(tau_sq > 0, t, degenerate_t)


def t_statistic(xi, windows: WindowSet, degenerate_t: float = 0.0, magnitude=None):
    """Vectorized ``T`` over the last axis of ``xi``.

    ``magnitude`` is the size of the values ``xi`` was computed from (defaults
    to ``max |xi|``); residuals constant up to rounding at that magnitude get
    ``degenerate_t``.
    """
    xi = np.asarray(xi, dtype=float)
    mst, mse = anova_mst_mse(xi, windows)
    tau_sq = tau_hat_sq(xi)
    if magnitude is None:
        magnitude = np.abs(xi).max(axis=-1)
    flat = np.abs(np.diff(xi, axis=-1)).max(axis=-1) <= _CONSTANT_ULPS * np.finfo(float).eps * magnitude
    tau_sq = np.where(flat, 0.0, tau_sq)
    t = t_from_parts(mst, mse, tau_sq, xi.shape[-1], windows.m, degenerate_t)
    return t if t.ndim else float(t)


def t_parallelism(xi, config: MeasureConfig, windows: Optional[WindowSet] = None,
                  magnitude=None) -> float:
    """Lack-of-parallelism statistic of a residual vector.

    ``windows`` defaults to the equally spaced unit grid of matching length.
    """
    xi = np.asarray(xi, dtype=float)
    if config.m < 3:
        raise ParameterError("t_parallelism needs m >= 3")
    if windows is None:
        windows = _uniform_windows(xi.shape[-1], config.m)
    return t_statistic(xi, windows, config.degenerate_t, magnitude)


def w_statistic(y, c, variance_floor: float = 1e-12):
    """Vectorized ``W``; ``y`` and ``c`` broadcast against each other."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    r = y.shape[-1]
    if c.shape[-1] != r:
        raise ParameterError("curve and center lengths differ")
    num = y.mean(axis=-1) - c.mean(axis=-1)
    var = (y.var(axis=-1, ddof=1) + c.var(axis=-1, ddof=1)) / r
    w = np.abs(num / np.sqrt(var + variance_floor))
    return w if w.ndim else float(w)


def w_mean_diff(y, c, config: MeasureConfig) -> float:
    """Two-sample t statistic comparing the averages of ``y`` and ``c``."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    if y.shape != c.shape:
        raise ParameterError(f"dimension mismatch: {y.shape} vs {c.shape}")
    return w_statistic(y, c, config.variance_floor)


def combine(t, w, alpha: float):
    """``sqrt(alpha * T + (1 - alpha) * W)``."""
    out = np.sqrt(alpha * np.asarray(t) + (1.0 - alpha) * np.asarray(w))
    return out if out.ndim else float(out)


def tw_measure(xi, y, c, config: MeasureConfig, windows: Optional[WindowSet] = None) -> float:
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if not (xi.shape == y.shape == c.shape):
        raise ParameterError("xi, y and c must have equal lengths")
    mag = max(np.abs(y).max(), np.abs(c).max(), np.abs(xi).max())
    t = t_parallelism(xi, config, windows, mag)
    w = w_mean_diff(y, c, config)
    return combine(t, w, config.alpha)


class TWKernel:
    """``T`` and ``W`` of a fixed set of curves against arbitrary centers.

    Per-curve terms are cached, so each call costs one ``(n, r) x (r, k)``
    product plus the difference products of the variance estimate.
    """

    def __init__(self, values, windows: WindowSet, config: MeasureConfig):
        values = np.asarray(values, dtype=float)
        if values.shape[1] != windows.r:
            raise ParameterError("curve length does not match the windows")
        if windows.m < 3:
            raise ParameterError("the parallelism statistic needs m >= 3")
        self.windows = windows
        self.config = config
        self.values = values
        self.mean = values.mean(axis=1)
        centered = values - self.mean[:, None]
        self._centered_q = centered @ windows.contrast
        self._quad = np.einsum("ij,ij->i", centered, self._centered_q)
        self._diff = np.diff(values, axis=1)
        self._var = values.var(axis=1, ddof=1)
        self._absmax = np.abs(values).max(axis=1)

    def components(self, centers):
        """``(T, W)`` arrays of shape ``(n, k)``."""
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        r, m = self.windows.r, self.windows.m
        cmean = centers.mean(axis=1)
        cc = centers - cmean[:, None]
        cross = self._centered_q @ cc.T
        cquad = np.einsum("ij,jk,ik->i", cc, self.windows.contrast, cc)
        stat = self._quad[:, None] - 2.0 * cross + cquad[None, :]

        d = self._diff[:, None, :] - np.diff(centers, axis=1)[None, :, :]
        mag = np.maximum(self._absmax[:, None], np.abs(centers).max(axis=1)[None, :])
        flat = np.abs(d).max(axis=-1) <= _CONSTANT_ULPS * np.finfo(float).eps * mag
        d *= d
        tau_sq = np.einsum("ijk,ijk->ij", d[..., : r - 3], d[..., 2:]) / (4 * (r - 3))
        tau_sq[flat] = 0.0
        t = t_from_parts(stat, 0.0, tau_sq, r, m, self.config.degenerate_t)

        num = self.mean[:, None] - cmean[None, :]
        var = (self._var[:, None] + centers.var(axis=1, ddof=1)[None, :]) / r
        w = np.abs(num / np.sqrt(var + self.config.variance_floor))
        return t, w


def curve_center_components(values, centers, windows: WindowSet, config: MeasureConfig):
    """``T`` and ``W`` for every (curve, center) pair, as ``(n, k)`` arrays."""
    return TWKernel(values, windows, config).components(centers)


def pairwise_components(values, windows: WindowSet, config: MeasureConfig):
    """``T(Y_i - Y_j)`` and ``W(Y_i, Y_j)`` for all curve pairs, as ``(n, n)`` arrays.

    Both matrices are symmetric with zero diagonal.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    kernel = TWKernel(values, windows, config)
    t = np.zeros((n, n))
    w = np.zeros((n, n))
    step = max(1, 2_000_000 // (n * values.shape[1]))
    for lo in range(0, n, step):
        tb, wb = kernel.components(values[lo:lo + step])
        t[:, lo:lo + step] = tb
        w[:, lo:lo + step] = wb
    t = (t + t.T) / 2
    w = (w + w.T) / 2
    np.fill_diagonal(t, 0.0)
    np.fill_diagonal(w, 0.0)
    return t, w


def permutation_levels(
    dataset: FunctionalDataset,
    level: float,
    candidates: Sequence[int],
    permutations: int,
    seed: int,
) -> Dict[int, float]:
    """Empirical rejection rate of ``T`` under permutation nulls, per window size.

    Every replicate permutes each curve's values across grid positions and
    centers it at its mean; ``T`` is compared to the two-sided standard normal
    critical value (``T`` is an absolute value). The same permuted replicates
    are shared by all candidates.
    """
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    if not candidates:
        raise ParameterError("candidates must be nonempty")
    if permutations < 1:
        raise ParameterError("permutations must be at least 1")
    r = dataset.r
    for m in candidates:
        _check_odd(m)
        if not 3 <= m <= r:
            raise ParameterError(f"candidate m={m} must satisfy 3 <= m <= r={r}")

    rng = np.random.default_rng(seed)
    crit = norm.ppf(1.0 - level / 2.0)
    reps = np.stack([rng.permuted(dataset.values, axis=1) for _ in range(permutations)])
    reps -= reps.mean(axis=-1, keepdims=True)
    levels = {}
    for m in candidates:
        windows = build_windows(dataset.grid, m)
        t = np.asarray(t_statistic(reps, windows))
        levels[int(m)] = float(np.mean(t > crit))
    return levels


def calibrate_m(
    dataset: FunctionalDataset,
    level: float = 0.05,
    candidates: Sequence[int] = (3, 5, 7, 9),
    permutations: int = 20,
    seed: int = 0,
) -> int:
    """Window size whose permutation-null rejection rate is closest to ``level``.

    Ties go to the smaller window.
    """
    levels = permutation_levels(dataset, level, candidates, permutations, seed)
    return min(levels, key=lambda m: (abs(levels[m] - level), m))
