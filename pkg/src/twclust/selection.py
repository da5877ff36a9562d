"""Choosing the number of clusters.

Within/between cluster sums built from the TW measure (or squared L2) feed
eight classical criteria. With the TW measure each criterion is optimized
jointly over ``k`` and the weight ``alpha``.

Tables passed to the index functions are mappings ``(k, alpha) -> value``;
under L2 the alpha component is ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .clustering import L2, TW, ClusterOptions, Clustering, cluster
from .data import FunctionalDataset, TimeGrid
from .errors import CalibrationError, ParameterError, SelectionError
from .measure import MeasureConfig, TWKernel, WindowSet, build_windows, combine, pairwise_components

METHODS = ("ch", "kl", "hartigan", "silhouette", "gap", "jump", "ddse", "djump")
DEFAULT_K_RANGE = tuple(range(1, 9))
DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(11))
DEFAULT_B = 20
HARTIGAN_THRESHOLD = 10.0
LOG_FLOOR = 1e-300
DJUMP_GRID_POINTS = 200

Key = Tuple[int, Optional[float]]


@dataclass
class CriterionTrace:
    method: str
    values: Dict[Key, float]
    k_opt: int
    alpha_opt: Optional[float]
    auxiliary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        rows = [
            {"k": k, "alpha": a, "value": _json_float(v)}
            for (k, a), v in sorted(self.values.items(), key=lambda kv: _order(kv[0]))
        ]
        return {
            "method": self.method,
            "k_opt": self.k_opt,
            "alpha_opt": self.alpha_opt,
            "values": rows,
            "auxiliary": _jsonable(self.auxiliary),
        }


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, str) else k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(obj)
    return obj


def _order(key: Key):
    k, a = key
    return (k, -1.0 if a is None else a)


def _alphas(table: Mapping[Key, float]):
    return sorted({a for _, a in table}, key=lambda a: -1.0 if a is None else a)


def _ks(table: Mapping[Key, float], alpha):
    return sorted(k for k, a in table if a == alpha)


def _argmax(values: Mapping[Key, float]) -> Optional[Key]:
    """Largest non-NaN value; ties to smallest k, then smallest alpha."""
    best = None
    for key in sorted(values, key=_order):
        v = values[key]
        if v is None or math.isnan(v):
            continue
        if best is None or v > values[best]:
            best = key
    return best


def _select_max(method, values, auxiliary=None) -> CriterionTrace:
    key = _argmax(values)
    if key is None:
        raise SelectionError(f"{method}: every criterion value is undefined")
    return CriterionTrace(method, dict(values), key[0], key[1], dict(auxiliary or {}))


# --------------------------------------------------------------------------
# measure plumbing


class Scorer:
    """Curve-to-center cost under a fixed grid, distance mode and window size."""

    def __init__(self, grid, distance: str = TW, measure: Optional[MeasureConfig] = None):
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(grid)
        self.grid = grid
        self.distance = distance
        self.measure = measure or MeasureConfig()
        self.windows: Optional[WindowSet] = None
        if distance == TW:
            self.windows = build_windows(grid, self.measure.m)
        self._kernel_for = None
        self._kernel = None

    def config(self, alpha) -> MeasureConfig:
        return self.measure if alpha is None else self.measure.with_alpha(alpha)

    def costs(self, values, centers, alpha) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if self.distance == L2:
            diff = values[:, None, :] - centers[None, :, :]
            return np.einsum("ijk,ijk->ij", diff, diff)
        if self._kernel_for is not values:
            self._kernel = TWKernel(values, self.windows, self.measure)
            self._kernel_for = values
        t, w = self._kernel.components(centers)
        return combine(t, w, self.measure.alpha if alpha is None else alpha)

    def assigned_costs(self, values, clustering: Clustering, alpha) -> np.ndarray:
        c = self.costs(values, clustering.centers, alpha)
        return c[np.arange(c.shape[0]), clustering.assignments]


def _scorer(dataset_or_grid, distance, measure):
    grid = dataset_or_grid.grid if isinstance(dataset_or_grid, FunctionalDataset) else dataset_or_grid
    return Scorer(grid, distance, measure)


def wcs(clustering: Clustering, dataset: FunctionalDataset, alpha, *, distance: str = TW,
        measure: Optional[MeasureConfig] = None, scorer: Optional[Scorer] = None) -> float:
    """Sum over curves of the cost to their own cluster center."""
    scorer = scorer or _scorer(dataset, distance, measure)
    return float(scorer.assigned_costs(dataset.values, clustering, alpha).sum())


def bcs(clustering: Clustering, alpha, grid=None, *, distance: str = TW,
        measure: Optional[MeasureConfig] = None, scorer: Optional[Scorer] = None) -> float:
    """Size-weighted sum of the cost of each center against the overall center."""
    if scorer is None:
        if grid is None:
            grid = TimeGrid.uniform(clustering.centers.shape[1])
        scorer = _scorer(grid, distance, measure)
    per = scorer.costs(clustering.centers, clustering.overall_center[None, :], alpha)[:, 0]
    return float(np.dot(clustering.sizes, per))


def gap_dispersion(clustering: Clustering, dataset: FunctionalDataset, alpha, *,
                   scorer: Scorer) -> float:
    """Within-cluster dispersion with each cluster's sum divided by ``2 n_l``."""
    own = scorer.assigned_costs(dataset.values, clustering, alpha)
    sums = np.bincount(clustering.assignments, weights=own, minlength=clustering.k)
    return float(np.sum(sums / (2.0 * clustering.sizes)))


def empirical_distortion(dataset: FunctionalDataset, centers, alpha, *, distance: str = TW,
                         measure: Optional[MeasureConfig] = None,
                         scorer: Optional[Scorer] = None) -> float:
    """Mean over curves of the smallest cost to any of ``centers``."""
    scorer = scorer or _scorer(dataset, distance, measure)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] == 0:
        raise ParameterError("centers must be nonempty")
    return float(scorer.costs(dataset.values, centers, alpha).min(axis=1).mean())


# --------------------------------------------------------------------------
# criteria on injected tables


def ch_index(wcs_table: Mapping[Key, float], bcs_table: Mapping[Key, float], n: int,
             k_range: Optional[Iterable[int]] = None) -> CriterionTrace:
    """Calinski-Harabasz ratio ``(BCS/(k-1)) / (WCS/(n-k))``, maximized."""
    allowed = None if k_range is None else set(k_range)
    values = {}
    for key, w in wcs_table.items():
        k = key[0]
        if k < 2 or k >= n or key not in bcs_table or (allowed is not None and k not in allowed):
            continue
        b = bcs_table[key]
        with np.errstate(divide="ignore", invalid="ignore"):
            values[key] = float(np.float64(b / (k - 1)) / np.float64(w / (n - k)))
    if not values:
        raise ParameterError("CH needs at least one k >= 2 in the range")
    return _select_max("ch", values)


def kl_index(wcs_table: Mapping[Key, float], r: int,
             k_range: Optional[Iterable[int]] = None) -> CriterionTrace:
    """Krzanowski-Lai ratio ``|DIFF(k) / DIFF(k+1)|``, maximized."""
    allowed = None if k_range is None else set(k_range)
    values, diffs = {}, {}
    for a in _alphas(wcs_table):
        table = {k: wcs_table[(k, a)] for k in _ks(wcs_table, a)}

        def diff(k):
            return (k - 1) ** (2.0 / r) * table[k - 1] - k ** (2.0 / r) * table[k]

        for k in table:
            if k < 2 or k - 1 not in table or k + 1 not in table:
                continue
            if allowed is not None and k not in allowed:
                continue
            d_k, d_next = diff(k), diff(k + 1)
            diffs[(k, a)] = d_k
            if d_next == 0:
                values[(k, a)] = math.inf if d_k != 0 else math.nan
            else:
                values[(k, a)] = abs(d_k / d_next)
    if not values:
        raise ParameterError("KL needs WCS at k-1, k and k+1 for some k >= 2")
    return _select_max("kl", values, {"diff": {f"{k},{a}": v for (k, a), v in diffs.items()}})


def _first_hit_joint(method, per_alpha, values, auxiliary) -> CriterionTrace:
    """Pick the alpha whose first-hit rule selected the smallest k."""
    if not per_alpha:
        raise SelectionError(f"{method}: no alpha produced a selection")
    a_best = min(per_alpha, key=lambda a: (per_alpha[a], -1.0 if a is None else a))
    auxiliary["k_by_alpha"] = {str(a): k for a, k in per_alpha.items()}
    return CriterionTrace(method, values, per_alpha[a_best], a_best, auxiliary)


def hartigan_index(wcs_table: Mapping[Key, float], n: int,
                   k_range: Optional[Iterable[int]] = None,
                   threshold: float = HARTIGAN_THRESHOLD) -> CriterionTrace:
    """Hartigan's ``(n-k-1)(WCS(k)/WCS(k+1) - 1)``; first ``k`` at or below the threshold."""
    allowed = None if k_range is None else set(k_range)
    values, per_alpha, never = {}, {}, []
    for a in _alphas(wcs_table):
        table = {k: wcs_table[(k, a)] for k in _ks(wcs_table, a)}
        ks = [k for k in sorted(table) if k + 1 in table and (allowed is None or k in allowed)]
        if not ks:
            continue
        for k in ks:
            w, w_next = table[k], table[k + 1]
            if w_next == 0:
                ratio = math.inf if w > 0 else 1.0
            else:
                ratio = w / w_next
            values[(k, a)] = (n - k - 1) * (ratio - 1.0)
        hit = [k for k in ks if values[(k, a)] <= threshold]
        if hit:
            per_alpha[a] = hit[0]
        else:
            per_alpha[a] = max(ks)
            never.append(a)
    if not values:
        raise ParameterError("Hartigan needs WCS at k and k+1 for some k")
    aux = {"threshold": threshold, "threshold_never_met": [str(a) for a in never]}
    return _first_hit_joint("hartigan", per_alpha, values, aux)


def jump_log_differences(d: Sequence[float], t: float):
    """Signed log-magnitudes of ``d(k)^-t - d(k-1)^-t`` with ``d(0)^-t = 0``.

    Returns ``(sign, logmag)`` arrays aligned with ``d``; ``d(k) = 0`` gives an
    infinite positive jump.
    """
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore"):
        a = -t * np.log(d)  # log of d^-t; +inf where d == 0
    prev = np.concatenate([[-np.inf], a[:-1]])
    sign = np.zeros(d.size)
    logmag = np.full(d.size, -np.inf)
    for i in range(d.size):
        cur, old = a[i], prev[i]
        if np.isposinf(cur):
            sign[i], logmag[i] = 1.0, np.inf
        elif cur == old:
            continue
        else:
            hi, lo = max(cur, old), min(cur, old)
            sign[i] = 1.0 if cur > old else -1.0
            logmag[i] = hi + np.log(-np.expm1(lo - hi)) if np.isfinite(lo) else hi
    return sign, logmag


def jump_differences_direct(d: Sequence[float], t: float) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    p = d ** (-t)
    return np.diff(np.concatenate([[0.0], p]))


def _jump_key(sign, logmag):
    return (sign, sign * logmag if sign != 0 else 0.0)


def jump_selection(wcs_table: Mapping[Key, float], r: int,
                   k_range: Optional[Iterable[int]] = None) -> CriterionTrace:
    """Largest jump in transformed distortion ``d(k)^(-r/2)`` with ``d = WCS / r``."""
    t = r / 2.0
    allowed = None if k_range is None else set(k_range)
    signs, logs, per_alpha = {}, {}, {}
    for a in _alphas(wcs_table):
        ks = [k for k in _ks(wcs_table, a) if allowed is None or k in allowed]
        if not ks:
            continue
        if ks != list(range(1, ks[-1] + 1)):
            raise ParameterError("jump needs a contiguous k-range starting at 1")
        d = np.array([wcs_table[(k, a)] / r for k in ks])
        sign, logmag = jump_log_differences(d, t)
        for k, s, lm in zip(ks, sign, logmag):
            signs[(k, a)], logs[(k, a)] = float(s), float(lm)
        # max jump for this alpha, ties to smallest k
        best = max(ks, key=lambda k: (_jump_key(signs[(k, a)], logs[(k, a)]), -k))
        per_alpha[a] = best
    if not per_alpha:
        raise ParameterError("jump needs at least one k")
    finite = [v for v in logs.values() if np.isfinite(v)]
    scale = max(finite) if finite else 0.0
    values = {}
    for key in logs:
        s, lm = signs[key], logs[key]
        values[key] = s * math.exp(lm - scale) if s != 0 else 0.0
    a_best = max(per_alpha, key=lambda a: (
        _jump_key(signs[(per_alpha[a], a)], logs[(per_alpha[a], a)]),
        -per_alpha[a], -(-1.0 if a is None else a)))
    aux = {
        "t": t,
        "log_scale": scale,
        "distortion": {f"{k},{a}": wcs_table[(k, a)] / r for (k, a) in logs},
        "log_jump": {f"{k},{a}": v for (k, a), v in logs.items()},
        "jump_sign": {f"{k},{a}": v for (k, a), v in signs.items()},
        "k_by_alpha": {str(a): k for a, k in per_alpha.items()},
    }
    return CriterionTrace("jump", values, per_alpha[a_best], a_best, aux)


def _argmin_first(x: np.ndarray) -> int:
    return int(np.argmin(x))


def slope_heuristics(distortions: Mapping[int, float], n: int, mode: str = "ddse") -> dict:
    """Calibrate ``lambda`` for ``Lambda(k) + lambda * sqrt(k/n)`` and pick ``k``.

    ``mode`` is ``"djump"`` (largest complexity jump along a lambda grid, then
    ``2 * lambda``) or ``"ddse"`` (slope of ``Lambda`` against the penalty shape
    over the larger half of the k-range, ``lambda = -2 * slope``).

    Returns a dict with ``k_opt``, ``lambda``, ``penalized`` (per k) and
    mode-specific diagnostics.
    """
    ks = np.array(sorted(distortions), dtype=int)
    lam_vals = np.array([distortions[k] for k in ks], dtype=float)
    pen = np.sqrt(ks / n)
    if mode == "ddse":
        if ks.size < 4:
            raise ParameterError("DDSE needs at least 4 values of k")
        tail = slice(ks.size // 2, None)
        x, y = pen[tail], lam_vals[tail]
        xc = x - x.mean()
        slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
        intercept = float(y.mean() - slope * x.mean())
        lam = -2.0 * slope
        diag = {"slope": slope, "intercept": intercept, "regression_k": ks[tail].tolist()}
        if not lam > 0:
            raise CalibrationError(
                f"DDSE calibration failed: estimated slope {slope:.6g} is not negative", diag)
        crit = lam_vals + lam * pen
        return {"k_opt": int(ks[_argmin_first(crit)]), "lambda": lam,
                "penalized": dict(zip(ks.tolist(), crit.tolist())), **diag}
    if mode == "djump":
        top = float(np.max(np.abs(lam_vals))) or 1.0
        grid = np.geomspace(1e-6, 1e6, DJUMP_GRID_POINTS) * top
        crit = lam_vals[None, :] + grid[:, None] * pen[None, :]
        picked = ks[np.argmin(crit, axis=1)]
        drops = picked[:-1] - picked[1:]
        if drops.size and drops.max() > 0:
            i = int(np.argmax(drops))
            lam_star = float(grid[i + 1])
            jump = int(drops[i])
        else:
            lam_star, jump = float(grid[0]), 0
        lam = 2.0 * lam_star
        final = lam_vals + lam * pen
        return {"k_opt": int(ks[_argmin_first(final)]), "lambda": lam, "lambda_jump": lam_star,
                "jump_size": jump, "penalized": dict(zip(ks.tolist(), final.tolist()))}
    raise ParameterError(f"unknown slope-heuristics mode {mode!r}")


def slope_selection(distortion_table: Mapping[Key, float], n: int, mode: str,
                    k_range: Optional[Iterable[int]] = None) -> CriterionTrace:
    """Slope heuristics per alpha; the alpha with the smallest penalized value wins."""
    allowed = None if k_range is None else set(k_range)
    values, per_alpha, failures = {}, {}, {}
    for a in _alphas(distortion_table):
        dist = {k: distortion_table[(k, a)] for k in _ks(distortion_table, a)
                if allowed is None or k in allowed}
        if not dist:
            continue
        try:
            res = slope_heuristics(dist, n, mode)
        except CalibrationError as exc:
            failures[str(a)] = {"error": str(exc), **exc.diagnostics}
            continue
        for k, v in res["penalized"].items():
            values[(k, a)] = v
        per_alpha[a] = res
    if not per_alpha:
        if failures:
            raise CalibrationError(f"{mode}: calibration failed for every alpha", failures)
        raise ParameterError(f"{mode}: empty k-range")
    a_best = min(per_alpha, key=lambda a: (per_alpha[a]["penalized"][per_alpha[a]["k_opt"]],
                                           per_alpha[a]["k_opt"], -1.0 if a is None else a))
    aux = {
        "lambda_by_alpha": {str(a): r["lambda"] for a, r in per_alpha.items()},
        "k_by_alpha": {str(a): r["k_opt"] for a, r in per_alpha.items()},
        "failures": failures,
        "distortion": {f"{k},{a}": v for (k, a), v in distortion_table.items()},
    }
    return CriterionTrace(mode, values, per_alpha[a_best]["k_opt"], a_best, aux)


# --------------------------------------------------------------------------
# silhouette


def silhouette_from_distances(dist: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette width from a full dissimilarity matrix.

    Curves alone in their cluster contribute 0; so do curves with
    ``a = b = 0``.
    """
    labels = np.asarray(labels)
    n = labels.size
    k = int(labels.max()) + 1
    if k < 2:
        raise ParameterError("silhouette is undefined for k = 1")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot  # (n, k): total dissimilarity to each cluster
    own = sizes[labels]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[np.arange(n), labels] / (own - 1)
        means = sums / sizes
    means[np.arange(n), labels] = np.inf
    means[:, sizes == 0] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (b - a) / denom
    s = np.where((own > 1) & (denom > 0), s, 0.0)
    return float(s.mean())


def pairwise_dissimilarity(dataset: FunctionalDataset, alpha, *, distance: str = TW,
                           measure: Optional[MeasureConfig] = None, components=None):
    """Curve-to-curve dissimilarity: ``TW_alpha(Y_i - Y_j, Y_i, Y_j)`` or Euclidean."""
    if distance == L2:
        v = dataset.values
        sq = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=-1)
        return np.sqrt(sq)
    if components is None:
        measure = measure or MeasureConfig()
        windows = build_windows(dataset.grid, measure.m)
        components = pairwise_components(dataset.values, windows, measure)
    t, w = components
    return combine(t, w, alpha)


def silhouette(clustering: Clustering, dataset: FunctionalDataset, alpha, *,
               distance: str = TW, measure: Optional[MeasureConfig] = None) -> float:
    if clustering.k < 2:
        raise ParameterError("silhouette is undefined for k = 1")
    dist = pairwise_dissimilarity(dataset, alpha, distance=distance, measure=measure)
    return silhouette_from_distances(dist, clustering.assignments)


# --------------------------------------------------------------------------
# precomputed (k, alpha) grid


def _normalize_k_range(k_range) -> Tuple[int, ...]:
    ks = tuple(sorted(set(int(k) for k in k_range)))
    if not ks or ks[0] < 1:
        raise ParameterError("k-range must contain positive integers")
    return ks


class SelectionInputs:
    """Clusterings and derived sums for every ``(k, alpha)`` of a search.

    Clusterings are computed for ``k`` up to ``max(k_range) + 1`` (capped at
    ``n``) so that criteria looking one step ahead have their neighbours.
    """

    def __init__(self, dataset: FunctionalDataset, k_range=DEFAULT_K_RANGE,
                 alpha_grid=DEFAULT_ALPHAS, options: Optional[ClusterOptions] = None):
        self.dataset = dataset
        self.options = options or ClusterOptions()
        self.k_range = _normalize_k_range(k_range)
        if self.options.distance == L2:
            self.alpha_grid: Tuple = (None,)
        else:
            alphas = tuple(sorted(set(float(a) for a in alpha_grid)))
            if not alphas:
                raise ParameterError("alpha grid must be nonempty")
            for a in alphas:
                if not 0.0 <= a <= 1.0:
                    raise ParameterError(f"alpha {a} outside [0, 1]")
            self.alpha_grid = alphas
        if self.k_range[-1] > dataset.n:
            raise ParameterError(f"k-range reaches {self.k_range[-1]} but n={dataset.n}")
        self.k_all = tuple(range(1, min(self.k_range[-1] + 1, dataset.n) + 1))
        self.scorer = Scorer(dataset.grid, self.options.distance, self.options.measure)
        self.clusterings: Dict[Key, Clustering] = {}
        for a in self.alpha_grid:
            opts = self.options if a is None else self.options.with_alpha(a)
            for k in self.k_all:
                self.clusterings[(k, a)] = cluster(dataset, k, opts)
        self._components = None
        self._cache: Dict[str, Dict[Key, float]] = {}

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def r(self) -> int:
        return self.dataset.r

    def _table(self, name, fn) -> Dict[Key, float]:
        if name not in self._cache:
            self._cache[name] = {key: fn(key, c) for key, c in self.clusterings.items()}
        return self._cache[name]

    def wcs_table(self):
        return self._table("wcs", lambda key, c: wcs(c, self.dataset, key[1], scorer=self.scorer))

    def bcs_table(self):
        return self._table("bcs", lambda key, c: bcs(c, key[1], scorer=self.scorer))

    def distortion_table(self):
        return self._table("distortion", lambda key, c: empirical_distortion(
            self.dataset, c.centers, key[1], scorer=self.scorer))

    def gap_dispersion_table(self):
        return self._table("gap", lambda key, c: gap_dispersion(
            c, self.dataset, key[1], scorer=self.scorer))

    def pairwise(self, alpha):
        if self.options.distance == L2:
            return pairwise_dissimilarity(self.dataset, None, distance=L2)
        if self._components is None:
            self._components = pairwise_components(
                self.dataset.values, self.scorer.windows, self.options.measure)
        return combine(*self._components, alpha)

    def silhouette_table(self):
        def fn():
            out = {}
            for a in self.alpha_grid:
                dist = self.pairwise(a)
                for k in self.k_range:
                    if k >= 2 and (k, a) in self.clusterings:
                        out[(k, a)] = silhouette_from_distances(
                            dist, self.clusterings[(k, a)].assignments)
            return out
        if "silhouette" not in self._cache:
            self._cache["silhouette"] = fn()
        return self._cache["silhouette"]

    def restrict(self, table, extra: int = 0):
        top = self.k_range[-1] + extra
        return {key: v for key, v in table.items() if key[0] <= top}


def silhouette_selection(table: Mapping[Key, float]) -> CriterionTrace:
    if not table:
        raise ParameterError("silhouette needs at least one k >= 2")
    return _select_max("silhouette", table)


def reference_dataset(dataset: FunctionalDataset, rng: np.random.Generator) -> FunctionalDataset:
    """Uniform curves spanning the observed range at each grid point."""
    lo = dataset.values.min(axis=0)
    hi = dataset.values.max(axis=0)
    vals = lo + (hi - lo) * rng.random(dataset.values.shape)
    return FunctionalDataset(dataset.grid, vals)


def gap_statistic(dataset: FunctionalDataset, k_range=DEFAULT_K_RANGE, alpha_grid=DEFAULT_ALPHAS,
                  B: int = DEFAULT_B, seed: int = 0, options: Optional[ClusterOptions] = None,
                  inputs: Optional[SelectionInputs] = None) -> CriterionTrace:
    """Gap statistic against ``B`` uniform reference datasets.

    ``k_opt`` is the smallest ``k`` with ``Gap(k) >= Gap(k+1) - s(k+1)``, per
    alpha; the alpha giving the smallest such ``k`` is returned.
    """
    if B < 2:
        raise ParameterError("gap statistic needs B >= 2 reference datasets")
    if inputs is None:
        inputs = SelectionInputs(dataset, k_range, alpha_grid, options)
    options = inputs.options
    observed = inputs.gap_dispersion_table()
    ref_logs: Dict[Key, list] = {key: [] for key in observed}
    floored = []

    def safe_log(x, tag):
        if x <= 0:
            floored.append(tag)
            return math.log(LOG_FLOOR)
        return math.log(x)

    for b in range(B):
        ss = np.random.SeedSequence(seed, spawn_key=(b,))
        rng = np.random.default_rng(ss)
        ref = reference_dataset(dataset, rng)
        ref_opts = ClusterOptions(options.max_iterations, options.restarts,
                                  int(rng.integers(2**63)), options.tolerance,
                                  options.distance, options.measure)
        alphas = [a for a in inputs.alpha_grid if a is not None] or DEFAULT_ALPHAS
        ref_inputs = SelectionInputs(ref, inputs.k_range, alphas, ref_opts)
        for key, val in ref_inputs.gap_dispersion_table().items():
            if key in ref_logs:
                ref_logs[key].append(safe_log(val, f"ref{b}:{key}"))

    gap, sk = {}, {}
    for key, logs in ref_logs.items():
        arr = np.array(logs)
        gap[key] = float(arr.mean() - safe_log(observed[key], f"obs:{key}"))
        sk[key] = float(arr.std() * math.sqrt(1.0 + 1.0 / B))

    values, per_alpha, never = {}, {}, []
    allowed = set(inputs.k_range)
    for a in inputs.alpha_grid:
        ks = [k for k in inputs.k_range if (k, a) in gap]
        for k in ks:
            values[(k, a)] = gap[(k, a)]
        ruled = [k for k in ks if (k + 1, a) in gap]
        hit = [k for k in ruled if gap[(k, a)] >= gap[(k + 1, a)] - sk[(k + 1, a)]]
        if hit:
            per_alpha[a] = hit[0]
        elif ks:
            per_alpha[a] = max(ks)
            never.append(str(a))
    if not values:
        raise ParameterError("gap statistic needs a nonempty k-range")
    aux = {
        "B": B,
        "seed": seed,
        "s_k": {f"{k},{a}": v for (k, a), v in sk.items()},
        "gap_all": {f"{k},{a}": v for (k, a), v in gap.items() if k not in allowed},
        "rule_never_met": never,
        "log_floored": floored,
    }
    return _first_hit_joint("gap", per_alpha, values, aux)


def evaluate(inputs: SelectionInputs, method: str, *, B: int = DEFAULT_B,
             gap_seed: int = 0) -> CriterionTrace:
    """Run one criterion on a precomputed grid."""
    method = method.lower()
    n, r = inputs.n, inputs.r
    ks = inputs.k_range
    if method == "ch":
        return ch_index(inputs.wcs_table(), inputs.bcs_table(), n, ks)
    if method == "kl":
        return kl_index(inputs.restrict(inputs.wcs_table(), 1), r, ks)
    if method == "hartigan":
        return hartigan_index(inputs.restrict(inputs.wcs_table(), 1), n, ks)
    if method == "silhouette":
        return silhouette_selection(inputs.silhouette_table())
    if method == "jump":
        return jump_selection(inputs.restrict(inputs.wcs_table()), r, ks)
    if method in ("ddse", "djump"):
        return slope_selection(inputs.restrict(inputs.distortion_table()), n, method, ks)
    if method == "gap":
        return gap_statistic(inputs.dataset, B=B, seed=gap_seed, inputs=inputs)
    raise ParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def select_k(dataset: FunctionalDataset, method: str, k_range=DEFAULT_K_RANGE,
             alpha_grid=DEFAULT_ALPHAS, options: Optional[ClusterOptions] = None, *,
             B: int = DEFAULT_B, gap_seed: int = 0,
             inputs: Optional[SelectionInputs] = None) -> CriterionTrace:
    """Select ``k`` (and ``alpha``) with one criterion.

    CH, KL and Silhouette maximize over all ``(k, alpha)``. Hartigan and Gap
    apply their first-hit rules per alpha and keep the alpha with the smallest
    selected ``k``. Jump keeps the alpha with the largest jump; the slope
    heuristics keep the alpha with the smallest penalized distortion.
    """
    if method.lower() not in METHODS:
        raise ParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if inputs is None:
        inputs = SelectionInputs(dataset, k_range, alpha_grid, options)
    return evaluate(inputs, method, B=B, gap_seed=gap_seed)
