"""Simulated cluster scenarios and seeded Monte Carlo selection studies."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .clustering import TW, ClusterOptions
from .data import FunctionalDataset, TimeGrid
from .errors import ParameterError, TWClustError
from .selection import DEFAULT_ALPHAS, DEFAULT_B, DEFAULT_K_RANGE, METHODS, SelectionInputs, evaluate

DEFAULT_R = 50


def _cos_sin_mean(level, freq_b, x):
    return level - np.cos(1.8 * np.pi * x) - np.sin(freq_b * x)


def _cos_cubic_mean(level, freq, x):
    return level - np.cos(freq * np.pi * x**3)


def _sin_sum_mean(level, freq, x):
    return level + np.sin(freq * np.pi * x) + np.sin(np.pi * x**2)


def _cos_parabola_mean(freq, x):
    return np.cos(freq * np.pi * x) - x**2


@dataclass(frozen=True)
class ScenarioSpec:
    """Cluster mean functions, sizes and noise laws of one scenario.

    Each curve gets one shift ``a ~ U(-shift, shift)`` and i.i.d.
    ``N(noise_mean, noise_sd^2)`` noise at every grid point. With
    ``noise_per_curve=True`` a single noise draw is added to the whole curve
    instead, so every curve is an exact vertical shift of its cluster mean.
    """

    id: int
    cluster_means: Tuple[Callable, ...]
    cluster_sizes: Tuple[int, ...]
    shift: float
    noise_sd: float
    noise_mean: float = 2.0
    r: int = DEFAULT_R
    noise_per_curve: bool = False

    def __post_init__(self):
        if len(self.cluster_means) != len(self.cluster_sizes):
            raise ParameterError("cluster_means and cluster_sizes must have equal length")
        if self.noise_sd <= 0:
            raise ParameterError("noise_sd must be positive")
        if self.shift < 0:
            raise ParameterError("shift half-width must be nonnegative")
        if any(s < 1 for s in self.cluster_sizes):
            raise ParameterError("cluster sizes must be positive")

    @property
    def n(self) -> int:
        return sum(self.cluster_sizes)

    @property
    def k_true(self) -> int:
        return len(self.cluster_sizes)

    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.r)

    def replace(self, **changes) -> "ScenarioSpec":
        fields = dict(id=self.id, cluster_means=self.cluster_means,
                      cluster_sizes=self.cluster_sizes, shift=self.shift,
                      noise_sd=self.noise_sd, noise_mean=self.noise_mean, r=self.r,
                      noise_per_curve=self.noise_per_curve)
        fields.update(changes)
        return ScenarioSpec(**fields)


SCENARIOS: Dict[int, ScenarioSpec] = {
    1: ScenarioSpec(
        1,
        (partial(_cos_sin_mean, 1.8, 1.8), partial(_cos_sin_mean, 2.4, 2.2)),
        (43, 57), shift=1 / 3, noise_sd=0.4,
    ),
    2: ScenarioSpec(
        2,
        tuple(partial(_cos_cubic_mean, lv, f) for lv, f in ((2.0, 1.5), (2.3, 1.7), (2.7, 1.9))),
        (35, 43, 72), shift=1 / 2, noise_sd=0.4,
    ),
    3: ScenarioSpec(
        3,
        tuple(partial(_sin_sum_mean, lv, f)
              for lv, f in ((0.9, 1.5), (1.5, 1.7), (2.2, 1.9), (2.4, 1.6))),
        (34, 67, 71, 28), shift=1 / 3, noise_sd=0.4,
    ),
    4: ScenarioSpec(
        4,
        tuple(partial(_cos_parabola_mean, f) for f in (1.0, 1.2, 1.4, 1.6, 1.8)),
        (50, 62, 36, 43, 59), shift=1 / 4, noise_sd=0.3,
    ),
}


def get_scenario(scenario_id: int, r: int = DEFAULT_R) -> ScenarioSpec:
    try:
        spec = SCENARIOS[int(scenario_id)]
    except (KeyError, ValueError):
        raise ParameterError(f"unknown scenario {scenario_id!r}; choose 1-4") from None
    return spec if r == spec.r else spec.replace(r=r)


def generate_scenario(spec, seed) -> FunctionalDataset:
    """Draw one labelled dataset; labels are 1-based cluster ids.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if isinstance(spec, int):
        spec = get_scenario(spec)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = spec.grid()
    x = grid.points
    means = np.vstack([np.broadcast_to(mu(x), x.shape) for mu in spec.cluster_means])
    labels = np.repeat(np.arange(spec.k_true), spec.cluster_sizes)
    shifts = rng.uniform(-spec.shift, spec.shift, size=spec.n) if spec.shift > 0 else np.zeros(spec.n)
    noise_cols = 1 if spec.noise_per_curve else spec.r
    noise = rng.normal(spec.noise_mean, spec.noise_sd, size=(spec.n, noise_cols))
    values = shifts[:, None] + means[labels] + noise
    return FunctionalDataset(grid, values, labels + 1)


@dataclass
class FrequencyTable:
    """Counts of the selected ``k`` per method over Monte Carlo replicates.

    Replicates where a method raised are counted in ``failures`` so that
    ``sum(counts[m].values()) + failures[m] == runs``.
    """

    scenario: int
    distance: str
    runs: int
    k_values: Tuple[int, ...]
    counts: Dict[str, Dict[int, int]]
    failures: Dict[str, int]
    records: List[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def frequency(self, method: str, k: int) -> int:
        return self.counts[method].get(k, 0)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "distance": self.distance,
            "runs": self.runs,
            "k_values": list(self.k_values),
            "table": {m: {str(k): self.counts[m].get(k, 0) for k in self.k_values}
                      for m in self.counts},
            "failures": dict(self.failures),
            "config": self.config,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", *self.k_values, "failed"])
        for m in self.counts:
            writer.writerow([m, *(self.counts[m].get(k, 0) for k in self.k_values),
                             self.failures.get(m, 0)])
        return buf.getvalue()


def replicate_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


def run_replicate(spec: ScenarioSpec, methods: Sequence[str], index: int, seed: int,
                  k_range, alpha_grid, options: ClusterOptions, B: int) -> dict:
    """One Monte Carlo replicate; never raises for selection failures."""
    rng = np.random.default_rng(replicate_seed(seed, index))
    data = generate_scenario(spec, rng)
    cluster_seed = int(rng.integers(2**63))
    gap_seed = int(rng.integers(2**63))
    opts = ClusterOptions(options.max_iterations, options.restarts, cluster_seed,
                          options.tolerance, options.distance, options.measure)
    record = {"replicate": index, "cluster_seed": cluster_seed, "selected": {}, "alpha": {},
              "errors": {}}
    inputs = SelectionInputs(data, k_range, alpha_grid, opts)
    for m in methods:
        try:
            trace = evaluate(inputs, m, B=B, gap_seed=gap_seed)
        except TWClustError as exc:
            record["errors"][m] = f"{type(exc).__name__}: {exc}"
            continue
        record["selected"][m] = trace.k_opt
        record["alpha"][m] = trace.alpha_opt
    return record


def monte_carlo(spec, methods: Sequence[str] = METHODS, distance: str = TW, runs: int = 100,
                k_range=DEFAULT_K_RANGE, alpha_grid=DEFAULT_ALPHAS, seed: int = 0,
                options: Optional[ClusterOptions] = None, B: int = DEFAULT_B,
                workers: int = 1) -> FrequencyTable:
    """Tally selected ``k`` per method over ``runs`` simulated datasets.

    Replicate ``i`` draws everything from a seed derived from ``(seed, i)``,
    so the table does not depend on ``workers`` or execution order. All
    methods of a replicate share one clustering grid.
    """
    if isinstance(spec, int):
        spec = get_scenario(spec)
    if runs < 1:
        raise ParameterError("runs must be at least 1")
    methods = [m.lower() for m in methods]
    for m in methods:
        if m not in METHODS:
            raise ParameterError(f"unknown method {m!r}")
    base = options or ClusterOptions()
    options = ClusterOptions(base.max_iterations, base.restarts, base.seed, base.tolerance,
                             distance, base.measure)
    k_range = tuple(k_range)
    alpha_grid = tuple(alpha_grid)
    job = partial(run_replicate, spec, methods, seed=seed, k_range=k_range,
                  alpha_grid=alpha_grid, options=options, B=B)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_call_index, [job] * runs, range(runs)))
    else:
        records = [job(i) for i in range(runs)]

    counts = {m: {k: 0 for k in k_range} for m in methods}
    failures = {m: 0 for m in methods}
    for rec in records:
        for m in methods:
            if m in rec["selected"]:
                k = rec["selected"][m]
                counts[m][k] = counts[m].get(k, 0) + 1
            else:
                failures[m] += 1
    config = {
        "scenario": spec.id, "r": spec.r, "noise_per_curve": spec.noise_per_curve,
        "distance": distance, "runs": runs, "seed": seed,
        "methods": methods, "k_range": list(k_range),
        "alpha_grid": list(alpha_grid) if distance == TW else None,
        "m": options.measure.m, "restarts": options.restarts,
        "max_iterations": options.max_iterations, "B": B,
    }
    return FrequencyTable(spec.id, distance, runs, k_range, counts, failures, records, config)


def _call_index(job, index):
    return job(index)
