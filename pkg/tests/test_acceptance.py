"""Acceptance criteria, each run at its stated tolerance.

Every test reports one PASS/FAIL line (collected into the terminal summary
by ``conftest.py``) before asserting. The Monte Carlo checks are marked
``slow``; together they take roughly 20 minutes on one core.
"""

import json
import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

import oracles
from twclust.cli import main
from twclust.clustering import L2, ClusterOptions, cluster
from twclust.data import from_array
from twclust.measure import (
    MeasureConfig,
    anova_mst_mse,
    build_windows,
    t_parallelism,
    tau_hat_sq,
    tw_measure,
    w_mean_diff,
)
from twclust.selection import (
    bcs,
    ch_index,
    gap_statistic,
    hartigan_index,
    jump_differences_direct,
    jump_log_differences,
    kl_index,
    pairwise_dissimilarity,
    silhouette,
    silhouette_from_distances,
    wcs,
)
from twclust.simulation import get_scenario, monte_carlo

SEED = 0
REL = 1e-10


def tally(table, method, k):
    return table.frequency(method, k)


@pytest.mark.slow
def test_criterion_1_scenario1_tw(report):
    methods = ["ch", "hartigan", "silhouette", "jump"]
    table = monte_carlo(get_scenario(1), methods, "tw", runs=25, seed=SEED)
    hits = {m: tally(table, m, 2) for m in methods}
    ok = all(h >= 22 for h in hits.values())
    report(1, ok, f"Scenario 1 TW, K=2 in >= 22/25 runs: {hits}; full table {table.counts}")
    assert ok


@pytest.mark.slow
def test_criterion_2_scenario4_tw(report):
    methods = ["ch", "kl", "hartigan", "silhouette", "jump"]
    table = monte_carlo(get_scenario(4), methods, "tw", runs=10, seed=SEED)
    hits = {m: tally(table, m, 5) for m in methods}
    ok = all(h >= 8 for h in hits.values())
    report(2, ok, f"Scenario 4 TW, K=5 in >= 8/10 runs: {hits}; full table {table.counts}")
    assert ok


@pytest.mark.slow
def test_criterion_3_scenario1_l2_hartigan(report):
    table = monte_carlo(get_scenario(1), ["hartigan"], L2, runs=25, seed=SEED)
    hits = tally(table, "hartigan", 1)
    ok = hits >= 15
    report(3, ok, f"Scenario 1 L2 Hartigan, K=1 in >= 15/25 runs: {hits}; "
                  f"full table {table.counts['hartigan']}")
    assert ok


@pytest.mark.slow
def test_criterion_4_scenario3_silhouette(report):
    table = monte_carlo(get_scenario(3), ["silhouette"], "tw", runs=25, seed=SEED)
    hits = tally(table, "silhouette", 2)
    ok = hits >= 20
    report(4, ok, f"Scenario 3 TW Silhouette, K=2 in >= 20/25 runs: {hits}; "
                  f"full table {table.counts['silhouette']}")
    assert ok


def close(a, b):
    return math.isclose(a, b, rel_tol=REL, abs_tol=0.0) or (math.isinf(a) and a == b)


def test_criterion_5_oracle_equivalence(report):
    rng = np.random.default_rng(20240605)
    instances, mismatches = 0, []
    while instances < 1000:
        n = int(rng.integers(4, 11))
        r = int(rng.integers(5, 13))
        m = 3 if r < 7 else int(rng.choice([3, 5]))
        alpha = float(rng.choice([0.0, 1.0, rng.uniform()]))
        values = rng.normal(size=(n, r)) * rng.uniform(0.5, 3, size=(n, 1)) + rng.normal(0, 2, (n, 1))
        ds = from_array(values)
        curves = values.tolist()
        cfg = MeasureConfig(alpha=alpha, m=m)
        windows = build_windows(ds.grid, m)
        opts = ClusterOptions(restarts=1, seed=instances, measure=cfg)

        checks = []
        xi = values[0] - values[1]
        got_mst, got_mse = anova_mst_mse(xi, windows)
        want_mst, want_mse = oracles.anova(list(xi), m)
        checks += [("mst", got_mst, want_mst), ("mse", got_mse, want_mse),
                   ("tau", tau_hat_sq(xi), oracles.tau_sq(list(xi)))]

        kmax = min(4, n - 1)
        w_pkg, b_pkg, w_ref, b_ref = {}, {}, {}, {}
        for k in range(1, kmax + 1):
            c = cluster(ds, k, opts)
            labels = c.assignments.tolist()
            w_pkg[(k, alpha)] = wcs(c, ds, alpha, measure=cfg)
            b_pkg[(k, alpha)] = bcs(c, alpha, ds.grid, measure=cfg)
            w_ref[k] = oracles.wcs(curves, labels, alpha, m)
            b_ref[k] = oracles.bcs(curves, labels, alpha, m)
            checks += [(f"wcs k={k}", w_pkg[(k, alpha)], w_ref[k]),
                       (f"bcs k={k}", b_pkg[(k, alpha)], b_ref[k])]
            if k >= 2:
                checks.append((f"silhouette k={k}", silhouette(c, ds, alpha, measure=cfg),
                               oracles.silhouette(curves, labels, alpha, m)))

        ch = ch_index(w_pkg, b_pkg, n).values
        hart = hartigan_index(w_pkg, n).values
        for k in range(1, kmax + 1):
            if k >= 2:
                checks.append((f"ch k={k}", ch[(k, alpha)], oracles.ch(w_ref[k], b_ref[k], k, n)))
            if k < kmax:
                checks.append((f"hartigan k={k}", hart[(k, alpha)], oracles.hartigan(w_ref, k, n)))
        if kmax >= 3:
            kl = kl_index(w_pkg, r).values
            for k in range(2, kmax):
                checks.append((f"kl k={k}", kl[(k, alpha)], oracles.kl(w_ref, k, r)))

        for name, got, want in checks:
            if not close(got, want):
                mismatches.append((instances, name, got, want))
        instances += 1
    ok = not mismatches
    report(5, ok, f"{instances} random instances (n <= 10, r <= 12) vs loop oracles at rel {REL}: "
                  f"{len(mismatches)} mismatches {mismatches[:3]}")
    assert ok


def test_criterion_6_properties(report):
    rng = np.random.default_rng(77)
    draws = 10_000
    violations = {"T shift": 0, "T scale": 0, "W symmetry": 0, "TW self zero": 0,
                  "silhouette range": 0}
    for i in range(draws):
        r = int(rng.integers(5, 40))
        m = int(rng.choice([3, 5])) if r >= 5 else 3
        cfg = MeasureConfig(alpha=float(rng.uniform()), m=m)
        xi = rng.normal(size=r) * rng.uniform(0.1, 10)
        base = t_parallelism(xi, cfg)
        shifted = t_parallelism(xi + rng.uniform(-10, 10), cfg)
        scaled = t_parallelism(xi * math.exp(rng.uniform(-5, 5)) * rng.choice([-1, 1]), cfg)
        if not math.isclose(shifted, base, rel_tol=1e-12):
            violations["T shift"] += 1
        if not math.isclose(scaled, base, rel_tol=1e-12):
            violations["T scale"] += 1
        y, c = rng.normal(size=(2, r)) * rng.uniform(0.1, 10, size=(2, 1))
        if w_mean_diff(y, c, cfg) != w_mean_diff(c, y, cfg):
            violations["W symmetry"] += 1
        if tw_measure(np.zeros(r), y, y, cfg) != 0:
            violations["TW self zero"] += 1

    for i in range(draws):
        n = int(rng.integers(3, 9))
        r = int(rng.integers(5, 10))
        values = rng.normal(size=(n, r)) + rng.normal(0, 2, (n, 1))
        ds = from_array(values)
        k = int(rng.integers(2, n + 1))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        rng.shuffle(labels)
        alpha = float(rng.uniform())
        dist = pairwise_dissimilarity(ds, alpha, measure=MeasureConfig(m=3))
        s = silhouette_from_distances(dist, labels)
        if not -1.0 <= s <= 1.0:
            violations["silhouette range"] += 1
    ok = not any(violations.values())
    report(6, ok, f"{draws} draws per property, violations {violations}")
    assert ok


def test_criterion_7_determinism(report, tmp_path):
    ds = from_array(np.random.default_rng(8).normal(size=(15, 12)))
    opts = ClusterOptions(restarts=4, seed=123)

    def gap_text():
        return json.dumps(gap_statistic(ds, [1, 2, 3], [0.0, 0.5], B=3, seed=99,
                                        options=opts).to_dict(), sort_keys=True)

    def cluster_text():
        c = cluster(ds, 3, opts)
        return json.dumps({"a": c.assignments.tolist(), "c": c.centers.tolist(),
                           "o": c.objective})

    def mc_text():
        return monte_carlo(get_scenario(1), ["ch", "gap"], runs=2, k_range=range(1, 4),
                           alpha_grid=[0.5], seed=5, options=ClusterOptions(restarts=2),
                           B=2).to_json()

    def cli_bytes(name):
        out = tmp_path / name
        main(["reproduce-table", "--scenario", "1", "--runs", "2", "--seed", "7",
              "--methods", "ch,jump", "--kmax", "3", "--alphas", "0,1", "--restarts", "2",
              "-o", str(out)])
        return out.read_bytes()

    same = {
        "gap": gap_text() == gap_text(),
        "clustering restarts": cluster_text() == cluster_text(),
        "monte carlo": mc_text() == mc_text(),
        "cli reproduce-table": cli_bytes("a.json") == cli_bytes("b.json"),
    }
    ok = all(same.values())
    report(7, ok, f"seeded pipelines byte-identical on rerun: {same}")
    assert ok


def test_criterion_8_jump_stability(report):
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(2000):
        t = float(rng.uniform(0.1, 20))
        d = np.sort(rng.uniform(0.05, 5, size=int(rng.integers(2, 10))))[::-1]
        sign, logmag = jump_log_differences(d, t)
        direct = jump_differences_direct(d, t)
        got = sign * np.exp(logmag)
        nz = direct != 0
        worst = max(worst, float(np.max(np.abs(got[nz] - direct[nz]) / np.abs(direct[nz]))))
    agree = worst <= 1e-9

    getcontext().prec = 80
    ordered, finite = True, True
    for _ in range(200):
        d = np.sort(rng.uniform(1e-4, 1e-2, size=8))[::-1]
        sign, logmag = jump_log_differences(d, 100)
        finite &= bool(np.all(np.isfinite(logmag)))
        exact = [Decimal(float(x)) ** -100 for x in d]
        diffs = [exact[0]] + [b - a for a, b in zip(exact, exact[1:])]
        want = sorted(range(len(d)), key=lambda i: diffs[i])
        got = sorted(range(len(d)), key=lambda i: (sign[i], sign[i] * logmag[i]))
        ordered &= want == got
    ok = agree and ordered and finite
    report(8, ok, f"t <= 20 worst relative gap {worst:.2e} (limit 1e-9); "
                  f"t = 100 finite={finite} ordered={ordered}")
    assert ok
