"""Brute-force reference implementations used only by the tests.

Plain Python loops over lists, written straight from the definitions and
sharing no code with the package.
"""

import math
import statistics


def windows(r, m):
    """0-based windows of (m-1)/2 index neighbours on each side."""
    half = (m - 1) // 2
    return [[s for s in range(r) if abs(s - j) <= half] for j in range(r)]


def anova(xi, m):
    """MST, MSE of the literal augmented one-way layout."""
    r = len(xi)
    levels = [[xi[s] for s in w] for w in windows(r, m)]
    means = [sum(lv) / len(lv) for lv in levels]
    everything = [x for lv in levels for x in lv]
    grand = sum(everything) / len(everything)
    mst = m / (r - 1) * sum((mu - grand) ** 2 for mu in means)
    sse = 0.0
    for lv, mu in zip(levels, means):
        for x in lv:
            sse += (x - mu) ** 2
    mse = sse / (r * (m - 1))
    return mst, mse


def tau_sq(xi):
    r = len(xi)
    total = 0.0
    for s in range(2, r - 1):  # 1-based s = 2 .. r-2
        a = xi[s - 1] - xi[s - 2]
        b = xi[s + 1] - xi[s]
        total += a * a * b * b
    return total / (4 * (r - 3))


def t_stat(xi, m, scale=None):
    """T, with residuals constant up to rounding at ``scale`` counted as parallel."""
    r = len(xi)
    if scale is None:
        scale = max(abs(x) for x in xi)
    if max(xi) - min(xi) <= 1e-12 * scale:
        return 0.0
    mst, mse = anova(xi, m)
    ts = tau_sq(xi)
    if ts == 0:
        return 0.0
    return abs(math.sqrt(r) * (mst - mse) / (math.sqrt(ts) * math.sqrt(2 * m * (2 * m - 1) / (3 * (m - 1)))))


def w_stat(y, c, floor=1e-12):
    r = len(y)
    num = statistics.fmean(y) - statistics.fmean(c)
    return abs(num / math.sqrt((statistics.variance(y) + statistics.variance(c)) / r + floor))


def tw(y, c, alpha, m):
    xi = [a - b for a, b in zip(y, c)]
    scale = max(abs(v) for v in list(y) + list(c))
    return math.sqrt(alpha * t_stat(xi, m, scale) + (1 - alpha) * w_stat(y, c))


def mean_curve(curves):
    r = len(curves[0])
    return [sum(c[j] for c in curves) / len(curves) for j in range(r)]


def wcs(curves, labels, alpha, m):
    total = 0.0
    for ell in sorted(set(labels)):
        members = [curves[i] for i in range(len(curves)) if labels[i] == ell]
        center = mean_curve(members)
        for y in members:
            total += tw(y, center, alpha, m)
    return total


def bcs(curves, labels, alpha, m):
    overall = mean_curve(curves)
    total = 0.0
    for ell in sorted(set(labels)):
        members = [curves[i] for i in range(len(curves)) if labels[i] == ell]
        center = mean_curve(members)
        total += len(members) * tw(center, overall, alpha, m)
    return total


def silhouette(curves, labels, alpha, m):
    n = len(curves)
    total = 0.0
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            continue
        a = sum(tw(curves[i], curves[j], alpha, m) for j in same) / len(same)
        b = math.inf
        for ell in set(labels):
            if ell == labels[i]:
                continue
            other = [j for j in range(n) if labels[j] == ell]
            b = min(b, sum(tw(curves[i], curves[j], alpha, m) for j in other) / len(other))
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / n


def ch(wcs_k, bcs_k, k, n):
    return (bcs_k / (k - 1)) / (wcs_k / (n - k))


def kl(wcs_by_k, k, r):
    def diff(q):
        return (q - 1) ** (2 / r) * wcs_by_k[q - 1] - q ** (2 / r) * wcs_by_k[q]
    return abs(diff(k) / diff(k + 1))


def hartigan(wcs_by_k, k, n):
    return (n - k - 1) * (wcs_by_k[k] / wcs_by_k[k + 1] - 1)


def jump_direct(d, t):
    out, prev = [], 0.0
    for dk in d:
        cur = dk ** (-t)
        out.append(cur - prev)
        prev = cur
    return out


def distortion(curves, centers, alpha, m):
    return sum(min(tw(y, c, alpha, m) for c in centers) for y in curves) / len(curves)


def lloyd_l2(curves, init_idx, max_iter=100):
    """Textbook Lloyd iteration on squared Euclidean distance."""
    centers = [list(curves[i]) for i in init_idx]
    labels = None
    for _ in range(max_iter):
        new = []
        for y in curves:
            d = [sum((a - b) ** 2 for a, b in zip(y, c)) for c in centers]
            new.append(d.index(min(d)))
        if new == labels:
            break
        labels = new
        for ell in range(len(centers)):
            members = [curves[i] for i in range(len(curves)) if labels[i] == ell]
            if members:
                centers[ell] = mean_curve(members)
    return labels, centers
