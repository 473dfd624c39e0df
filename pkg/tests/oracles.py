"""Independent reference implementations used as test oracles.

Everything here is deliberately slow and literal: plain Python loops over raw
records, no shared code with the package beyond reading schema metadata.
"""

from __future__ import annotations

import math
from collections import Counter
from itertools import combinations


def one_hot(record, schema):
    out = []
    for a, v in zip(schema.attributes, record):
        if a.is_categorical:
            out += [1.0 if v == u else 0.0 for u in a.kind.values]
    return out


def minmax(record, schema, mins, maxs):
    out = []
    j = 0
    for a, v in zip(schema.attributes, record):
        if not a.is_categorical:
            lo, hi = mins[j], maxs[j]
            x = 0.0 if hi == lo else (float(v) - lo) / (hi - lo)
            out.append(min(1.0, max(0.0, x)))
            j += 1
    return out


def cosine(u, v):
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu == 0 and nv == 0:
        return 1.0
    if nu == 0 or nv == 0:
        return 0.0
    return sum(x * y for x, y in zip(u, v)) / (nu * nv)


def minkowski(u, v, p):
    return sum(abs(x - y) ** p for x, y in zip(u, v)) ** (1.0 / p)


def bounds(records, schema):
    mins, maxs = [], []
    for j, a in enumerate(schema.attributes):
        if not a.is_categorical:
            col = [float(r[j]) for r in records]
            mins.append(min(col))
            maxs.append(max(col))
    return mins, maxs


def distance(r1, r2, schema, mins, maxs, metric="cosine", p=2):
    F = schema.n_attributes
    n_cat = sum(a.is_categorical for a in schema.attributes)
    n_cont = F - n_cat
    h1, h2 = one_hot(r1, schema), one_hot(r2, schema)
    c1, c2 = minmax(r1, schema, mins, maxs), minmax(r2, schema, mins, maxs)
    if metric == "cosine":
        d = 1.0
        if n_cat:
            d -= n_cat / F * cosine(h1, h2)
        if n_cont:
            d -= n_cont / F * cosine(c1, c2)
        return min(1.0, max(0.0, d))
    d = 0.0
    if n_cat:
        d += n_cat / F * minkowski(h1, h2, p)
    if n_cont:
        d += n_cont / F * minkowski(c1, c2, p)
    return d


def knn_scores(records, schema, k, metric="cosine", p=2):
    """Full pairwise matrix, sort each row (self excluded by index), average the first k."""
    return knn_scores_multi(records, schema, [k], metric, p)[k]


def knn_scores_multi(records, schema, ks, metric="cosine", p=2):
    """Like knn_scores for several k at once; returns {k: scores}."""
    mins, maxs = bounds(records, schema)
    n = len(records)
    out = {k: [] for k in ks}
    for i in range(n):
        ds = sorted(distance(records[i], records[j], schema, mins, maxs, metric, p) for j in range(n) if j != i)
        for k in ks:
            out[k].append(sum(ds[:k]) / k)
    return out


def top_r_ranking(scores, R):
    """Indices of the R largest scores; ties at the boundary resolved by index (oracle only)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:R]


def count_query(records, schema, target, attrs):
    n = 0
    for r in records:
        ok = True
        for j in attrs:
            if schema.attributes[j].is_categorical:
                ok = r[j] == target[j]
            else:
                ok = float(r[j]) <= float(target[j])
            if not ok:
                break
        n += ok
    return n


def auc_pairs(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly; ties count half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def mutual_information(xs, ys):
    """Empirical MI in nats between two sequences of hashable values."""
    n = len(xs)
    pxy = Counter(zip(xs, ys))
    px, py = Counter(xs), Counter(ys)
    return sum(c / n * math.log(c * n / (px[x] * py[y])) for (x, y), c in pxy.items())


def nearest_rank(values, q):
    s = sorted(values)
    return s[max(1, math.ceil(q / 100.0 * len(s))) - 1]


def total_variation(a, b):
    """TV distance between two empirical distributions over hashable outcomes."""
    ca, cb = Counter(a), Counter(b)
    na, nb = len(a), len(b)
    return 0.5 * sum(abs(ca[k] / na - cb[k] / nb) for k in set(ca) | set(cb))


def nonempty_subsets(F):
    return [set(c) for r in range(1, F + 1) for c in combinations(range(F), r)]
