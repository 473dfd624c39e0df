"""Experiment reports and plots.

A report is plain text in two parts. The header carries run metadata that
legitimately changes between runs (timestamp, wall time, worker count). The
body below the ``BODY_MARKER`` line is a pure function of data, config and
seed: the config echo, one line per AUC, per-group summaries and a JSON
machine section from which the report (and its plots) can be rebuilt.

Plots are SVG written directly, so no plotting library is needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from html import escape
from pathlib import Path

import numpy as np

BODY_MARKER = "---- body ----"
MACHINE_MARKER = "[machine]"


@dataclass(frozen=True)
class Entry:
    group: str  # sweep point label such as "k=5", or "-" without a sweep
    method: str
    row_id: int
    attack: str
    epsilon: float | None
    auc: float


@dataclass
class ExperimentReport:
    config: dict
    entries: list
    selections: dict = field(default_factory=dict)  # group -> method -> row ids
    sweep: tuple | None = None  # (parameter, group labels in sweep order)
    flags: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    def __post_init__(self):
        for e in self.entries:
            if not 0.0 <= e.auc <= 1.0:
                raise ValueError(f"AUC {e.auc} outside [0, 1]")

    def groups(self) -> list:
        if self.sweep:
            return list(self.sweep[1])
        seen = []
        for e in self.entries:
            if e.group not in seen:
                seen.append(e.group)
        return seen

    def summary(self) -> list:
        """(group, method, attack, mean, std, n), std with ddof 0."""
        buckets = {}
        for e in self.entries:
            buckets.setdefault((e.group, e.method, e.attack), []).append(e.auc)
        order = {g: i for i, g in enumerate(self.groups())}
        methods = _unique(e.method for e in self.entries)
        attacks = _unique(e.attack for e in self.entries)
        keys = sorted(buckets, key=lambda k: (order[k[0]], methods.index(k[1]), attacks.index(k[2])))
        return [(*k, float(np.mean(buckets[k])), float(np.std(buckets[k])), len(buckets[k])) for k in keys]

    def machine(self) -> dict:
        return {
            "config": self.config,
            "sweep": list(self.sweep) if self.sweep else None,
            "selections": self.selections,
            "flags": self.flags,
            "entries": [
                [e.group, e.method, e.row_id, e.attack, _num(e.epsilon), e.auc] for e in self.entries
            ],
        }

    def body(self) -> str:
        out = ["[config]"]
        out += [f"{k} = {_show(v)}" for k, v in self.config.items()]
        out += ["", "[selections]"]
        for g, by_method in self.selections.items():
            for m, rows in by_method.items():
                out.append(f"{g}\t{m}\t{' '.join(map(str, rows))}")
        out += ["", "[entries]", "group\tmethod\trow_id\tattack\tepsilon\tauc"]
        for e in self.entries:
            out.append(f"{e.group}\t{e.method}\t{e.row_id}\t{e.attack}\t{_show(e.epsilon)}\t{e.auc!r}")
        out += ["", "[summary]", "group\tmethod\tattack\tmean_auc\tstd_auc\tn"]
        for g, m, a, mean, std, n in self.summary():
            out.append(f"{g}\t{m}\t{a}\t{mean:.4f}\t{std:.4f}\t{n}")
        if self.flags:
            out += ["", "[flags]"]
            out += [f"{k} = {_show(v)}" for k, v in self.flags.items()]
        out += ["", MACHINE_MARKER, json.dumps(self.machine(), sort_keys=True)]
        return "\n".join(out) + "\n"

    def render(self) -> str:
        head = ["# vulnrec experiment report"]
        head += [f"{k}: {v}" for k, v in self.runtime.items()]
        return "\n".join(head) + "\n" + BODY_MARKER + "\n" + self.body()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        return path


def _unique(items) -> list:
    out = []
    for x in items:
        if x not in out:
            out.append(x)
    return out


def _num(v):
    if v is None:
        return None
    return "inf" if math.isinf(v) else v


def _show(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_show(x) for x in v) + "]"
    return str(v)


def extract_body(text: str) -> str:
    """The deterministic part of a rendered report."""
    head, sep, body = text.partition(BODY_MARKER + "\n")
    if not sep:
        raise ValueError("not a vulnrec report: body marker missing")
    return body


def parse_report(text: str) -> ExperimentReport:
    """Rebuild a report from its machine section."""
    body = extract_body(text)
    _, sep, tail = body.partition(MACHINE_MARKER + "\n")
    if not sep:
        raise ValueError("report has no machine section")
    m = json.loads(tail.strip().splitlines()[0])
    entries = [
        Entry(g, meth, int(rid), att, None if eps is None else float(eps), float(auc))
        for g, meth, rid, att, eps, auc in m["entries"]
    ]
    runtime = {}
    for line in text.partition(BODY_MARKER)[0].splitlines()[1:]:
        key, _, val = line.partition(": ")
        runtime[key] = val
    sweep = (m["sweep"][0], list(m["sweep"][1])) if m["sweep"] else None
    return ExperimentReport(m["config"], entries, m["selections"], sweep, m["flags"], runtime)


# -- SVG plots ---------------------------------------------------------------

_W, _H = 640, 400
_L, _R, _T, _B = 70, 160, 40, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg(parts: list, title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">'
    )
    bg = f'<rect width="{_W}" height="{_H}" fill="white"/>'
    t = f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>'
    return "\n".join([head, bg, t, *parts, "</svg>"]) + "\n"


def _y_axis(lo: float, hi: float, label: str) -> tuple:
    def y(v):
        return _T + (hi - v) / (hi - lo) * (_H - _T - _B)

    parts = [f'<line x1="{_L}" y1="{_T}" x2="{_L}" y2="{_H - _B}" stroke="black"/>']
    for i in range(6):
        v = lo + (hi - lo) * i / 5
        parts.append(f'<line x1="{_L - 4}" y1="{y(v):.1f}" x2="{_W - _R}" y2="{y(v):.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{_L - 8}" y="{y(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    parts.append(
        f'<text x="18" y="{(_T + _H - _B) / 2}" transform="rotate(-90 18 {(_T + _H - _B) / 2})" '
        f'text-anchor="middle">{escape(label)}</text>'
    )
    return y, parts


def box_plot(samples: dict, title: str = "AUC per selection method", ylabel: str = "AUC") -> str:
    """One box (quartiles, whiskers at min/max) plus the raw points per key."""
    keys = list(samples)
    y, parts = _y_axis(0.0, 1.0, ylabel)
    width = (_W - _L - _R) / max(len(keys), 1)
    for i, key in enumerate(keys):
        vals = np.sort(np.asarray(samples[key], dtype=np.float64))
        cx = _L + width * (i + 0.5)
        color = _COLORS[i % len(_COLORS)]
        if len(vals):
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            bw = width * 0.3
            parts.append(f'<line x1="{cx}" y1="{y(vals[0]):.1f}" x2="{cx}" y2="{y(vals[-1]):.1f}" stroke="{color}"/>')
            parts.append(
                f'<rect x="{cx - bw:.1f}" y="{y(q3):.1f}" width="{2 * bw:.1f}" '
                f'height="{max(y(q1) - y(q3), 0.5):.1f}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>'
            )
            parts.append(f'<line x1="{cx - bw:.1f}" y1="{y(med):.1f}" x2="{cx + bw:.1f}" y2="{y(med):.1f}" stroke="{color}" stroke-width="2"/>')
            for v in vals:
                parts.append(f'<circle cx="{cx}" cy="{y(v):.1f}" r="2.5" fill="{color}"/>')
        parts.append(f'<text x="{cx}" y="{_H - _B + 18}" text-anchor="middle">{escape(str(key))}</text>')
    return _svg(parts, title)


def line_plot(xs: list, series: dict, title: str, xlabel: str, ylabel: str = "mean AUC") -> str:
    """Mean line with a +-std band per series; ``series[name] = (means, stds)``."""
    y, parts = _y_axis(0.0, 1.0, ylabel)
    n = len(xs)
    span = _W - _L - _R

    def x(i):
        return _L + (span * (i + 0.5) / n if n else 0)

    step = max(1, n // 12)
    for i, label in enumerate(xs):
        if i % step == 0 or i == n - 1:
            parts.append(f'<text x="{x(i):.1f}" y="{_H - _B + 18}" text-anchor="middle">{escape(str(label))}</text>')
    parts.append(f'<text x="{_L + span / 2}" y="{_H - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    for si, (name, (means, stds)) in enumerate(series.items()):
        color = _COLORS[si % len(_COLORS)]
        upper = [f"{x(i):.1f},{y(min(1.0, m + s)):.1f}" for i, (m, s) in enumerate(zip(means, stds))]
        lower = [f"{x(i):.1f},{y(max(0.0, m - s)):.1f}" for i, (m, s) in reversed(list(enumerate(zip(means, stds))))]
        parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.15"/>')
        pts = " ".join(f"{x(i):.1f},{y(m):.1f}" for i, m in enumerate(means))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = _T + 16 * si + 10
        parts.append(f'<line x1="{_W - _R + 10}" y1="{ly}" x2="{_W - _R + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - _R + 35}" y="{ly + 4}">{escape(name)}</text>')
    return _svg(parts, title)


def write_plots(report: ExperimentReport, out_dir) -> list:
    """Box plot per group and attack; with a sweep, also one line plot per attack."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    attacks = _unique(e.attack for e in report.entries)
    methods = _unique(e.method for e in report.entries)
    for attack in attacks:
        if report.sweep:
            param, labels = report.sweep
            stats = {(g, m): (mean, std) for g, m, a, mean, std, _ in report.summary() if a == attack}
            series = {
                m: ([stats.get((g, m), (math.nan, 0))[0] for g in labels], [stats.get((g, m), (0, 0))[1] for g in labels])
                for m in methods
            }
            xs = [g.split("=", 1)[-1] for g in labels]
            path = out_dir / f"sweep_{param}_{attack}.svg"
            path.write_text(line_plot(xs, series, f"AUC vs {param} ({attack})", param))
            written.append(path)
        for g in report.groups():
            samples = {m: [e.auc for e in report.entries if e.group == g and e.method == m and e.attack == attack] for m in methods}
            tag = "" if g == "-" else "_" + g.replace("=", "-")
            path = out_dir / f"box_{attack}{tag}.svg"
            path.write_text(box_plot(samples, f"AUC per selection method ({attack}{'' if g == '-' else ', ' + g})"))
            written.append(path)
    return written


# -- ranking tables ------------------------------------------------------------


def format_ranking(ranking, row_ids, rare_flags=None, loglik=None) -> str:
    """Tab-separated ranking, most vulnerable first; scores keep full precision."""
    out = [
        "# vulnrec vulnerability ranking",
        f"# k: {ranking.k}",
        f"# metric: {ranking.metric_id}",
        f"# rows: {len(ranking)}",
        "rank\tposition\trow_id\tscore\trare_attrs\tlog_likelihood",
    ]
    for rank, i in enumerate(ranking.order, start=1):
        rare = "-" if rare_flags is None else int(rare_flags[i])
        ll = "-" if loglik is None else repr(float(loglik[i]))
        out.append(f"{rank}\t{int(i)}\t{int(row_ids[i])}\t{float(ranking.scores[i])!r}\t{rare}\t{ll}")
    return "\n".join(out) + "\n"


def parse_ranking(text: str):
    """Inverse of :func:`format_ranking`; returns a ``VulnerabilityRanking``."""
    from .selection import VulnerabilityRanking

    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("# ") and ": " in line:
            key, _, val = line[2:].partition(": ")
            meta[key] = val
        elif line and not line.startswith(("#", "rank\t")):
            rows.append(line.split("\t"))
    n = int(meta["rows"])
    if len(rows) != n:
        raise ValueError(f"ranking declares {n} rows but lists {len(rows)}")
    order = np.array([int(r[1]) for r in rows], dtype=np.int64)
    scores = np.empty(n)
    scores[order] = [float(r[3]) for r in rows]
    return VulnerabilityRanking(scores, order, int(meta["k"]), meta["metric"])
