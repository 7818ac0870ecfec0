"""Outcome tables, matrix files and the SVG summaries (bar and button plots)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .harness import CATEGORIES, IMPROVEMENT, SUCCESS, TrialOutcome

OUTCOME_COLUMNS = ("trial", "seed", "k", "category", "recovered", "Q",
                   "residual_rel", "iterations", "wall_ms", "rel_error", "note")

# pinned canvas of the button plot
X_MIN, X_MAX = 0.9, 1.05
Y_FLOOR, Y_MAX = 1e-16, 1.0
PLOT_W, PLOT_H = 600.0, 400.0
MARGIN = 50.0
UNIT = 6.0


def fmt(v):
    """17 significant digits, enough to round-trip any double."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


# ------------------------------------------------------------- outcome CSV

def outcomes_to_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_COLUMNS)
    for o in outcomes:
        w.writerow([o.trial, o.seed, "" if o.k is None else o.k, o.category,
                    "true" if o.recovered else "false", fmt(o.Q), fmt(o.residual_rel),
                    o.iterations, fmt(o.wall_ms), fmt(o.rel_error), o.note])
    return buf.getvalue()


def outcomes_from_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0][: len(OUTCOME_COLUMNS) - 2]) != OUTCOME_COLUMNS[:-2]:
        raise ValueError("not an outcome table: unexpected header")
    header = rows[0]
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        rec = dict(zip(header, row))
        try:
            cat = rec["category"]
            if cat not in CATEGORIES:
                raise ValueError(f"unknown category {cat!r}")
            out.append(TrialOutcome(
                trial=int(rec["trial"]), seed=int(rec["seed"]),
                k=None if rec["k"] == "" else int(rec["k"]), category=cat,
                recovered=rec["recovered"] == "true", Q=float(rec["Q"]),
                residual_rel=float(rec["residual_rel"]), iterations=int(rec["iterations"]),
                wall_ms=float(rec["wall_ms"]), rel_error=float(rec.get("rel_error", "nan")),
                note=rec.get("note", ""),
            ))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return out


# -------------------------------------------------------------- matrix CSV

def matrix_to_csv(X) -> str:
    """First line ``rows,cols``, then the entries row by row."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lines = [f"{X.shape[0]},{X.shape[1]}"]
    lines += [",".join(fmt(v) for v in row) for row in X]
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str):
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or len(rows[0]) != 2:
        raise ValueError("line 1: expected header 'rows,cols'")
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
    except ValueError as exc:
        raise ValueError("line 1: expected integer dimensions") from exc
    if len(rows) - 1 != n:
        raise ValueError(f"expected {n} rows, found {len(rows) - 1}")
    X = np.empty((n, m))
    for i, row in enumerate(rows[1:]):
        if len(row) != m:
            raise ValueError(f"line {i + 2}: expected {m} values, found {len(row)}")
        X[i] = [float(v) for v in row]
    return X


# ------------------------------------------------------------- button plot

@dataclass(frozen=True, order=True)
class ButtonCircle:
    x: float
    y: float
    s: float


def _to_canvas(x, y):
    px = MARGIN + (x - X_MIN) / (X_MAX - X_MIN) * PLOT_W
    t = (math.log10(y) - math.log10(Y_FLOOR)) / (math.log10(Y_MAX) - math.log10(Y_FLOOR))
    return px, MARGIN + (1.0 - t) * PLOT_H


def _radius(s, unit):
    return math.sqrt(s / math.pi) * unit


def _merge(a: ButtonCircle, b: ButtonCircle) -> ButtonCircle:
    s = a.s + b.s
    x = (a.s * a.x + b.s * b.x) / s
    y = math.exp((a.s * math.log(a.y) + b.s * math.log(b.y)) / s)
    return ButtonCircle(x, y, s)


def button_merge(points, unit=UNIT):
    """Merge overlapping circles until no two overlap on the pinned canvas.

    Each merge replaces the closest overlapping pair by one circle with the
    summed area, the area-weighted mean x and the area-weighted geometric
    mean y.
    """
    circles = sorted(ButtonCircle(float(x), float(y), float(s)) for x, y, s in points)
    for c in circles:
        if c.s <= 0 or c.y <= 0:
            raise ValueError("button points need positive area and positive y")
    while True:
        best = None
        pos = [_to_canvas(c.x, c.y) for c in circles]
        for i in range(len(circles)):
            for j in range(i + 1, len(circles)):
                d = math.dist(pos[i], pos[j])
                if d < _radius(circles[i].s, unit) + _radius(circles[j].s, unit):
                    if best is None or d < best[0]:
                        best = (d, i, j)
        if best is None:
            return circles
        _, i, j = best
        merged = _merge(circles[i], circles[j])
        circles = sorted([c for t, c in enumerate(circles) if t not in (i, j)] + [merged])


def button_points(outcomes):
    """Clipped (x, y, s) for each outcome: x = Q, y = relative error."""
    pts = []
    for o in outcomes:
        q = 1.05 if math.isnan(o.Q) else o.Q
        e = 1.0 if math.isnan(o.rel_error) else o.rel_error
        pts.append((max(X_MIN, min(q, X_MAX)), max(Y_FLOOR, min(e, Y_MAX)), 1.0))
    return pts


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
            f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">\n'
            + "".join(body) + "</svg>\n")


def emit_button(outcomes, unit=UNIT):
    """SVG and CSV of the merged button plot."""
    circles = button_merge(button_points(outcomes), unit)
    body = [f'<rect x="{MARGIN:.0f}" y="{MARGIN:.0f}" width="{PLOT_W:.0f}" '
            f'height="{PLOT_H:.0f}" fill="none" stroke="black"/>\n']
    for e in range(-16, 1, 4):
        _, py = _to_canvas(X_MIN, 10.0**e)
        body.append(f'<text x="{MARGIN - 6:.0f}" y="{py:.2f}" font-size="10" '
                    f'text-anchor="end">1e{e}</text>\n')
    for xv in (0.9, 0.95, 1.0, 1.05):
        px, _ = _to_canvas(xv, Y_FLOOR)
        body.append(f'<text x="{px:.2f}" y="{MARGIN + PLOT_H + 14:.0f}" font-size="10" '
                    f'text-anchor="middle">{xv:.2f}</text>\n')
    for c in circles:
        px, py = _to_canvas(c.x, c.y)
        r = _radius(c.s, unit)
        body.append(f'<circle cx="{px:.4f}" cy="{py:.4f}" r="{r:.4f}" '
                    f'fill="steelblue" fill-opacity="0.4" stroke="steelblue"/>\n')
        body.append(f'<path d="M{px - 3:.4f},{py:.4f}H{px + 3:.4f}M{px:.4f},{py - 3:.4f}'
                    f'V{py + 3:.4f}" stroke="black"/>\n')
    svg = _svg(PLOT_W + 2 * MARGIN, PLOT_H + 2 * MARGIN, body)
    rows = ["x,y,s"] + [f"{fmt(c.x)},{fmt(c.y)},{fmt(c.s)}" for c in circles]
    return svg, "\n".join(rows) + "\n"


# ---------------------------------------------------------------- bar plot

def bar_counts(outcomes):
    """Per-k success and improvement counts plus the number of fails."""
    ks = sorted({o.k for o in outcomes if o.k is not None and o.category in (SUCCESS, IMPROVEMENT)})
    succ = {k: 0 for k in ks}
    impr = {k: 0 for k in ks}
    fails = 0
    for o in outcomes:
        if o.category == SUCCESS and o.k is not None:
            succ[o.k] += 1
        elif o.category == IMPROVEMENT and o.k is not None:
            impr[o.k] += 1
        else:
            fails += 1
    return ks, succ, impr, fails


def emit_bar(outcomes):
    """SVG and CSV of the sensitivity bars; improvements point downwards."""
    ks, succ, impr, fails = bar_counts(outcomes)
    rows = ["bar,success,improvement,fail"]
    rows += [f"{k},{succ[k]},{impr[k]},0" for k in ks]
    if fails:
        rows.append(f"fail,0,0,{fails}")
    labels = [str(k) for k in ks] + (["fail"] if fails else [])
    top = max([succ[k] for k in ks] + [fails, 1])
    bottom = max([impr[k] for k in ks] + [0])
    W = max(len(labels), 1) * 30.0 + 2 * MARGIN
    scale = PLOT_H / (top + bottom)
    y0 = MARGIN + top * scale
    body = [f'<line x1="{MARGIN:.0f}" y1="{y0:.4f}" x2="{W - MARGIN:.0f}" y2="{y0:.4f}" stroke="black"/>\n']
    for i, lab in enumerate(labels):
        x = MARGIN + 30.0 * i + 5
        up = fails if lab == "fail" else succ[int(lab)]
        down = 0 if lab == "fail" else impr[int(lab)]
        colour = "firebrick" if lab == "fail" else "seagreen"
        if up:
            body.append(f'<rect x="{x:.1f}" y="{y0 - up * scale:.4f}" width="20" '
                        f'height="{up * scale:.4f}" fill="{colour}"/>\n')
        if down:
            body.append(f'<rect x="{x:.1f}" y="{y0:.4f}" width="20" '
                        f'height="{down * scale:.4f}" fill="darkorange"/>\n')
        body.append(f'<text x="{x + 10:.1f}" y="{MARGIN + PLOT_H + 14:.0f}" font-size="10" '
                    f'text-anchor="middle">{lab}</text>\n')
    svg = _svg(W, PLOT_H + 2 * MARGIN, body)
    return svg, "\n".join(rows) + "\n"
