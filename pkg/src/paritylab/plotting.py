"""Accuracy curves as CSV and a dependency-free SVG line plot."""
import csv
import io
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import InvalidInputError

CURVE_COLUMNS = ("model", "step", "accuracy", "loss")
Y_RANGE = (0.45, 1.0)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def fmt(x):
    """Fixed float formatting so reruns give identical bytes."""
    return "nan" if x != x else f"{x:.10g}"


def write_curves(rows, path=None):
    """``rows`` are ``(model, step, accuracy, loss)``; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for model, step, acc, loss in rows:
        w.writerow([model, int(step), fmt(float(acc)), fmt(float(loss))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_curves(path):
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CURVE_COLUMNS:
        raise InvalidInputError(f"{path}: expected header {','.join(CURVE_COLUMNS)}, got {header}")
    series = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 4:
            raise InvalidInputError(f"{path}:{lineno}: expected 4 fields")
        try:
            series.setdefault(row[0], []).append((int(row[1]), float(row[2]), float(row[3])))
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from None
    if not series:
        raise InvalidInputError(f"{path}: no data rows")
    return series


def emit_plot(csv_path, out_path, title="", xlabel="epoch", width=640, height=420):
    """One polyline per model; y fixed to [0.45, 1.0], values outside are clamped."""
    series = read_curves(csv_path)
    left, right, top, bottom = 60, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    steps = [s for pts in series.values() for s, _, _ in pts]
    x0, x1 = min(steps), max(steps)
    span = (x1 - x0) or 1
    lo, hi = Y_RANGE

    def X(s):
        return left + pw * (s - x0) / span

    def Y(a):
        a = min(max(a, lo), hi)
        return top + ph * (hi - a) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(12):
        a = lo + (hi - lo) * i / 11
        parts.append(f'<line x1="{left - 4}" y1="{Y(a):.2f}" x2="{left}" y2="{Y(a):.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{Y(a) + 4:.2f}" font-size="10" text-anchor="end">{a:.2f}</text>')
    for s in sorted(set(steps)) if len(set(steps)) <= 25 else [x0, (x0 + x1) // 2, x1]:
        parts.append(f'<text x="{X(s):.2f}" y="{top + ph + 15}" font-size="10" text-anchor="middle">{s}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(
        f'<text x="15" y="{top + ph / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {top + ph / 2})">accuracy</text>'
    )
    if title:
        parts.append(f'<text x="{left + pw / 2}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{X(s):.2f},{Y(a):.2f}" for s, a, _ in sorted(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"><title>{escape(name)}</title></polyline>')
        ly = top + 15 + 18 * i
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    parts.append("</svg>")
    Path(out_path).write_text("\n".join(parts) + "\n")
    return out_path
