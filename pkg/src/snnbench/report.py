"""Benchmark rows, Pareto-frontier marking, and the accuracy-energy scatter.

The bench.csv column set is fixed so downstream tooling can rely on it:
model,schedule,dataset,acc,f1,ac,mac,params,energy_mj,eta,delta_acc.
Optional fields serialize as empty strings. The scatter is a self-contained
SVG with a log-scale energy axis and a linear accuracy axis; frontier rows
are drawn filled, dominated rows hollow.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

from .profiler import AC_PICOJOULES, MAC_PICOJOULES

BENCH_HEADER = "model,schedule,dataset,acc,f1,ac,mac,params,energy_mj,eta,delta_acc"


@dataclass
class BenchRow:
    model: str
    schedule: str
    dataset: str
    acc: Optional[float]
    f1: Optional[float]
    ac: int
    mac: int
    params: int
    energy_mj: float
    eta: Optional[float] = None
    delta_acc: Optional[float] = None
    retained: str = field(default="", compare=False)  # informative sidecar

    def __post_init__(self):
        expected = (self.ac * AC_PICOJOULES + self.mac * MAC_PICOJOULES) * 1e-9
        if self.energy_mj != expected:
            raise ValueError(
                f"energy_mj {self.energy_mj!r} does not recompute from counts "
                f"(ac={self.ac}, mac={self.mac} -> {expected!r})")


def row_energy_mj(ac: int, mac: int) -> float:
    return (ac * AC_PICOJOULES + mac * MAC_PICOJOULES) * 1e-9


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_bench_csv(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(BENCH_HEADER + "\n")
        for r in rows:
            f.write(",".join([
                r.model, r.schedule, r.dataset,
                _fmt(r.acc), _fmt(r.f1), str(r.ac), str(r.mac), str(r.params),
                _fmt(r.energy_mj), _fmt(r.eta), _fmt(r.delta_acc)]) + "\n")


def read_bench_csv(path: str):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such rows file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != BENCH_HEADER:
        raise ValueError(f"{path}: first line must be the bench header "
                         f"{BENCH_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 11:
            raise ValueError(f"{path}:{lineno}: expected 11 columns, got {len(parts)}")
        opt = lambda s: None if s == "" else float(s)
        rows.append(BenchRow(
            model=parts[0], schedule=parts[1], dataset=parts[2],
            acc=opt(parts[3]), f1=opt(parts[4]),
            ac=int(parts[5]), mac=int(parts[6]), params=int(parts[7]),
            energy_mj=float(parts[8]), eta=opt(parts[9]), delta_acc=opt(parts[10])))
    if not rows:
        raise ValueError(f"{path}: no benchmark rows")
    return rows


def dominates(a: BenchRow, b: BenchRow) -> bool:
    """a beats b when it is at least as accurate and at most as costly,
    strictly better on one axis."""
    a_acc = a.acc if a.acc is not None else 0.0
    b_acc = b.acc if b.acc is not None else 0.0
    return (a_acc >= b_acc and a.energy_mj <= b.energy_mj
            and (a_acc > b_acc or a.energy_mj < b.energy_mj))


def pareto_flags(rows) -> list[bool]:
    return [not any(dominates(other, row) for other in rows if other is not row)
            for row in rows]


def write_summary_csv(rows, flags, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(BENCH_HEADER + ",pareto\n")
        for r, flag in zip(rows, flags):
            f.write(",".join([
                r.model, r.schedule, r.dataset,
                _fmt(r.acc), _fmt(r.f1), str(r.ac), str(r.mac), str(r.params),
                _fmt(r.energy_mj), _fmt(r.eta), _fmt(r.delta_acc),
                "1" if flag else "0"]) + "\n")


# ---------------------------------------------------------------------------
# SVG scatter
# ---------------------------------------------------------------------------

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 80, 30, 30, 60


def _x_of(log_e, lo, hi):
    span = hi - lo
    return _ML + (log_e - lo) / span * (_W - _ML - _MR)


def _y_of(acc, lo, hi):
    span = hi - lo
    return _H - _MB - (acc - lo) / span * (_H - _MT - _MB)


def render_scatter_svg(rows, flags) -> str:
    if not rows:
        raise ValueError("cannot render an empty row set")
    accs = [r.acc if r.acc is not None else 0.0 for r in rows]
    logs = [math.log10(max(r.energy_mj, 1e-300)) for r in rows]
    xlo, xhi = min(logs), max(logs)
    if xhi - xlo < 1e-9:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    else:
        pad = 0.05 * (xhi - xlo)
        xlo, xhi = xlo - pad, xhi + pad
    ylo, yhi = min(accs), max(accs)
    if yhi - ylo < 1e-9:
        ylo, yhi = ylo - 0.05, yhi + 0.05
    else:
        pad = 0.08 * (yhi - ylo)
        ylo, yhi = ylo - pad, yhi + pad

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        'stroke="#333" stroke-width="1"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
        'stroke="#333" stroke-width="1"/>',
    ]
    # decade ticks on the log-energy axis
    ticks = [d for d in range(math.floor(xlo), math.ceil(xhi) + 1) if xlo <= d <= xhi]
    if not ticks:
        ticks = [xlo, xhi]
    for t in ticks:
        x = _x_of(t, xlo, xhi)
        parts.append(f'<line x1="{x:.2f}" y1="{_H - _MB}" x2="{x:.2f}" '
                     f'y2="{_H - _MB + 6}" stroke="#333"/>')
        parts.append(f'<text x="{x:.2f}" y="{_H - _MB + 20}" font-size="11" '
                     f'text-anchor="middle" fill="#333">1e{int(t) if float(t).is_integer() else round(t, 2)}</text>')
    for i in range(5):
        v = ylo + (yhi - ylo) * i / 4
        y = _y_of(v, ylo, yhi)
        parts.append(f'<line x1="{_ML - 6}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                     'stroke="#333"/>')
        parts.append(f'<text x="{_ML - 10}" y="{y + 4:.2f}" font-size="11" '
                     f'text-anchor="end" fill="#333">{v:.3f}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 16}" font-size="13" '
                 'text-anchor="middle" fill="#111">energy per image (mJ, log scale)</text>')
    parts.append(f'<text x="18" y="{(_MT + _H - _MB) / 2:.1f}" font-size="13" '
                 f'text-anchor="middle" fill="#111" '
                 f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2:.1f})">accuracy</text>')

    for row, log_e, acc, flag in zip(rows, logs, accs, flags):
        x = _x_of(log_e, xlo, xhi)
        y = _y_of(acc, ylo, yhi)
        if flag:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="6" fill="#1a6faf" '
                         'stroke="#0c3f66" stroke-width="1.5" class="marker pareto"/>')
        else:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" fill="none" '
                         'stroke="#888" stroke-width="1.5" class="marker"/>')
        label = row.schedule or row.model
        parts.append(f'<text x="{x + 8:.2f}" y="{y - 6:.2f}" font-size="10" '
                     f'fill="#444">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(rows, out_dir: str) -> tuple[str, str]:
    """Emit summary.csv and report.svg; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    flags = pareto_flags(rows)
    summary_path = os.path.join(out_dir, "summary.csv")
    svg_path = os.path.join(out_dir, "report.svg")
    write_summary_csv(rows, flags, summary_path)
    with open(svg_path, "w", encoding="utf-8") as f:
        f.write(render_scatter_svg(rows, flags))
    return summary_path, svg_path
