"""Two-state MDP sweep over (off-policy distribution, feature angle).

A point on the unit disk has radius d(s0) and angle a, with features
Phi = [cos a, sin a].  Each cell gets the spectral radius of the TD(0) step,
the composed TN and FR outer-step matrices.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linear_fa as lf
from . import smallmat as sm
from .mdp import Mdp, Policy

ALGS = ("td", "tn", "fr")
_ALG_TAG = {"td": lf.TD0, "tn": lf.TN, "fr": lf.FR}
RADIUS_MARGIN = 1e-3


def build_two_state_mdp(gamma: float = 0.99) -> Mdp:
    """s0 always moves to s1; s1 returns to s0 with probability 1/2.  No reward."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0,1), got {gamma}")
    P = np.array([[[0.0, 1.0]], [[0.5, 0.5]]])
    return Mdp(P, np.zeros((2, 1)), gamma, initial=[1.0, 0.0])


def two_state_problem(mdp: Mdp, d0: float, angle: float | None = None, phi=None) -> lf.LinearFaProblem:
    if phi is None:
        phi = [math.cos(angle), math.sin(angle)]
    phi = np.asarray(phi, dtype=float).reshape(2, 1)
    return lf.LinearFaProblem.from_mdp(mdp, Policy(np.ones((2, 1))), phi, [d0, 1.0 - d0])


@dataclass(frozen=True)
class DiskCell:
    radius_coord: float
    angle: float
    rho: dict
    classification: dict
    singular: bool = False


@dataclass
class DiskGrid:
    radii: np.ndarray
    angles: np.ndarray
    rho: dict  # alg -> (n_radius, n_angle) float array
    cls: dict  # alg -> (n_radius, n_angle) str array
    singular: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def resolution(self) -> tuple[int, int]:
        return len(self.radii), len(self.angles)

    def cell(self, i: int, j: int) -> DiskCell:
        return DiskCell(
            float(self.radii[i]),
            float(self.angles[j]),
            {a: float(self.rho[a][i, j]) for a in ALGS},
            {a: str(self.cls[a][i, j]) for a in ALGS},
            bool(self.singular[i, j]),
        )

    def ring_index(self, d0: float) -> int:
        return int(np.argmin(np.abs(self.radii - d0)))


def grid_axes(resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    n_r, n_a = resolution
    radii = np.linspace(RADIUS_MARGIN, 1.0 - RADIUS_MARGIN, n_r)
    angles = np.arange(n_a) * (2.0 * math.pi / n_a)
    return radii, angles


def cell_radii(mdp: Mdp, d0: float, angle: float, kappa: float, period: int):
    """(rho, classification) per algorithm; singular cells come back marginal."""
    rho, cls = {}, {}
    try:
        prob = two_state_problem(mdp, d0, angle)
        for alg in ALGS:
            spec = lf.adaptive_spec(prob, _ALG_TAG[alg], period, kappa)
            rep = lf.classify(prob, spec)
            rho[alg], cls[alg] = rep.radius, rep.classification
    except (ArithmeticError, sm.SingularMatrixError):
        return {a: math.nan for a in ALGS}, {a: lf.MARGINAL for a in ALGS}, True
    return rho, cls, False


def _sweep_row(args):
    gamma, kappa, period, d0, angles = args
    mdp = build_two_state_mdp(gamma)
    return [cell_radii(mdp, d0, a, kappa, period) for a in angles]


def sweep(
    gamma: float = 0.99,
    kappa: float = 0.1,
    period: int = 10_000,
    resolution: tuple[int, int] = (128, 256),
    workers: int = 1,
) -> DiskGrid:
    n_r, n_a = resolution
    if n_r < 32 or n_a < 64:
        raise ValueError(f"resolution must be at least 32x64, got {n_r}x{n_a}")
    radii, angles = grid_axes(resolution)
    jobs = [(gamma, kappa, period, float(d0), angles) for d0 in radii]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs, chunksize=max(1, n_r // (4 * workers))))
    else:
        rows = [_sweep_row(j) for j in jobs]
    rho = {a: np.empty((n_r, n_a)) for a in ALGS}
    cls = {a: np.empty((n_r, n_a), dtype=object) for a in ALGS}
    singular = np.zeros((n_r, n_a), dtype=bool)
    for i, row in enumerate(rows):
        for j, (r, c, sing) in enumerate(row):
            singular[i, j] = sing
            for a in ALGS:
                rho[a][i, j] = r[a]
                cls[a][i, j] = c[a]
    params = {
        "gamma": gamma,
        "kappa": kappa,
        "period": period,
        "resolution": [n_r, n_a],
        "radius_range": [RADIUS_MARGIN, 1.0 - RADIUS_MARGIN],
        "eta": "adaptive: TN 1/lambda_max(G); TD/FR 1/max|lambda(A)| shrunk to min Re(lambda)/|lambda|^2",
        "singular_cells": int(singular.sum()),
    }
    return DiskGrid(radii, angles, rho, cls, singular, params)


def compare_domains(grid: DiskGrid) -> dict:
    """TN vs FR divergence categories, marginal cells excluded."""
    tn, fr = grid.cls["tn"], grid.cls["fr"]
    valid = (tn != lf.MARGINAL) & (fr != lf.MARGINAL)
    tn_div, fr_div = (tn == lf.DIVERGES) & valid, (fr == lf.DIVERGES) & valid
    return {
        "tn_only_diverge": int(np.sum(tn_div & ~fr_div)),
        "fr_only_diverge": int(np.sum(fr_div & ~tn_div)),
        "both": int(np.sum(tn_div & fr_div)),
        "neither": int(np.sum(valid & ~tn_div & ~fr_div)),
    }


# -- output -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def grid_csv(grid: DiskGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["radius", "angle", "rho_td", "rho_tn", "rho_fr", "class_td", "class_tn", "class_fr"])
    for i, r in enumerate(grid.radii):
        for j, a in enumerate(grid.angles):
            w.writerow(
                [_fmt(r), _fmt(a)]
                + [_fmt(grid.rho[k][i, j]) for k in ALGS]
                + [grid.cls[k][i, j] for k in ALGS]
            )
    return buf.getvalue()


# symmetric log colour scale: log10(rho) clipped to [-2, 2], blue below 1, red above
N_BINS = 8
LOG_SPAN = 2.0
_BLUES = ["#08306b", "#08519c", "#2171b5", "#4292c6", "#6baed6", "#9ecae1", "#c6dbef", "#deebf7"]
_REDS = ["#fee0d2", "#fcbba1", "#fc9272", "#fb6a4a", "#ef3b2c", "#cb181d", "#a50f15", "#67000d"]
_MARGINAL_COLOR = "#bdbdbd"


def color_bin(rho: float) -> str:
    if math.isnan(rho):
        return _MARGINAL_COLOR
    lg = LOG_SPAN if rho == math.inf else (-LOG_SPAN if rho <= 0 else math.log10(rho))
    lg = min(max(lg, -LOG_SPAN), LOG_SPAN)
    if rho < 1.0:
        k = min(N_BINS - 1, int((lg + LOG_SPAN) / LOG_SPAN * N_BINS))
        return _BLUES[k]
    k = min(N_BINS - 1, int(lg / LOG_SPAN * N_BINS))
    return _REDS[k]


SIZE = 520
CENTER = 230.0
RMAX = 210.0


def _pt(r: float, a: float) -> str:
    # y axis points up in the plot, down in SVG
    return f"{CENTER + RMAX * r * math.cos(a):.3f},{CENTER - RMAX * r * math.sin(a):.3f}"


def _sector(r0: float, r1: float, a0: float, a1: float) -> str:
    large = 1 if a1 - a0 > math.pi else 0
    return (
        f"M{_pt(r0, a0)}L{_pt(r1, a0)}"
        f"A{RMAX * r1:.3f},{RMAX * r1:.3f} 0 {large} 0 {_pt(r1, a1)}"
        f"L{_pt(r0, a1)}"
        f"A{RMAX * r0:.3f},{RMAX * r0:.3f} 0 {large} 1 {_pt(r0, a0)}Z"
    )


def _edges(grid: DiskGrid):
    radii, angles = grid.radii, grid.angles
    n_r, n_a = grid.resolution
    dr = radii[1] - radii[0]
    da = angles[1] - angles[0]
    r_lo = radii - dr / 2
    r_hi = radii + dr / 2
    a_lo = angles - da / 2
    return r_lo, r_hi, a_lo, da


def contour_path(grid: DiskGrid, alg: str) -> str:
    """Cell-boundary edges separating rho < 1 from rho >= 1, one path string."""
    below = grid.rho[alg] < 1.0
    n_r, n_a = grid.resolution
    r_lo, r_hi, a_lo, da = _edges(grid)
    parts = []
    for i in range(n_r):
        for j in range(n_a):
            jn = (j + 1) % n_a
            if below[i, j] != below[i, jn]:
                a = a_lo[j] + da
                parts.append(f"M{_pt(r_lo[i], a)}L{_pt(r_hi[i], a)}")
            if i + 1 < n_r and below[i, j] != below[i + 1, j]:
                r = r_hi[i]
                parts.append(f"M{_pt(r, a_lo[j])}A{RMAX * r:.3f},{RMAX * r:.3f} 0 0 0 {_pt(r, a_lo[j] + da)}")
    return "".join(parts)


def render_svg(grid: DiskGrid, alg: str) -> str:
    n_r, n_a = grid.resolution
    r_lo, r_hi, a_lo, da = _edges(grid)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE + 200}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE + 200} {SIZE}">',
        f'<title>spectral radius, {alg.upper()}</title>',
        '<g id="heatmap" stroke="none">',
    ]
    for i in range(n_r):
        colors = [color_bin(grid.rho[alg][i, j]) for j in range(n_a)]
        # merge angular runs of equal colour
        j = 0
        while j < n_a:
            k = j
            while k + 1 < n_a and colors[k + 1] == colors[j]:
                k += 1
            a0, a1 = a_lo[j], a_lo[k] + da
            if k - j + 1 == n_a:
                # full ring: two half sectors so the arc is well defined
                mid = a0 + math.pi
                out.append(f'<path fill="{colors[j]}" d="{_sector(r_lo[i], r_hi[i], a0, mid)}"/>')
                out.append(f'<path fill="{colors[j]}" d="{_sector(r_lo[i], r_hi[i], mid, a1)}"/>')
            else:
                out.append(f'<path fill="{colors[j]}" d="{_sector(r_lo[i], r_hi[i], a0, a1)}"/>')
            j = k + 1
    out.append("</g>")
    out.append(
        f'<path id="contour-{alg}" class="contour" fill="none" stroke="#000000" stroke-width="1.2" '
        f'd="{contour_path(grid, alg)}"/>'
    )
    out.append(
        f'<circle id="stationary" cx="{CENTER:.3f}" cy="{CENTER:.3f}" r="{RMAX / 3:.3f}" '
        'fill="none" stroke="#000000" stroke-width="2"/>'
    )
    out.append(_legend())
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _legend() -> str:
    x0, y0, h = SIZE - 20, 40, 18
    rows = ['<g id="legend" font-family="sans-serif" font-size="11">']
    rows.append(f'<text x="{x0}" y="{y0 - 12}">rho (log10 scale, split at 1)</text>')
    colors = list(reversed(_REDS)) + list(reversed(_BLUES))
    for k, col in enumerate(colors):
        y = y0 + k * h
        rows.append(f'<rect x="{x0}" y="{y}" width="18" height="{h}" fill="{col}"/>')
    for k in range(2 * N_BINS + 1):
        lg = LOG_SPAN - k * LOG_SPAN / N_BINS
        rows.append(f'<text x="{x0 + 24}" y="{y0 + k * h + 4}">{10 ** lg:.3g}</text>')
    y = y0 + 2 * N_BINS * h + 16
    rows.append(f'<rect x="{x0}" y="{y}" width="18" height="{h}" fill="{_MARGINAL_COLOR}"/>')
    rows.append(f'<text x="{x0 + 24}" y="{y + 13}">singular cell</text>')
    rows.append(f'<text x="{x0}" y="{y + 40}">black line: rho = 1</text>')
    rows.append(f'<text x="{x0}" y="{y + 56}">circle: d(s0) = 1/3</text>')
    rows.append("</g>")
    return "\n".join(rows)


def render(grid: DiskGrid, out_csv, out_svg=None) -> list[Path]:
    """Write the CSV and, when ``out_svg`` is given, one SVG per algorithm
    named ``<stem>_td.svg`` etc. next to ``out_svg``."""
    written = []
    out_csv = Path(out_csv)
    try:
        out_csv.write_text(grid_csv(grid))
    except OSError as exc:
        raise OSError(f"cannot write {out_csv}: {exc.strerror}") from exc
    written.append(out_csv)
    if out_svg is not None:
        base = Path(out_svg)
        for alg in ALGS:
            path = base.with_name(f"{base.stem}_{alg}.svg")
            try:
                path.write_text(render_svg(grid, alg))
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc.strerror}") from exc
            written.append(path)
    return written
