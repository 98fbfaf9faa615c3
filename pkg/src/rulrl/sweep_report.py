"""Target-return sweeps, correlation, and CSV/SVG reporting.

Evaluates a trained policy across a grid of conditioning targets next to the
no-action, oracle-RUL, and estimated-RUL baselines, then renders the realized
return curve as a dependency-free SVG line chart.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .labeling import CostModel
from .policy import PolicyModel
from .rul_estimator import RulModel
from .simenv import CONDITION_DECREMENT, EstimatedRul, EvalRecord, NoAction, OracleRul, Policy, evaluate
from .trajdata import Trajectory

DEFAULT_GRID_POINTS = 25


def worker_count() -> int:
    """Worker cap from RULRL_THREADS, defaulting to the available cores."""
    env = os.environ.get("RULRL_THREADS")
    if env:
        count = int(env)
        if count < 1:
            raise ValueError("RULRL_THREADS must be >= 1")
        return count
    return os.cpu_count() or 1


@dataclass
class SweepCurve:
    """Per-target evaluation records plus baseline records."""

    grid: np.ndarray
    records: list[EvalRecord]
    baselines: list[EvalRecord]
    argmax_target: float

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if len(self.grid) != len(self.records):
            raise ValueError("one record per grid point required")
        if len(self.grid) == 0:
            raise ValueError("empty sweep grid")
        if not (np.diff(self.grid) > 0).all():
            raise ValueError("grid must be strictly increasing")
        means = [r.mean for r in self.records]
        if self.argmax_target != float(self.grid[int(np.argmax(means))]):
            raise ValueError("argmax_target inconsistent with records")

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.records])


def default_grid(policy: PolicyModel, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Targets spanning half the training-return minimum to 1.5x its maximum."""
    lo = 0.5 * policy.rtg_min
    hi = 1.5 * policy.rtg_max
    if not lo < hi:
        raise ValueError(f"degenerate default grid [{lo}, {hi}]")
    return np.linspace(lo, hi, points)


def sweep(
    policy: PolicyModel,
    trajs: list[Trajectory],
    cost: CostModel,
    grid: np.ndarray | None = None,
    rul_model: RulModel | None = None,
    n_jitter_draws: int = 1,
    mode: str = CONDITION_DECREMENT,
    threads: int | None = None,
) -> SweepCurve:
    """Evaluate the policy at every grid target plus the applicable baselines.

    The oracle baseline needs true failure points, so it is skipped unless
    every trajectory ends in failure; the estimated-RUL baseline is skipped
    without a ``rul_model``. Grid points evaluate independently (optionally
    in parallel) and aggregate in grid order.
    """
    if grid is None:
        grid = default_grid(policy)
    grid = np.asarray(grid, dtype=float)
    if len(grid) == 0:
        raise ValueError("empty sweep grid")

    def eval_target(target: float) -> EvalRecord:
        rule = Policy(policy, float(target), rul_model=rul_model, mode=mode)
        return evaluate(trajs, rule, cost, n_jitter_draws)

    n_workers = worker_count() if threads is None else threads
    if n_workers > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(eval_target, grid))
    else:
        records = [eval_target(g) for g in grid]

    baselines = [evaluate(trajs, NoAction(), cost, n_jitter_draws)]
    if all(t.ends_in_failure for t in trajs):
        baselines.append(evaluate(trajs, OracleRul(cost.lead_time), cost, n_jitter_draws))
    if rul_model is not None:
        baselines.append(
            evaluate(trajs, EstimatedRul(rul_model, cost.lead_time), cost, n_jitter_draws)
        )
    means = [r.mean for r in records]
    return SweepCurve(
        grid=grid,
        records=records,
        baselines=baselines,
        argmax_target=float(grid[int(np.argmax(means))]),
    )


def correlation(targets: np.ndarray, realized: np.ndarray) -> float:
    """Pearson correlation coefficient between targets and realized returns."""
    x = np.asarray(targets, dtype=float)
    y = np.asarray(realized, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two equal-length vectors of at least 2 points")
    xd = x - x.mean()
    yd = y - y.mean()
    sxx = float((xd**2).sum())
    syy = float((yd**2).sum())
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation is undefined for zero-variance input")
    # Single square root so correlation(x, x) is exactly 1.0.
    return float((xd * yd).sum() / np.sqrt(sxx * syy))


def emit_csv(curve: SweepCurve, path_or_file) -> None:
    """Sweep table: one row per grid point, then one per baseline."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh)
        writer.writerow(["rule", "target_return", "mean", "std", "n_units", "n_draws"])
        for target, record in zip(curve.grid, curve.records):
            writer.writerow(
                [
                    record.rule,
                    repr(float(target)),
                    repr(record.mean),
                    repr(record.std),
                    record.n_units,
                    record.n_draws,
                ]
            )
        for record in curve.baselines:
            writer.writerow(
                [record.rule, "", repr(record.mean), repr(record.std), record.n_units, record.n_draws]
            )
    finally:
        if own:
            fh.close()


def curve_from_csv(path) -> SweepCurve:
    """Rebuild a summary curve (means/stds only) from an emitted CSV."""
    grid, records, baselines = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["rule", "target_return", "mean", "std", "n_units", "n_draws"]:
            raise ValueError("unrecognized sweep CSV header")
        for row in reader:
            rule, target, mean, std, n_units, n_draws = row
            record = EvalRecord(
                rule=rule,
                target_return=None if target == "" else float(target),
                returns=None,
                mean=float(mean),
                std=float(std),
                n_units=int(n_units),
                n_draws=int(n_draws),
            )
            if target == "":
                baselines.append(record)
            else:
                grid.append(float(target))
                records.append(record)
    if not grid:
        raise ValueError("sweep CSV contains no grid rows")
    means = [r.mean for r in records]
    return SweepCurve(
        grid=np.array(grid),
        records=records,
        baselines=baselines,
        argmax_target=float(grid[int(np.argmax(means))]),
    )


# --- SVG rendering ---------------------------------------------------------

SVG_WIDTH = 960
SVG_HEIGHT = 540
_MARGIN_LEFT = 70
_MARGIN_RIGHT = 230
_MARGIN_TOP = 40
_MARGIN_BOTTOM = 60
_SERIES_COLORS = ["#2ca02c", "#d62728", "#9467bd", "#8c564b"]
_BASELINE_COLORS = {"no_action": "#7f3fbf", "oracle_rul": "#1f77b4", "estimated_rul": "#ff7f0e"}


def _ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    return np.linspace(lo, hi, n)


def render_sweep_svg(curves: list[tuple[str, SweepCurve]]) -> str:
    """Self-contained SVG: one polyline per policy curve, dashed baseline lines."""
    if not curves:
        raise ValueError("nothing to plot")
    xs = np.concatenate([c.grid for _, c in curves])
    ys = np.concatenate([c.means for _, c in curves])
    baseline_values = [r.mean for _, c in curves for r in c.baselines]
    all_y = np.concatenate([ys, np.array(baseline_values)]) if baseline_values else ys
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_l, plot_r = _MARGIN_LEFT, SVG_WIDTH - _MARGIN_RIGHT
    plot_t, plot_b = _MARGIN_TOP, SVG_HEIGHT - _MARGIN_BOTTOM

    def to_px(x: float, y: float) -> tuple[float, float]:
        px = plot_l + (x - x_lo) / (x_hi - x_lo) * (plot_r - plot_l)
        py = plot_b - (y - y_lo) / (y_hi - y_lo) * (plot_b - plot_t)
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
    ]
    for value in _ticks(y_lo + pad, y_hi - pad):
        _, py = to_px(x_lo, value)
        parts.append(
            f'<line x1="{plot_l}" y1="{py:.2f}" x2="{plot_r}" y2="{py:.2f}" '
            'stroke="#e0e0e0" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{plot_l - 8}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12">{value:.4g}</text>'
        )
    for value in _ticks(x_lo, x_hi):
        px, _ = to_px(value, y_lo)
        parts.append(
            f'<line x1="{px:.2f}" y1="{plot_b}" x2="{px:.2f}" y2="{plot_b + 5}" '
            'stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{plot_b + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{value:.4g}</text>'
        )
    parts.append(
        f'<line x1="{plot_l}" y1="{plot_b}" x2="{plot_r}" y2="{plot_b}" stroke="#000" stroke-width="1.5"/>'
    )
    parts.append(
        f'<line x1="{plot_l}" y1="{plot_t}" x2="{plot_l}" y2="{plot_b}" stroke="#000" stroke-width="1.5"/>'
    )
    parts.append(
        f'<text x="{(plot_l + plot_r) / 2:.1f}" y="{SVG_HEIGHT - 18}" text-anchor="middle" '
        'font-family="sans-serif" font-size="14">expected reward (conditioning target)</text>'
    )
    parts.append(
        f'<text x="18" y="{(plot_t + plot_b) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14" '
        f'transform="rotate(-90 18 {(plot_t + plot_b) / 2:.1f})">mean realized return</text>'
    )

    legend_entries = []
    seen_baselines = set()
    for idx, (label, curve) in enumerate(curves):
        color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]
        points = " ".join(
            f"{to_px(x, y)[0]:.2f},{to_px(x, y)[1]:.2f}" for x, y in zip(curve.grid, curve.means)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2.5" points="{points}"/>'
        )
        legend_entries.append((label, color, False))
        for record in curve.baselines:
            base_name = record.rule.split("(")[0]
            if base_name in seen_baselines:
                continue
            seen_baselines.add(base_name)
            bcolor = _BASELINE_COLORS.get(base_name, "#555555")
            _, py = to_px(x_lo, record.mean)
            parts.append(
                f'<line x1="{plot_l}" y1="{py:.2f}" x2="{plot_r}" y2="{py:.2f}" '
                f'stroke="{bcolor}" stroke-width="2" stroke-dasharray="8 5"/>'
            )
            legend_entries.append((record.rule, bcolor, True))

    ly = plot_t + 10
    lx = plot_r + 18
    for label, color, dashed in legend_entries:
        dash = ' stroke-dasharray="8 5"' if dashed else ""
        parts.append(
            f'<line x1="{lx}" y1="{ly}" x2="{lx + 28}" y2="{ly}" stroke="{color}" stroke-width="2.5"{dash}/>'
        )
        parts.append(
            f'<text x="{lx + 34}" y="{ly + 4}" font-family="sans-serif" font-size="12">'
            f"{escape(label)}</text>"
        )
        ly += 22
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(curve: SweepCurve | list[tuple[str, SweepCurve]], path_or_file) -> None:
    """Write the sweep chart; accepts one curve or labeled curve pairs."""
    curves = [("policy", curve)] if isinstance(curve, SweepCurve) else list(curve)
    svg = render_sweep_svg(curves)
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write(svg)
    finally:
        if own:
            fh.close()
