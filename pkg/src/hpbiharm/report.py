"""Convergence summaries of run CSV files."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

REQUIRED = ("step", "dofs", "error", "eta", "effectivity")


class ReportError(ValueError):
    pass


@dataclass
class RunTable:
    source: str
    step: np.ndarray
    dofs: np.ndarray
    error: np.ndarray
    eta: np.ndarray
    effectivity: np.ndarray


@dataclass
class Summary:
    source: str
    n_steps: int
    fit_from_step: int
    error_rate: float
    eta_rate: float
    effectivity_min: float
    effectivity_max: float
    effectivity_trend: float
    exp_slope: float
    exp_r2: float


def read_run_csv(text: str, source: str = "<string>") -> RunTable:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ReportError(f"{source}: no data rows")
    missing = [c for c in REQUIRED if c not in rows[0]]
    if missing:
        raise ReportError(f"{source}: missing columns {', '.join(missing)}")
    try:
        cols = {c: np.array([float(r[c]) for r in rows]) for c in REQUIRED}
    except (TypeError, ValueError) as exc:
        raise ReportError(f"{source}: non-numeric entry ({exc})") from None
    if len(rows) < 2:
        raise ReportError(f"{source}: need at least two steps")
    if np.any(cols["dofs"] <= 0):
        raise ReportError(f"{source}: dofs must be positive")
    return RunTable(source, cols["step"].astype(int), cols["dofs"], cols["error"], cols["eta"],
                    cols["effectivity"])


def linear_fit(x, y) -> tuple[float, float]:
    """Least-squares slope and R^2; NaN when fewer than two finite points remain."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 2 or np.ptp(x) == 0:
        return math.nan, math.nan
    slope, icept = np.polyfit(x, y, 1)
    ss = float(np.sum((y - y.mean()) ** 2))
    res = y - (slope * x + icept)
    return float(slope), (1.0 - float(res @ res) / ss if ss > 0 else 1.0)


def _log(v):
    v = np.asarray(v, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), np.nan)


def convergence_rate(dofs, values) -> float:
    """Slope of ``log(values)`` against ``log(dofs)``."""
    return linear_fit(_log(dofs), _log(values))[0]


def exponential_fit(dofs, values) -> tuple[float, float]:
    """Slope and R^2 of ``log(values)`` against ``dofs^(1/3)``."""
    return linear_fit(np.cbrt(np.asarray(dofs, float)), _log(values))


def summarize(table: RunTable) -> Summary:
    n = len(table.dofs)
    start = n // 2 if n - n // 2 >= 2 else 0
    tail = slice(start, n)
    d = table.dofs[tail]
    # prefer the exact error when it was measured, fall back to the estimator
    target = table.error if np.all(np.isfinite(table.error) & (table.error > 0)) else table.eta
    eff = table.effectivity[tail]
    finite = eff[np.isfinite(eff)]
    slope, r2 = exponential_fit(table.dofs, target)
    return Summary(
        source=table.source, n_steps=n, fit_from_step=int(table.step[start]),
        error_rate=convergence_rate(d, table.error[tail]),
        eta_rate=convergence_rate(d, table.eta[tail]),
        effectivity_min=float(finite.min()) if finite.size else math.nan,
        effectivity_max=float(finite.max()) if finite.size else math.nan,
        effectivity_trend=convergence_rate(d, eff),
        exp_slope=slope, exp_r2=r2)


def summaries_to_csv(summaries) -> str:
    buf = io.StringIO()
    names = list(Summary.__dataclass_fields__)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for s in summaries:
        w.writerow([v if isinstance(v, (str, int)) else repr(float(v)) for v in asdict(s).values()])
    return buf.getvalue()


def plot_table_csv(tables) -> str:
    """Long-format columns for external plotting, one row per (run, step)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "step", "dofs", "dofs_cbrt", "error", "eta", "effectivity",
                "log10_dofs", "log10_error", "log10_eta"])
    for t in tables:
        for i in range(len(t.dofs)):
            lg = [math.log10(v) if v > 0 else math.nan for v in (t.dofs[i], t.error[i], t.eta[i])]
            w.writerow([t.source, int(t.step[i]), int(t.dofs[i]), repr(float(np.cbrt(t.dofs[i]))),
                        repr(float(t.error[i])), repr(float(t.eta[i])), repr(float(t.effectivity[i])),
                        *(repr(v) for v in lg)])
    return buf.getvalue()
