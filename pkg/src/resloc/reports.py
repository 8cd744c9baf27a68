"""Plain-text tables laid out like the published result tables."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .choice import EstimationResult
from .hedonic import HedonicFit
from .metrics import format_percent, percent_change


def text_table(rows: Sequence[Sequence[str]], header: Sequence[str] | None = None) -> str:
    """Left-align the first column, right-align the rest."""
    rows = [list(map(str, r)) for r in rows]
    if header is not None:
        rows = [list(map(str, header))] + rows
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0 and header is not None:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _num(x: float, digits: int = 3) -> str:
    if x is None or not np.isfinite(x):
        return "-"
    return f"{x:.{digits}f}"


def hedonic_report(fit: HedonicFit) -> str:
    rows = [(n, _num(c, 3), _num(t, 2)) for n, c, t in zip(fit.names, fit.coefficients, fit.t_values)]
    rows += [("R2", _num(fit.r_squared), ""), ("adjusted R2", _num(fit.adj_r_squared), ""),
             ("F statistic", _num(fit.f_statistic, 1), ""), ("observations", str(fit.n_obs), "")]
    text = "Land-price model (log JPY/m2)\n" + text_table(rows, ("variable", "coefficient", "t"))
    if fit.dropped:
        text += "\ndropped as collinear: " + ", ".join(fit.dropped) + "\n"
    return text


def segment_report(results: Mapping[int, EstimationResult | str]) -> str:
    """One column per segment with ``coef (t)``; failed segments show their error."""
    segs = sorted(results)
    names: list[str] = []
    for r in results.values():
        if isinstance(r, EstimationResult):
            names += [n for n in r.names if n not in names]
    rows = []
    for n in names:
        row = [n]
        for s in segs:
            r = results[s]
            if isinstance(r, EstimationResult) and n in r.names:
                i = r.names.index(n)
                fixed = " fixed" if n in r.fixed else ""
                row.append(f"{r.coefficients[i]:.3f} ({_num(r.t_values[i], 2)}){fixed}")
            else:
                row.append("-")
        rows.append(row)
    for label, attr, fmt in (("initial log-likelihood", "ll_initial", "{:.2f}"),
                             ("final log-likelihood", "ll_final", "{:.2f}"),
                             ("adjusted rho2", "rho2_adjusted", "{:.3f}"),
                             ("observations", "n_obs", "{}")):
        rows.append([label] + [fmt.format(getattr(results[s], attr))
                               if isinstance(results[s], EstimationResult) else "failed"
                               for s in segs])
    text = "Residential location choice model\n"
    text += text_table(rows, ["variable"] + [f"segment {s}" for s in segs])
    failures = [(s, r) for s, r in results.items() if not isinstance(r, EstimationResult)]
    for s, msg in sorted(failures):
        text += f"segment {s} failed: {msg}\n"
    return text


STAT_COLUMNS = ("mean", "median", "min", "max", "std")


def validation_rows(observed: Mapping[str, float], simulated: Mapping[str, float]) -> pd.DataFrame:
    """Observed and simulated distance statistics for DAA and UFAA, raw and filtered."""
    rows = []
    for label, vals in (("Observed results", observed), ("Simulated results", simulated)):
        for area in ("daa", "daa_f", "ufaa", "ufaa_f"):
            row = {"result": label, "target": area}
            row.update({s: vals[f"{area}_{s}"] for s in STAT_COLUMNS})
            row["daa_households"] = vals["daa_households"]
            row["daa_share"] = vals["daa_share"]
            rows.append(row)
    return pd.DataFrame(rows)


def validation_report(frame: pd.DataFrame) -> str:
    titles = {"daa": "to the closest DAA", "daa_f": "to the closest DAA, within 10,000 m",
              "ufaa": "to the closest UFAA", "ufaa_f": "to the closest UFAA, within 10,000 m"}
    out = []
    for target, title in titles.items():
        sub = frame[frame["target"] == target]
        rows = [[r["result"]] + [f"{r[s]:,.0f}" for s in STAT_COLUMNS]
                + [f"{r['daa_households']:,.0f} ({100 * r['daa_share']:.1f}%)"]
                for _, r in sub.iterrows()]
        out.append(f"Network distance (m) from residences {title}\n"
                   + text_table(rows, ["", "Mean", "Median", "Min.", "Max.", "Std. dev.",
                                       "#Household in DAA (share)"]))
    return "\n".join(out)


SCENARIO_ROWS = (
    ("Median distance to DAA (m)", "daa_median", "{:,.0f}"),
    ("Median distance to UFAA (m)", "ufaa_median", "{:,.0f}"),
    ("#Household", "n_households", "{:,.0f}"),
    ("#Household in DAA", "daa_households", "{:,.0f}"),
    ("Share in DAA (%)", "daa_share", "pct"),
)


def scenario_report(values: pd.DataFrame, baseline: str) -> str:
    """Scenario columns with value rows and percentage changes against ``baseline``."""
    names = list(values.index)
    rows = []
    for label, col, fmt in SCENARIO_ROWS:
        if fmt == "pct":
            rows.append([label] + [f"{100 * values.loc[n, col]:.1f}" for n in names])
        else:
            rows.append([label] + [fmt.format(values.loc[n, col]) for n in names])
    base = values.loc[baseline]
    for label, col, _ in SCENARIO_ROWS:
        if col in ("n_households",):
            continue
        rows.append([f"change vs {baseline}: {label}"]
                    + [format_percent(percent_change(values.loc[n, col], base[col]))
                       if base[col] != 0 else "-" for n in names])
    return text_table(rows, ["indicator"] + names)


def change_frame(values: pd.DataFrame, baseline: str) -> pd.DataFrame:
    """Machine-readable counterpart of :func:`scenario_report`'s change rows."""
    base = values.loc[baseline]
    out = {}
    for _, col, _ in SCENARIO_ROWS:
        if col == "n_households" or base[col] == 0:
            continue
        out[f"{col}_pct_change"] = [round(percent_change(v, base[col]), 1) for v in values[col]]
    return pd.DataFrame(out, index=values.index).rename_axis("scenario").reset_index()
