"""Statistical harness: paired t-test, one-way ANOVA F, Benjamini-Hochberg FDR.

Test statistics and degrees of freedom are computed from first
principles; tail probabilities go through the regularized incomplete
beta function (scipy.special.betainc).  Degenerate zero-variance inputs
are errors rather than p=0, so artifacts never come out silently
significant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: tuple[float, ...]
    p_value: float
    rejected: bool | None = None  # filled after multiple-comparison correction

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")
        if any(d <= 0 for d in self.df):
            raise ValueError("degrees of freedom must be positive")


def _t_sf(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t."""
    x = df / (df + t * t)
    return float(special.betainc(df / 2.0, 0.5, x))


def _f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail probability of the F distribution."""
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(df2 / 2.0, df1 / 2.0, x))


def paired_ttest(a: np.ndarray, b: np.ndarray) -> TestResult:
    """Two-sided paired t-test on equal-length samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be equal-length 1-D arrays")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0:
        raise ValueError("zero-variance differences (degenerate test)")
    t = float(d.mean() / (sd / math.sqrt(n)))
    return TestResult(statistic=t, df=(n - 1,), p_value=_t_sf(t, n - 1))


def anova_f(groups: list[np.ndarray]) -> TestResult:
    """One-way ANOVA: F = MS_between / MS_within, df = (k-1, N-k)."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    if any(g.size < 2 for g in groups):
        raise ValueError("each group needs at least 2 samples")
    k = len(groups)
    n_total = sum(g.size for g in groups)
    grand = sum(g.sum() for g in groups) / n_total
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    if ss_within == 0:
        raise ValueError("zero within-group variance everywhere (degenerate test)")
    df1, df2 = k - 1, n_total - k
    f = float((ss_between / df1) / (ss_within / df2))
    return TestResult(statistic=f, df=(df1, df2), p_value=_f_sf(f, df1, df2))


def bh_fdr(pvals: list[float], q: float = 0.05) -> list[bool]:
    """Benjamini-Hochberg step-up; returns the rejection mask in input order."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    p = np.asarray(pvals, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    threshold_rank = 0
    for rank, idx in enumerate(order, start=1):
        if p[idx] <= rank * q / m:
            threshold_rank = rank
    mask = np.zeros(m, dtype=bool)
    mask[order[:threshold_rank]] = True
    return mask.tolist()


def run_batch_csv(in_path: str, out_path: str, q: float = 0.05) -> None:
    """Batch mode: CSV of test specs + samples in, CSV of results out.

    Input rows: test name ("ttest" with two ;-separated sample lists, or
    "anova" with >= 2), e.g.  ttest,1;2;3,2;2;4
    """
    results: list[tuple[str, TestResult]] = []
    with open(in_path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            kind = row[0].strip().lower()
            samples = [np.array([float(v) for v in cell.split(";")]) for cell in row[1:]]
            if kind == "ttest":
                if len(samples) != 2:
                    raise ValueError(f"{in_path}:{rowno}: ttest needs two sample lists")
                results.append((kind, paired_ttest(samples[0], samples[1])))
            elif kind == "anova":
                results.append((kind, anova_f(samples)))
            else:
                raise ValueError(f"{in_path}:{rowno}: unknown test {kind!r}")
    mask = bh_fdr([r.p_value for _, r in results], q=q) if results else []
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["test", "statistic", "df", "p_value", "rejected"])
        for (kind, res), rejected in zip(results, mask):
            df_str = ";".join(str(int(d)) for d in res.df)
            writer.writerow([kind, f"{res.statistic:.10g}", df_str, f"{res.p_value:.10g}", rejected])
