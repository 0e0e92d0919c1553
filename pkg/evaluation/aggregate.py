from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import t as student_t

from common.errors import ScdgnError
from evaluation.metrics import EvalReport

CONFIDENCE = 0.95


def mean_and_halfwidth(values: Sequence[float], confidence: float = CONFIDENCE) -> Tuple[float, Optional[float]]:
    """Mean and Student-t half-width (n - 1 df); no interval for a single value."""
    x = np.asarray(values, dtype=np.float64)
    mean = float(x.mean())
    if x.size < 2:
        return mean, None
    sem = x.std(ddof=1) / np.sqrt(x.size)
    return mean, float(student_t.ppf(0.5 + confidence / 2.0, df=x.size - 1) * sem)


def aggregate_runs(reports: List[EvalReport], confidence: float = CONFIDENCE) -> EvalReport:
    """Per-seed reports -> mean +- confidence half-width across seeds."""
    if not reports:
        raise ScdgnError("aggregate_runs needs at least one report")
    ks = reports[0].ks
    if any(r.ks != ks for r in reports):
        raise ScdgnError("reports were computed with different K lists")

    hr, ndcg, hr_ci, ndcg_ci = {}, {}, {}, {}
    for k in ks:
        hr[k], hr_ci[k] = mean_and_halfwidth([r.hr[k] for r in reports], confidence)
        ndcg[k], ndcg_ci[k] = mean_and_halfwidth([r.ndcg[k] for r in reports], confidence)

    return EvalReport(
        ks=ks,
        hr=hr,
        ndcg=ndcg,
        hr_ci=hr_ci,
        ndcg_ci=ndcg_ci,
        n_runs=len(reports),
        n_tasks=reports[0].n_tasks,
        skipped=reports[0].skipped,
    )


def relative_improvement(report: EvalReport, baseline: EvalReport, metric: str, k: int) -> Optional[float]:
    """(report - baseline) / baseline for HR or NDCG at k; None when the baseline is 0."""
    base = getattr(baseline, metric)[k]
    if base == 0:
        return None
    return (getattr(report, metric)[k] - base) / base


# ------------------------------------------------------------
# Tabla de texto
# ------------------------------------------------------------
def table_columns(ks: Sequence[int]) -> List[Tuple[str, int]]:
    """HR@1, HR@5, NDCG@5 first (when present), then the remaining cutoffs."""
    lead = [("hr", 1), ("hr", 5), ("ndcg", 5)]
    cols = [c for c in lead if c[1] in ks]
    for k in ks:
        for metric in ("hr", "ndcg"):
            if (metric, k) not in cols:
                cols.append((metric, k))
    return cols


def _cell(report: EvalReport, metric: str, k: int) -> str:
    value = getattr(report, metric)[k]
    half = getattr(report, f"{metric}_ci").get(k)
    return f"{value:.3f}" if half is None else f"{value:.3f} ± {half:.3f}"


def format_table(rows: Dict[str, EvalReport], baseline: Optional[str] = None) -> str:
    if not rows:
        return ""
    ks = next(iter(rows.values())).ks
    cols = table_columns(ks)
    header = ["method"] + [f"{m.upper()}@{k}" for m, k in cols]
    body = [[name] + [_cell(rep, m, k) for m, k in cols] for name, rep in rows.items()]

    if baseline is not None and baseline in rows:
        for name, rep in rows.items():
            if name == baseline:
                continue
            line = [f"improv. {name} vs {baseline}"]
            for m, k in cols:
                imp = relative_improvement(rep, rows[baseline], m, k)
                line.append("n/a" if imp is None else f"{imp * 100:+.2f}%")
            body.append(line)

    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    def fmt(r: List[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()

    lines = [fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in body]
    return "\n".join(lines) + "\n"
