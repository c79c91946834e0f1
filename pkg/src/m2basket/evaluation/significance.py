from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.special import betainc


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool
    n: int


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``df`` dof."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Paired two-sided t-test on per-user metric values.

    All-zero differences give t=0, p=1. Constant non-zero differences have
    zero spread and give t=+-inf, p=0.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False, n)
        t = math.copysign(math.inf, mean)
    else:
        t = mean / math.sqrt(var / n)
    p = student_t_sf2(t, n - 1)
    return TTestResult(t, p, p < alpha, n)
