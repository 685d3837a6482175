"""Paired one-tailed t-test on per-seed metric vectors.

The tail probability of the t distribution is computed by adaptive Simpson
integration of the density over a finite interval (plus symmetry), so the
package needs no special-function library at runtime.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import LengthMismatchError, TooFewPairsError

TAIL_TOL = 1e-9
_MAX_DEPTH = 48


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_one_tailed: float
    dof: int
    degenerate: bool = False


def _t_density(dof):
    log_norm = (
        math.lgamma((dof + 1) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * math.log(dof * math.pi)
    )
    norm = math.exp(log_norm)
    power = -(dof + 1) / 2.0

    def pdf(u):
        return norm * (1.0 + u * u / dof) ** power

    return pdf


def _adaptive_simpson(f, a, b, tol):
    def simpson(lo, hi, f_lo, f_mid, f_hi):
        return (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)

    def recurse(lo, hi, f_lo, f_mid, f_hi, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        lmid, rmid = 0.5 * (lo + mid), 0.5 * (mid + hi)
        f_lmid, f_rmid = f(lmid), f(rmid)
        left = simpson(lo, mid, f_lo, f_lmid, f_mid)
        right = simpson(mid, hi, f_mid, f_rmid, f_hi)
        if depth >= _MAX_DEPTH or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, f_lo, f_lmid, f_mid, left, tol / 2.0, depth + 1) + recurse(
            mid, hi, f_mid, f_rmid, f_hi, right, tol / 2.0, depth + 1
        )

    mid = 0.5 * (a + b)
    f_a, f_mid, f_b = f(a), f(mid), f(b)
    whole = simpson(a, b, f_a, f_mid, f_b)
    return recurse(a, b, f_a, f_mid, f_b, whole, tol, 0)


def student_t_tail(t, dof, tol=TAIL_TOL):
    """Upper-tail probability P(T_dof >= t) by numerical integration."""
    if dof < 1:
        raise ValueError("degrees of freedom must be >= 1")
    t = float(t)
    if t < 0.0:
        return 1.0 - student_t_tail(-t, dof, tol=tol)
    if t == 0.0:
        return 0.5
    mass = _adaptive_simpson(_t_density(dof), 0.0, t, tol)
    return min(max(0.5 - mass, 0.0), 1.0)


def paired_t_test(a, b):
    """One-tailed paired t-test that the first vector exceeds the second.

    Entries are paired (here: by seed). The statistic is
    ``mean(d) / (sd(d) / sqrt(n))`` on the differences ``d = a - b`` with the
    unbiased standard deviation, and the p-value is the upper tail at n-1
    degrees of freedom: small p means ``a`` is significantly larger. Zero
    spread in the differences is degenerate: p collapses to 0, 1, or 0.5 by
    the sign of the mean difference.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise LengthMismatchError(f"paired vectors differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise TooFewPairsError("need at least 2 pairs")
    diff = a - b
    n = diff.shape[0]
    mean = float(np.mean(diff))
    sd = float(np.std(diff, ddof=1))
    dof = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(statistic=0.0, p_one_tailed=0.5, dof=dof, degenerate=True)
        statistic = math.inf if mean > 0 else -math.inf
        return TTestResult(
            statistic=statistic,
            p_one_tailed=0.0 if mean > 0 else 1.0,
            dof=dof,
            degenerate=True,
        )
    statistic = mean / (sd / math.sqrt(n))
    return TTestResult(
        statistic=statistic,
        p_one_tailed=student_t_tail(statistic, dof),
        dof=dof,
    )
