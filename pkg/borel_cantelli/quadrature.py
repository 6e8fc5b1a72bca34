#!/usr/bin/env python3
"""
Adaptive Gauss-Kronrod quadrature on one-dimensional intervals
Handles an integrable endpoint singularity of the unit interval by an
exponential change of variables before paneling
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from borel_cantelli.errors import AccuracyError, DomainError

logger = logging.getLogger(__name__)

PANEL_BUDGET = 10_000
DEFAULT_TOLERANCE = 1e-10

# Past this distance from a singular endpoint the integrand is replaced by its
# declared power law; 2**-32 keeps 1 - u resolvable to ~5e-7 relative.
SINGULAR_CUTOFF = 2.0 ** -32

# 7-point Gauss / 15-point Kronrod abscissae and weights (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.0, 0.129484966168869693270611432679082,
    0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975,
    0.0, 0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS_WEIGHTS = np.concatenate([_WG[:-1], _WG[::-1]])

_EPS = np.finfo(float).eps
_UFLOW = np.finfo(float).tiny


@dataclass(frozen=True)
class IntegrandSpec:
    """Vectorised integrand on (0, 1) with an optional endpoint singularity.

    ``singular_order`` s declares f(u) ~ c * dist**(-s) near the singular
    endpoint; it is used for the analytic tail beyond SINGULAR_CUTOFF.
    """
    f: Callable[[np.ndarray], np.ndarray]
    singular_endpoint: Optional[str] = None
    singular_order: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.singular_endpoint not in (None, "left", "right"):
            raise DomainError(f"singular_endpoint must be 'left', 'right' or None, got {self.singular_endpoint!r}")
        if self.singular_endpoint is not None and not self.singular_order < 1.0:
            raise DomainError(f"singular order {self.singular_order} is not integrable")
        if self.tolerance <= 0:
            raise DomainError("tolerance must be positive")


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    panels: int


def _kronrod_panel(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> Tuple[float, float]:
    """One G7/K15 panel: integral and QUADPACK-scaled error estimate"""
    half = 0.5 * (hi - lo)
    center = 0.5 * (hi + lo)
    values = np.asarray(g(center + half * _NODES), dtype=float)
    if values.shape != _NODES.shape:
        values = np.broadcast_to(values, _NODES.shape)
    if not np.all(np.isfinite(values)):
        raise DomainError(f"integrand is not finite on panel [{lo!r}, {hi!r}]")

    kronrod = float(np.dot(_KRONROD_WEIGHTS, values))
    gauss = float(np.dot(_GAUSS_WEIGHTS, values))
    mean = 0.5 * kronrod
    resabs = float(np.dot(_KRONROD_WEIGHTS, np.abs(values))) * abs(half)
    resasc = float(np.dot(_KRONROD_WEIGHTS, np.abs(values - mean))) * abs(half)

    error = abs((kronrod - gauss) * half)
    if resasc != 0.0 and error != 0.0:
        error = resasc * min(1.0, (200.0 * error / resasc) ** 1.5)
    if resabs > _UFLOW / (50.0 * _EPS):
        error = max(50.0 * _EPS * resabs, error)
    return kronrod * half, error


def _adaptive(g: Callable[[np.ndarray], np.ndarray], cuts: Sequence[float],
              tolerance: float, budget: int) -> QuadResult:
    """Bisect the worst panel until the summed error estimate meets the tolerance"""
    panels: List[List[float]] = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            value, error = _kronrod_panel(g, lo, hi)
            panels.append([lo, hi, value, error])

    while True:
        total_error = math.fsum(p[3] for p in panels)
        if total_error <= tolerance:
            return QuadResult(math.fsum(p[2] for p in panels), total_error, len(panels))
        if len(panels) >= budget:
            break
        worst = max(range(len(panels)), key=lambda i: panels[i][3])
        lo, hi = panels[worst][0], panels[worst][1]
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            logger.debug(f"Panel [{lo!r}, {hi!r}] cannot be split further")
            break
        left_value, left_error = _kronrod_panel(g, lo, mid)
        right_value, right_error = _kronrod_panel(g, mid, hi)
        panels[worst] = [lo, mid, left_value, left_error]
        panels.append([mid, hi, right_value, right_error])

    raise AccuracyError(
        "tolerance unreachable within panel budget",
        best_value=math.fsum(p[2] for p in panels),
        error_estimate=math.fsum(p[3] for p in panels),
    )


def _to_right_scale(u: float) -> float:
    """t = -log(1 - u)"""
    return math.inf if u >= 1.0 else -math.log1p(-u)


def _to_left_scale(u: float) -> float:
    """t = -log(u)"""
    return math.inf if u <= 0.0 else -math.log(u)


def integrate(spec: IntegrandSpec, a: float, b: float,
              breakpoints: Sequence[float] = (), panel_budget: int = PANEL_BUDGET) -> QuadResult:
    """
    Integrate spec.f over [a, b].

    Without a declared singularity the interval (split at ``breakpoints``)
    is paneled directly. With a right singularity the substitution
    u = 1 - exp(-t) is applied first, with a left singularity u = exp(-t);
    if the singular endpoint itself belongs to [a, b] the last 2**-32 of
    the interval is integrated analytically from the declared order.

    Raises AccuracyError carrying the best value when the tolerance cannot
    be met within ``panel_budget`` panels.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise DomainError(f"integration bounds must be finite with a < b, got [{a!r}, {b!r}]")
    inner = sorted(p for p in breakpoints if a < p < b)

    if spec.singular_endpoint is None:
        return _adaptive(spec.f, [a, *inner, b], spec.tolerance, panel_budget)

    if a < 0.0 or b > 1.0:
        raise DomainError(f"singular integrands live on [0, 1], got [{a!r}, {b!r}]")

    f = spec.f
    tail = 0.0
    if spec.singular_endpoint == "right":
        def g(t):
            return f(-np.expm1(-t)) * np.exp(-t)
        to_t = _to_right_scale
        if b > 1.0 - SINGULAR_CUTOFF:
            cut = 1.0 - SINGULAR_CUTOFF
            tail = float(np.asarray(f(np.array([cut])), dtype=float)[0]) * SINGULAR_CUTOFF / (1.0 - spec.singular_order)
            b = cut
        cuts = [to_t(a)] + [to_t(p) for p in inner if p < b] + [to_t(b)]
    else:
        def g(t):
            u = np.exp(-t)
            return f(u) * u
        to_t = _to_left_scale
        if a < SINGULAR_CUTOFF:
            cut = SINGULAR_CUTOFF
            tail = float(np.asarray(f(np.array([cut])), dtype=float)[0]) * SINGULAR_CUTOFF / (1.0 - spec.singular_order)
            a = cut
        # t runs the opposite way to u
        cuts = [to_t(b)] + [to_t(p) for p in reversed(inner) if p > a] + [to_t(a)]

    if not math.isfinite(tail):
        raise DomainError("integrand is not finite at the singular cutoff")
    if not a < b:
        return QuadResult(tail, abs(tail) * 1e-3, 0)

    body = _adaptive(g, cuts, spec.tolerance, panel_budget)
    return QuadResult(body.value + tail, body.error_estimate, body.panels)


def integrate_function(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                       tolerance: float = DEFAULT_TOLERANCE,
                       breakpoints: Sequence[float] = ()) -> QuadResult:
    """Shorthand for a regular integrand"""
    return integrate(IntegrandSpec(f=f, tolerance=tolerance), a, b, breakpoints=breakpoints)
