"""
Box-constrained limited-memory BFGS for maximizing a smooth objective.

A projected quasi-Newton scheme: variables sitting on a bound with the gradient
pushing outward are frozen, the two-loop recursion builds a direction on the
remaining free variables, and a backtracking search runs along the projected
path ``clip(x + t d, lo, hi)``. The objective returns value and gradient
together, and each line-search trial costs exactly one call.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LbfgsConfig", "FitTrace", "ObjectiveNaNError", "maximize", "projected_gradient"]

_EPS = np.finfo(np.float64).eps


class ObjectiveNaNError(FloatingPointError):
    def __init__(self, x):
        self.x = np.array(x, copy=True)
        super().__init__(f"objective returned NaN at x (first entries {self.x[:5]})")


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 7
    max_iter: int = 10_000
    f_rtol: float = 100 * _EPS
    g_tol: float = float(np.sqrt(_EPS))
    max_linesearch: int = 40
    armijo: float = 1e-4
    # relative slack under which value differences are treated as roundoff
    f_noise: float = 1e-12


@dataclass
class FitTrace:
    status: str
    iterations: int
    evaluations: int
    value: float
    proj_grad_norm: float
    f_best: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"


def projected_gradient(x, grad, lo, hi):
    """Projected gradient of a maximization problem: ``clip(x + g) - x``."""
    return np.clip(x + grad, lo, hi) - x


def _two_loop(g, pairs, free, h0=None):
    """Apply the inverse-Hessian approximation to g, restricted to free variables.

    ``h0`` is an optional positive diagonal for the initial inverse Hessian,
    scaled by the usual ``s^T y / y^T H0 y`` factor.
    """
    d0 = 1.0 if h0 is None else h0
    q = np.where(free, g, 0.0)
    used = []
    for s, y in reversed(pairs):
        sf = np.where(free, s, 0.0)
        yf = np.where(free, y, 0.0)
        sy = sf @ yf
        if sy <= _EPS * np.linalg.norm(sf) * np.linalg.norm(yf) or sy <= 0.0:
            continue
        rho = 1.0 / sy
        a = rho * (sf @ q)
        q -= a * yf
        used.append((sf, yf, rho, a))
    if used:
        sf, yf, _, _ = used[0]
        gamma = (sf @ yf) / (yf @ (d0 * yf))
    else:
        gamma = 1.0
    r = gamma * d0 * q
    for sf, yf, rho, a in reversed(used):
        b = rho * (yf @ r)
        r += sf * (a - b)
    return r, bool(used)


def maximize(objective, x0, bounds, cfg=None, callback=None, precondition=None):
    """Maximize ``objective`` over the box ``bounds = (lo, hi)``.

    ``objective(x)`` must return ``(value, gradient)``. Terminates when the
    relative increase of the value falls below ``cfg.f_rtol`` and the
    infinity norm of the projected gradient is below ``cfg.g_tol``.

    ``precondition(x)``, if given, returns a positive vector used as the
    diagonal of the initial inverse Hessian (and of the first steepest-ascent
    step). It changes only the search directions, never the stopping rule.

    Returns ``(x, trace)``; ``trace.status`` is one of ``"converged"``,
    ``"max_iter"`` or ``"line_search_failed"`` (with the best iterate returned).
    """
    cfg = cfg or LbfgsConfig()
    x = np.array(x0, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(bounds[0], dtype=np.float64), x.shape)
    hi = np.broadcast_to(np.asarray(bounds[1], dtype=np.float64), x.shape)
    if np.any(lo >= hi):
        raise ValueError("lower bounds must be strictly below upper bounds")
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("starting point outside the bounds")

    evaluations = 0

    def fun(z):
        nonlocal evaluations
        evaluations += 1
        val, grad = objective(z)
        grad = np.asarray(grad, dtype=np.float64)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            raise ObjectiveNaNError(z)
        # work with the minimization problem internally
        return -float(val), -grad

    f, g = fun(x)
    pairs = deque(maxlen=cfg.memory)
    f_best = [-f]
    best_x, best_f = x.copy(), f
    rel_dec = np.inf
    status = "max_iter"
    it = 0
    pgn = np.inf
    while True:
        pgn = float(np.max(np.abs(projected_gradient(x, -g, lo, hi)), initial=0.0))
        if pgn < cfg.g_tol and (it == 0 or rel_dec < cfg.f_rtol):
            status = "converged"
            break
        if it >= cfg.max_iter:
            status = "max_iter"
            break
        it += 1
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        h0 = None if precondition is None else np.asarray(precondition(x), dtype=np.float64)
        r, has_memory = _two_loop(g, pairs, free, h0)
        d = -r
        slope = g @ d
        if not has_memory or slope >= 0:
            d = -np.where(free, g, 0.0) * (1.0 if h0 is None else h0)
            if not has_memory:
                d /= max(np.linalg.norm(d), 1.0)
            pairs.clear()

        t = 1.0
        accepted = False
        for _ in range(cfg.max_linesearch):
            x_t = np.clip(x + t * d, lo, hi)
            s = x_t - x
            if not np.any(s):
                break
            f_t, g_t = fun(x_t)
            gs = g @ s
            if f_t <= f + cfg.armijo * gs:
                accepted = True
            elif f_t <= f + cfg.f_noise * abs(f) and g_t @ s <= (1.0 - 2.0 * cfg.armijo) * abs(gs):
                # value change lost in roundoff; fall back to the slope form of Armijo
                accepted = gs < 0
            if accepted:
                break
            t *= 0.5
        if not accepted:
            # no admissible increase exists: the relative increase is zero
            status = "converged" if pgn < cfg.g_tol else "line_search_failed"
            x, f = best_x, best_f
            break

        y = g_t - g
        sy = s @ y
        if sy > _EPS * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y))
        rel_dec = (f - f_t) / max(abs(f), abs(f_t), 1.0)
        x, f, g = x_t, f_t, g_t
        if f < best_f:
            best_x, best_f = x.copy(), f
        f_best.append(-best_f)
        if callback is not None:
            callback(x, -f, -g)

    trace = FitTrace(
        status=status,
        iterations=it,
        evaluations=evaluations,
        value=-f,
        proj_grad_norm=pgn,
        f_best=f_best,
    )
    return x, trace
