"""Limited-memory quasi-Newton minimizer with projected backtracking.

Supports the two hooks bundle adjustment needs: a projection applied inside
the line search (bound constraints, gauge renormalization) and a post-accept
rewrite of the iterate (local-chart re-centering). Descent is monotone by
construction: a step is only accepted when it lowers the objective.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

_ARMIJO = 1e-4
_MAX_BACKTRACKS = 60
_CURVATURE_EPS = 1e-12


@dataclass
class LbfgsReport:
    """Trace of one minimization run."""

    status: str = "max_iterations"
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    gradient_norms: list = field(default_factory=list)
    line_search_failure: bool = False


def _two_loop(history, g):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if history:
        s, y, _ = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize_lbfgs(fun, grad, x0, *, max_iterations=300, gradient_tolerance=1e-9,
                   step_tolerance=1e-12, history_size=10, project=None,
                   post_accept=None):
    """Minimize fun with analytic grad from x0.

    project(x) -> x is applied to every trial point inside the line search.
    post_accept(x) -> (x, chart_changed) may rewrite an accepted iterate (for
    chart re-centering); when chart_changed the gradient is recomputed there.
    Returns (x, LbfgsReport).
    """
    x = np.array(x0, dtype=np.float64)
    if project is not None:
        x = project(x)
    f = float(fun(x))
    g = np.asarray(grad(x), dtype=np.float64)
    report = LbfgsReport()
    report.objective_trace.append(f)
    report.gradient_norms.append(float(np.linalg.norm(g, np.inf)))
    history = deque(maxlen=history_size)

    for it in range(1, max_iterations + 1):
        if np.linalg.norm(g, np.inf) <= gradient_tolerance:
            report.status = "converged_gradient"
            break
        d = -_two_loop(history, g) if history else -g
        gd = float(g @ d)
        if gd >= 0.0:  # not a descent direction: restart from steepest descent
            history.clear()
            d = -g
            gd = float(g @ d)
        alpha = 1.0 if history else min(1.0, 1.0 / max(1.0, float(np.linalg.norm(g))))

        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            x_try = x + alpha * d
            if project is not None:
                x_try = project(x_try)
            f_try = float(fun(x_try))
            predicted = float(g @ (x_try - x))
            if f_try <= f + _ARMIJO * min(predicted, 0.0) and f_try < f:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if history:
                history.clear()  # retry along the raw gradient next iteration
                continue
            report.status = "line_search_failure"
            report.line_search_failure = True
            break

        g_try = np.asarray(grad(x_try), dtype=np.float64)
        s = x_try - x
        y = g_try - g
        sy = float(s @ y)
        if sy > _CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            history.append((s, y, 1.0 / sy))
        small_step = np.linalg.norm(s) <= step_tolerance * max(1.0, np.linalg.norm(x))

        if post_accept is not None:
            x, chart_changed = post_accept(x_try)
            g = np.asarray(grad(x), dtype=np.float64) if chart_changed else g_try
        else:
            x, g = x_try, g_try
        f = f_try
        report.iterations = it
        report.objective_trace.append(f)
        report.gradient_norms.append(float(np.linalg.norm(g, np.inf)))
        if small_step:
            report.status = "converged_step"
            break
    return x, report
