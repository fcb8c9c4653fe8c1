"""Continuation of positive solutions in alpha from the second-order case."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..geometry import DiscretizedManifold, SolutionField
from ..kernel import assemble
from ..mobius import exponent_estimate
from ..riesz import ProblemSpec
from ..solver import solve, yamabe_alpha

log = logging.getLogger(__name__)


@dataclass
class ContinuationPath:
    alphas: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    sup_norms: list = field(default_factory=list)
    inf_values: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    yamabe: list = field(default_factory=list)
    mass_bound: list = field(default_factory=list)
    tail_bounds: list = field(default_factory=list)
    bound: float = np.inf
    status: str = ""
    last_good_alpha: float = float("nan")
    failed_report: object = None

    @property
    def completed(self):
        return self.status == "completed"

    @property
    def compact(self):
        """Both sup u and 1/inf u stayed below the bound along the path."""
        return bool(self.sup_norms) and max(self.sup_norms) <= self.bound and \
            max(1 / v for v in self.inf_values) <= self.bound

    def rows(self):
        return [(a, m, i, r, y) for a, m, i, r, y in
                zip(self.alphas, self.sup_norms, self.inf_values, self.residuals, self.yamabe)]


def alpha_grid(alpha_end, step, alpha_start=2.0):
    if not step > 0:
        raise ValueError("continuation step must be positive")
    if alpha_end < alpha_start:
        raise ValueError("alpha_end must be >= alpha_start")
    m = int(np.floor((alpha_end - alpha_start) / step + 1e-9))
    a = [alpha_start + k * step for k in range(m + 1)]
    if alpha_end - a[-1] > 1e-9:
        a.append(alpha_end)
    return a


def continue_alpha(spec: ProblemSpec, chart: DiscretizedManifold, alpha_end, step, bound=1e3,
                   with_yamabe=False, kernel_kw=None, solve_kw=None, check_exponent=True,
                   alpha_start=2.0):
    """Solve u = I_alpha(u^p) along alpha = alpha_start (normally 2),
    alpha_start + step, ..., alpha_end.

    The first solve starts from the constant guess, later ones from the
    previous solution.  Stops at the first failed solve (status
    "solve_failed") or at the first alpha where sup u or 1/inf u exceeds
    ``bound`` (status "bound_violation").
    """
    n = chart.n
    if check_exponent:
        delta = exponent_estimate(chart.group) if not chart.group.is_trivial else 0.0
        if not alpha_end < n - 2 * delta:
            raise ValueError(f"alpha_end {alpha_end} must be below n - 2*exponent = {n - 2 * delta:g}")
    path = ContinuationPath(bound=bound)
    kernel_kw = kernel_kw or {}
    solve_kw = solve_kw or {}
    u0 = None
    for a in alpha_grid(alpha_end, step, alpha_start):
        sp = spec.with_alpha(a)
        K = assemble(chart, sp, **kernel_kw)
        sol, rep = solve(sp, chart, K, u0=u0, **solve_kw)
        log.info("alpha %.4f: %s residual %.2e", a, rep.status, rep.final_residual)
        if not rep.converged:
            path.status = "solve_failed"
            path.failed_report = rep
            return path
        path.alphas.append(a)
        path.solutions.append(sol)
        path.sup_norms.append(float(sol.values.max()))
        path.inf_values.append(float(sol.values.min()))
        path.residuals.append(rep.final_residual)
        path.mass_bound.append((rep.mass_bound_lhs, rep.mass_bound_rhs))
        path.tail_bounds.append(K.tail_bound)
        path.yamabe.append(yamabe_alpha(sp, chart, K) if with_yamabe else float("nan"))
        path.last_good_alpha = a
        if path.sup_norms[-1] > bound or 1 / path.inf_values[-1] > bound:
            path.status = "bound_violation"
            return path
        u0 = sol.values
    path.status = "completed"
    return path


def endpoint_change(p1: ContinuationPath, p2: ContinuationPath):
    """Sup difference of the endpoint solutions of two completed paths."""
    return float(np.abs(p1.solutions[-1].values - p2.solutions[-1].values).max())
