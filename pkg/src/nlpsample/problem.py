"""Core problem interface: point-wise queryable constrained problems.

A problem bundles an energy f, inequalities g(x) <= 0, equalities h(x) = 0
and box bounds, all queryable at a point together with first derivatives.
One query returns everything and costs exactly one evaluation; the
evaluation count is the budget currency used throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg


class EvaluationError(RuntimeError):
    """A user function returned a non-finite value."""


@dataclass(frozen=True)
class Evaluation:
    """One costed query result at a point x.

    Shapes: f scalar, grad_f (n,), g (m,), jac_g (m, n), h (m_eq,),
    jac_h (m_eq, n).
    """

    x: np.ndarray
    f: float
    grad_f: np.ndarray
    g: np.ndarray
    jac_g: np.ndarray
    h: np.ndarray
    jac_h: np.ndarray


@dataclass(frozen=True)
class ProblemSpec:
    """A sampling problem with box bounds and differentiable constraints.

    ``query`` must be pure: repeated calls at the same x return identical
    values.  ``hess_f`` optionally supplies a constant Hessian (exact for
    the quadratic benchmark energies); None means the zero matrix, i.e.
    pure Gauss-Newton curvature on the slack.
    """

    n: int
    lower: np.ndarray
    upper: np.ndarray
    m: int
    m_eq: int
    query: Callable[[np.ndarray], Evaluation]
    hess_f: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if not np.all(self.lower < self.upper):
            raise ValueError("box bounds require lower < upper elementwise")

    @property
    def box_scale(self) -> float:
        """Mean box edge length, used to scale default step sizes."""
        return float(np.mean(self.upper - self.lower))

    @property
    def box_diagonal(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass
class EvalCounter:
    """Counts problem queries; one query is one evaluation."""

    count: int = 0

    def bump(self) -> int:
        self.count += 1
        return self.count


@dataclass(frozen=True)
class SlackResult:
    """Stacked constraint violations and their Jacobian.

    ``s`` stacks clamped inequality violations then absolute equality
    violations; ``total`` is the L1 violation, ``sq`` the squared penalty.
    """

    s: np.ndarray
    jac_s: np.ndarray
    total: float
    sq: float


_EVAL_FIELDS = ("f", "grad_f", "g", "jac_g", "h", "jac_h")


def evaluate(problem: ProblemSpec, x: np.ndarray, counter: EvalCounter) -> Evaluation:
    """Query the problem at x, bill one evaluation, and validate the result.

    Raises EvaluationError naming the offending component if the user
    function returns NaN or Inf anywhere.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"query point has shape {x.shape}, expected ({problem.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("query point must be finite")
    e = problem.query(x)
    counter.bump()
    for name in _EVAL_FIELDS:
        if not np.all(np.isfinite(getattr(e, name))):
            raise EvaluationError(
                f"problem {problem.name or '<anonymous>'} returned a non-finite "
                f"value in component '{name}' at x={x!r}"
            )
    return e


def slack(e: Evaluation) -> SlackResult:
    """Constraint violations at an evaluated point.

    Inequality rows of the Jacobian are zero wherever g_i <= 0 (inactive
    or exactly active), equality rows carry sign(h_j) with sign(0) = 0;
    this keeps jac_s.T @ s continuous across activation boundaries.
    """
    n = e.x.shape[0]
    g_pos = np.maximum(e.g, 0.0)
    h_abs = np.abs(e.h)
    s = np.concatenate([g_pos, h_abs])

    jac_g = np.where((e.g > 0.0)[:, None], e.jac_g, 0.0) if e.g.size else np.zeros((0, n))
    jac_h = np.sign(e.h)[:, None] * e.jac_h if e.h.size else np.zeros((0, n))
    jac_s = np.vstack([jac_g, jac_h]) if s.size else np.zeros((0, n))

    total = float(np.sum(s))
    return SlackResult(s=s, jac_s=jac_s, total=total, sq=float(s @ s))


def relaxed_energy(
    e: Evaluation,
    gamma: float,
    mu: float,
    slack_result: SlackResult | None = None,
) -> tuple[float, np.ndarray]:
    """Penalized energy gamma*f + mu*s's and its gradient.

    gamma=0 gives the pure slack descent objective, gamma=1 with large mu
    the interior sampling energy.
    """
    sr = slack_result if slack_result is not None else slack(e)
    value = gamma * e.f + mu * sr.sq
    gradient = gamma * e.grad_f + 2.0 * mu * (sr.jac_s.T @ sr.s)
    return float(value), gradient


def gn_system(
    e: Evaluation,
    gamma: float,
    mu: float,
    lam: float,
    hess_f: np.ndarray | None = None,
    slack_result: SlackResult | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton normal equations (matrix, right-hand side) at a point.

    The matrix is gamma*hess_f + 2*mu*Js'Js + lam*I with lam a
    Levenberg-Marquardt damping; the RHS is minus the relaxed-energy
    gradient.
    """
    n = e.x.shape[0]
    sr = slack_result if slack_result is not None else slack(e)
    mat = 2.0 * mu * (sr.jac_s.T @ sr.jac_s)
    if gamma != 0.0 and hess_f is not None:
        mat = mat + gamma * hess_f
    if lam != 0.0:
        mat = mat + lam * np.eye(n)
    rhs = -(gamma * e.grad_f + 2.0 * mu * (sr.jac_s.T @ sr.s))
    return mat, rhs


def gn_direction(
    e: Evaluation,
    gamma: float,
    mu: float,
    lam: float,
    hess_f: np.ndarray | None = None,
    slack_result: SlackResult | None = None,
) -> np.ndarray:
    """Damped Gauss-Newton step for the relaxed energy.

    Solves (gamma*hess_f + 2*mu*Js'Js + lam*I) d = -grad by a Cholesky
    solve.  With lam=0 a singular but consistent system falls back to the
    minimum-norm solution; an inconsistent singular system raises with a
    hint to use damping.
    """
    mat, rhs = gn_system(e, gamma, mu, lam, hess_f, slack_result)
    try:
        cf = scipy.linalg.cho_factor(mat, check_finite=False)
        return scipy.linalg.cho_solve(cf, rhs, check_finite=False)
    except scipy.linalg.LinAlgError:
        delta, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
        residual = np.linalg.norm(mat @ delta - rhs)
        if residual > 1e-8 * max(1.0, np.linalg.norm(rhs)):
            raise ValueError(
                "singular Gauss-Newton system with inconsistent right-hand "
                "side; use a damping lam > 0"
            ) from None
        return delta


def clip_step(
    x: np.ndarray,
    delta: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    delta_max: float = np.inf,
) -> np.ndarray:
    """Apply a step subject to a maximum length and the box bounds."""
    norm = float(np.linalg.norm(delta))
    if norm > delta_max:
        delta = delta * (delta_max / norm)
    return np.clip(x + delta, lower, upper)


def is_feasible(sr: SlackResult, eps: float) -> bool:
    """Total violation within tolerance (boundary inclusive)."""
    return sr.total <= eps


def wrap_counter(problem: ProblemSpec, audit: EvalCounter) -> ProblemSpec:
    """Problem whose queries additionally bump an audit counter.

    Used in tests to verify that reported evaluation counts match the
    queries actually issued.
    """

    def audited_query(x: np.ndarray) -> Evaluation:
        audit.bump()
        return problem.query(x)

    return ProblemSpec(
        n=problem.n,
        lower=problem.lower,
        upper=problem.upper,
        m=problem.m,
        m_eq=problem.m_eq,
        query=audited_query,
        hess_f=problem.hess_f,
        name=problem.name,
    )
