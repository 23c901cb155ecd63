"""Interior sampling from a (near-)feasible seed.

Methods that handle constraints explicitly: non-linear Metropolis-adjusted
Hit-and-Run (NHR), standard Hit-and-Run for affine inequalities, and a
manifold RRT whose growth steps stay tangential to the equalities.  The
Langevin/MCMC family from the steps module is also wired up here, applied
to the penalized energy with a large penalty weight.  SlackReduce projects
stray iterates back to (approximate) feasibility with full Gauss-Newton
steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .problem import (
    Evaluation,
    EvalCounter,
    ProblemSpec,
    clip_step,
    evaluate,
    gn_direction,
    slack,
)
from .steps import DownhillConfig, StepOutcome, downhill_step

INTERIOR_METHODS = ("none", "NHR", "HR", "mRRT", "MCMC", "Langevin", "MALA", "RLangevin")


@dataclass(frozen=True)
class Interval:
    """Line-parameter bounds; lo > up encodes an empty interval."""

    lo: float
    up: float

    @property
    def empty(self) -> bool:
        return self.lo > self.up


@dataclass(frozen=True)
class InteriorConfig:
    """Which interior method runs and with what budgets.

    Fields left at None are resolved against the problem's box scale by
    ``resolved_for``.  ``mu`` is the penalty weight of the interior energy
    used by the MCMC/Langevin variants; ``eps_margin`` is the width of the
    two-sided inequalities that stand in for equalities inside NHR.
    """

    method: str = "NHR"
    k_burn: int = 0
    k_sam: int = 1
    mu: float = 1e3
    alpha: float | None = None
    sigma: float | None = None
    delta_max: float | None = None
    eps_margin: float = 1e-2
    initial_clip: bool = False
    inner_cap: int = 50
    alpha_grow: float | None = None
    lam: float = 1e-2
    eps_proj: float = 1e-8
    reduce_lam: float = 1e-6
    reduce_iters: int = 20

    def __post_init__(self):
        if self.method not in INTERIOR_METHODS:
            raise ValueError(f"interior method must be one of {INTERIOR_METHODS}")
        if self.k_burn < 0:
            raise ValueError("k_burn must be >= 0")
        if self.k_sam < 1:
            raise ValueError("k_sam must be >= 1")

    def resolved_for(self, problem: ProblemSpec) -> "InteriorConfig":
        """Fill scale-dependent defaults from the problem's box."""
        scale = problem.box_scale
        updates = {}
        if self.alpha is None:
            updates["alpha"] = 0.00125 * scale**2
        if self.sigma is None:
            updates["sigma"] = 0.05 * scale
        if self.delta_max is None:
            updates["delta_max"] = 0.5 * problem.box_diagonal
        if self.alpha_grow is None:
            updates["alpha_grow"] = 0.3 * scale
        return replace(self, **updates) if updates else self


def clip_interval(iv: Interval, gbar: np.ndarray, a: np.ndarray) -> Interval:
    """Shrink a line interval by the constraints gbar + beta*a <= 0.

    Rows with a_i = 0 leave the interval alone unless they are violated
    outright (gbar_i > 0), which empties it.
    """
    lo, up = iv.lo, iv.up
    gbar = np.asarray(gbar, dtype=float)
    a = np.asarray(a, dtype=float)
    neg = a < 0
    pos = a > 0
    if np.any(neg):
        lo = max(lo, float(np.max(-gbar[neg] / a[neg])))
    if np.any(pos):
        up = min(up, float(np.min(-gbar[pos] / a[pos])))
    if np.any((a == 0) & (gbar > 0)):
        return Interval(math.inf, -math.inf)
    return Interval(lo, up)


def box_interval(
    x: np.ndarray,
    d: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    delta_max: float,
) -> Interval:
    """Initial step interval [-delta_max, delta_max] clipped by the box."""
    iv = Interval(-delta_max, delta_max)
    iv = clip_interval(iv, lower - x, -d)
    return clip_interval(iv, x - upper, d)


def sample_direction(
    rng: np.random.Generator, n: int, tangent: np.ndarray | None = None
) -> np.ndarray | None:
    """Uniform unit direction, optionally projected into a tangent space.

    Returns None if the projected direction degenerates (tangent space
    numerically empty) after a few retries.
    """
    for _ in range(5):
        z = rng.standard_normal(n)
        if tangent is not None:
            z = tangent @ z
        norm = float(np.linalg.norm(z))
        if norm > 1e-12:
            return z / norm
    return None


def tangent_projection(jac_h: np.ndarray, eps_proj: float = 1e-8) -> np.ndarray:
    """Projector onto directions tangential to the equality constraints.

    Computes I - J'(JJ' + eps*I)^{-1}J; the regularization keeps the
    projection defined for rank-deficient Jacobians.
    """
    m_eq, n = jac_h.shape
    if m_eq == 0:
        return np.eye(n)
    gram = jac_h @ jac_h.T
    if eps_proj != 0.0:
        gram = gram + eps_proj * np.eye(m_eq)
    return np.eye(n) - jac_h.T @ np.linalg.solve(gram, jac_h)


def _augmented_inequalities(
    e: Evaluation, eps_margin: float
) -> tuple[np.ndarray, np.ndarray]:
    """Inequalities plus equalities recast as two-sided margins."""
    if e.h.size == 0:
        return e.g, e.jac_g
    g = np.concatenate([e.g, e.h - eps_margin, -e.h - eps_margin])
    jac = np.vstack([e.jac_g, e.jac_h, -e.jac_h])
    return g, jac


def hr_step(
    problem: ProblemSpec,
    e_x: Evaluation,
    delta_max: float,
    counter: EvalCounter,
    rng: np.random.Generator,
) -> Evaluation:
    """One standard Hit-and-Run step; requires affine inequalities.

    Samples a uniform direction, intersects the line with box bounds and
    all inequalities, then steps to a uniform point of the segment.
    """
    d = sample_direction(rng, problem.n)
    iv = box_interval(e_x.x, d, problem.lower, problem.upper, delta_max)
    if e_x.g.size:
        iv = clip_interval(iv, e_x.g, e_x.jac_g @ d)
    if iv.empty:
        raise ValueError(
            "empty hit-and-run interval at an interior point; the "
            "constraint system is inconsistent or the point infeasible"
        )
    beta = rng.uniform(iv.lo, iv.up)
    return evaluate(problem, e_x.x + beta * d, counter)


def nhr_step(
    problem: ProblemSpec,
    e_x: Evaluation,
    cfg: InteriorConfig,
    counter: EvalCounter,
    rng: np.random.Generator,
) -> StepOutcome:
    """Hit-and-Run generalized to non-linear inequalities and energies.

    Candidates are drawn uniformly from a line interval; every infeasible
    candidate costs one evaluation and shrinks the interval using only its
    violated rows, linearized at the candidate.  A feasible candidate is
    Metropolis-tested against exp(-f).  Equalities take part as two-sided
    margin inequalities and the direction is kept tangential to them.  An
    empty interval (or hitting the iteration cap) is a failure, not an
    error; the chain simply stays put.
    """
    x = e_x.x
    tangent = None
    if problem.m_eq > 0:
        tangent = tangent_projection(e_x.jac_h, cfg.eps_proj)
    d = sample_direction(rng, problem.n, tangent)
    if d is None:
        return StepOutcome(x, False, 0, e_x)

    iv = box_interval(x, d, problem.lower, problem.upper, cfg.delta_max)
    if cfg.initial_clip:
        g0, jac0 = _augmented_inequalities(e_x, cfg.eps_margin)
        if g0.size:
            iv = clip_interval(iv, g0, jac0 @ d)

    evals = 0
    for inner in range(1, cfg.inner_cap + 1):
        if iv.empty:
            break
        beta = rng.uniform(iv.lo, iv.up)
        y = x + beta * d
        e_y = evaluate(problem, y, counter)
        evals += 1
        g_y, jac_y = _augmented_inequalities(e_y, cfg.eps_margin)
        if np.all(g_y <= 0.0):
            if e_y.f <= e_x.f or rng.random() < math.exp(e_x.f - e_y.f):
                return StepOutcome(y, True, evals, e_y, inner_iters=inner)
            return StepOutcome(x, False, evals, e_x, inner_iters=inner)
        rows = g_y >= 0.0
        gbar = g_y[rows] + jac_y[rows] @ (x - y)
        iv = clip_interval(iv, gbar, jac_y[rows] @ d)
    return StepOutcome(x, False, evals, e_x, inner_iters=cfg.inner_cap)


def _reduce_from(
    problem: ProblemSpec,
    e0: Evaluation,
    counter: EvalCounter,
    lam: float,
    max_iters: int,
    eps: float,
) -> tuple[Evaluation, int]:
    """Full Gauss-Newton slack descent from an evaluated point.

    Returns the best iterate by total violation together with the number
    of steps taken.
    """
    e = e0
    sr = slack(e)
    best_e, best_total = e, sr.total
    iters = 0
    while sr.total > eps and iters < max_iters:
        delta = gn_direction(e, 0.0, 1.0, lam, slack_result=sr)
        x_new = clip_step(e.x, delta, problem.lower, problem.upper)
        e = evaluate(problem, x_new, counter)
        sr = slack(e)
        iters += 1
        if sr.total < best_total:
            best_e, best_total = e, sr.total
    return best_e, iters


def slack_reduce(
    problem: ProblemSpec,
    x: np.ndarray,
    counter: EvalCounter,
    lam: float = 1e-6,
    max_iters: int = 20,
    eps: float = 1e-3,
) -> np.ndarray:
    """Project a point toward feasibility by full Gauss-Newton slack steps.

    Non-convergence is not an error: the best iterate seen is returned and
    the caller decides what feasibility it needs.
    """
    e = evaluate(problem, x, counter)
    best, _ = _reduce_from(problem, e, counter, lam, max_iters, eps)
    return best.x


@dataclass
class TreeNode:
    """A grown point together with its equality tangent projector."""

    x: np.ndarray
    proj: np.ndarray


class MrrtTree:
    """Exact nearest-neighbor store for tree nodes.

    A linear scan is plenty at desk scale; swap in a spatial index behind
    the same two methods if trees grow past ~1e4 nodes.
    """

    def __init__(self, nodes: list[TreeNode] | None = None):
        self.nodes: list[TreeNode] = list(nodes) if nodes else []

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, node: TreeNode) -> None:
        self.nodes.append(node)

    def nearest(self, target: np.ndarray) -> TreeNode:
        coords = np.array([node.x for node in self.nodes])
        dists = np.linalg.norm(coords - target[None, :], axis=1)
        return self.nodes[int(np.argmin(dists))]


def mrrt_step(
    problem: ProblemSpec,
    tree: MrrtTree,
    cfg: InteriorConfig,
    eps: float,
    counter: EvalCounter,
    rng: np.random.Generator,
) -> StepOutcome:
    """Grow the tree once: random target, tangential step, slack reduction.

    The grown node is always inserted; whether it qualifies as a sample is
    the caller's feasibility check.  A degenerate (zero-length) projected
    step is retried with fresh targets and eventually skipped.
    """
    delta = None
    node = None
    for _ in range(10):
        target = rng.uniform(problem.lower, problem.upper)
        node = tree.nearest(target)
        cand = node.proj @ (target - node.x)
        norm = float(np.linalg.norm(cand))
        if norm > 1e-12:
            delta = cand * (cfg.alpha_grow / norm)
            break
    if delta is None:
        return StepOutcome(node.x, False, 0, None)

    x_raw = np.clip(node.x + delta, problem.lower, problem.upper)
    e0 = evaluate(problem, x_raw, counter)
    evals = 1
    before = counter.count
    e_new, _ = _reduce_from(
        problem, e0, counter, cfg.reduce_lam, cfg.reduce_iters, eps
    )
    evals += counter.count - before
    tree.add(TreeNode(e_new.x, tangent_projection(e_new.jac_h, cfg.eps_proj)))
    return StepOutcome(e_new.x, True, evals, e_new)


def _stepper_config(cfg: InteriorConfig) -> DownhillConfig:
    """Canonical step setups for the MCMC/Langevin interior variants."""
    common = dict(lam=cfg.lam, delta_max=cfg.delta_max)
    if cfg.method == "MCMC":
        return DownhillConfig(
            direction="none", noise="isotropic", reject="metropolis",
            alpha=1.0, sigma=cfg.sigma, **common,
        )
    if cfg.method == "Langevin":
        return DownhillConfig(
            direction="gradient", noise="isotropic", reject="none",
            alpha=cfg.alpha, langevin_tied=True, **common,
        )
    if cfg.method == "MALA":
        return DownhillConfig(
            direction="gradient", noise="isotropic", reject="metropolis",
            alpha=cfg.alpha, langevin_tied=True, **common,
        )
    if cfg.method == "RLangevin":
        return DownhillConfig(
            direction="gauss_newton", noise="covariant", reject="none",
            alpha=cfg.alpha, langevin_tied=True, **common,
        )
    raise ValueError(f"no stepper for interior method '{cfg.method}'")


def interior_chain(
    problem: ProblemSpec,
    e_seed: Evaluation,
    cfg: InteriorConfig,
    eps: float,
    counter: EvalCounter,
    rng: np.random.Generator,
    emit: Callable[[Evaluation], bool],
) -> int:
    """Run one burn-in + sampling chain from a feasible seed.

    The current state is offered to ``emit`` once per post-burn-in
    iteration (duplicates from rejected moves included, as usual for
    Markov chains), provided it is feasible and at least one evaluation
    happened since the previous emission.  Iterates that drift past the
    feasibility tolerance are pulled back by slack reduction.  ``emit``
    returns False to stop early; the return value is the number of
    emitted samples.
    """
    cfg = cfg.resolved_for(problem)
    e = e_seed
    sr = slack(e)
    tree = None
    stepper = None
    if cfg.method == "mRRT":
        tree = MrrtTree([TreeNode(e.x, tangent_projection(e.jac_h, cfg.eps_proj))])
    elif cfg.method in ("MCMC", "Langevin", "MALA", "RLangevin"):
        stepper = _stepper_config(cfg)

    emitted = 0
    last_emit_count = -1
    total = cfg.k_burn + cfg.k_sam
    for k in range(1, total + 1):
        if k > cfg.k_burn and sr.total <= eps and counter.count > last_emit_count:
            emitted += 1
            last_emit_count = counter.count
            if not emit(e):
                break
        if k == total:
            break

        if cfg.method == "NHR":
            out = nhr_step(problem, e, cfg, counter, rng)
            if out.accepted:
                e = out.evaluation
        elif cfg.method == "HR":
            e = hr_step(problem, e, cfg.delta_max, counter, rng)
        elif cfg.method == "mRRT":
            out = mrrt_step(problem, tree, cfg, eps, counter, rng)
            if out.evaluation is not None:
                e = out.evaluation
        else:
            out = downhill_step(
                problem, e.x, stepper, 1.0, cfg.mu, counter, rng, evaluation=e
            )
            e = out.evaluation

        sr = slack(e)
        if sr.total > eps:
            e, _ = _reduce_from(
                problem, e, counter, cfg.reduce_lam, cfg.reduce_iters, eps
            )
            sr = slack(e)
    return emitted
