"""Stepping methods: downhill direction x optional noise x optional rejection.

One configurable step family serves both phases: slack descent uses the
penalized energy with gamma=0, interior sampling uses gamma=1 and a large
penalty weight.  The combinations cover plain gradient descent,
Gauss-Newton, (Riemannian) Langevin dynamics, random-walk Metropolis,
MALA and Armijo-guarded variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .problem import (
    Evaluation,
    EvalCounter,
    ProblemSpec,
    SlackResult,
    evaluate,
    gn_direction,
    gn_system,
    relaxed_energy,
    slack,
)

DIRECTIONS = ("gradient", "gauss_newton", "none")
NOISES = ("none", "isotropic", "covariant")
REJECTS = ("none", "armijo", "metropolis")


@dataclass(frozen=True)
class DownhillConfig:
    """One point in the step-method family.

    ``direction='none'`` yields a pure random-walk proposal.  When
    ``langevin_tied`` is set the noise scale is locked to sqrt(2*alpha),
    which makes gradient+isotropic steps exactly discrete Langevin
    dynamics and Gauss-Newton+covariant steps its Riemannian analogue.
    """

    direction: str = "gauss_newton"
    noise: str = "none"
    reject: str = "none"
    alpha: float = 0.5
    sigma: float | None = None  # defaults to alpha when untied
    rho: float = 0.01
    lam: float = 1e-2
    delta_max: float = math.inf
    langevin_tied: bool = False

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.noise not in NOISES:
            raise ValueError(f"noise must be one of {NOISES}")
        if self.reject not in REJECTS:
            raise ValueError(f"reject must be one of {REJECTS}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.reject == "metropolis" and self.noise == "none":
            raise ValueError("Metropolis rejection needs a stochastic proposal (noise != none)")

    def effective_sigma(self) -> float:
        if self.langevin_tied:
            return math.sqrt(2.0 * self.alpha)
        return self.alpha if self.sigma is None else self.sigma


@dataclass
class StepOutcome:
    """Result of one step attempt.

    ``evaluation`` carries the Evaluation at x_new when one is available
    (it always is for accepted steps), so drivers never re-query a point
    they already paid for.
    """

    x_new: np.ndarray
    accepted: bool
    evals_used: int
    evaluation: Evaluation | None = None
    inner_iters: int = 0


def drift(
    problem: ProblemSpec,
    e: Evaluation,
    cfg: DownhillConfig,
    gamma: float,
    mu: float,
    slack_result: SlackResult | None = None,
) -> np.ndarray:
    """Deterministic displacement of the configured direction at a point."""
    sr = slack_result if slack_result is not None else slack(e)
    if cfg.direction == "gradient":
        _, grad = relaxed_energy(e, gamma, mu, slack_result=sr)
        return -(cfg.alpha * grad)
    if cfg.direction == "gauss_newton":
        step = gn_direction(e, gamma, mu, cfg.lam, hess_f=problem.hess_f, slack_result=sr)
        return cfg.alpha * step
    return np.zeros(problem.n)


def covariant_noise_factor(
    problem: ProblemSpec,
    e: Evaluation,
    cfg: DownhillConfig,
    gamma: float,
    mu: float,
    slack_result: SlackResult | None = None,
) -> np.ndarray:
    """Lower-triangular factor L with L L' = H^{-1}.

    H is the damped Gauss-Newton matrix; noise sigma*L*z then has
    precision H/sigma^2, exploring preferentially along low-curvature
    directions.
    """
    mat, _ = gn_system(e, gamma, mu, cfg.lam, problem.hess_f, slack_result)
    try:
        return np.linalg.cholesky(np.linalg.inv(mat))
    except np.linalg.LinAlgError:
        raise ValueError(
            "covariant noise needs a positive-definite step matrix; "
            "increase the damping lam"
        ) from None


def propose(
    problem: ProblemSpec,
    e: Evaluation,
    cfg: DownhillConfig,
    gamma: float,
    mu: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Propose a new point: drift plus optional noise, kept inside the box.

    Returns the proposal and the deterministic part of the displacement
    (needed by Metropolis corrections).
    """
    sr = slack(e)
    delta_det = drift(problem, e, cfg, gamma, mu, slack_result=sr)
    if cfg.noise == "none":
        noise = None
    else:
        sigma = cfg.effective_sigma()
        z = rng.standard_normal(problem.n)
        if cfg.noise == "isotropic":
            noise = sigma * z
        else:
            factor = covariant_noise_factor(problem, e, cfg, gamma, mu, slack_result=sr)
            noise = sigma * (factor @ z)

    if noise is None:
        total = delta_det
        raw = e.x + delta_det
    else:
        total = delta_det + noise
        # add the terms separately: x - alpha*grad + sigma*z evaluates left
        # to right, and matching that keeps tied proposals bit-identical to
        # the textbook Langevin update
        raw = (e.x + delta_det) + noise
    norm = float(np.linalg.norm(total))
    if norm > cfg.delta_max:
        raw = e.x + total * (cfg.delta_max / norm)
    x_prop = np.clip(raw, problem.lower, problem.upper)
    return x_prop, delta_det


def armijo_accept(
    f_x: float, f_prop: float, grad: np.ndarray, step: np.ndarray, rho: float
) -> bool:
    """Sufficient-decrease test on the realized displacement x' - x."""
    return f_prop <= f_x + rho * float(grad @ step)


def metropolis_accept(
    f_x: float,
    f_prop: float,
    q_fwd_logdens: float,
    q_rev_logdens: float,
    rng: np.random.Generator,
) -> bool:
    """Accept with probability min{1, exp(-(F' - F) + q_rev - q_fwd)}."""
    log_ratio = -(f_prop - f_x) + q_rev_logdens - q_fwd_logdens
    if not math.isfinite(log_ratio):
        raise ValueError(
            "non-finite Metropolis log ratio; the proposal density is "
            "degenerate (sigma=0?)"
        )
    if log_ratio >= 0.0:
        return True
    return rng.random() < math.exp(log_ratio)


def _proposal_logdens(
    disp: np.ndarray,
    mean_disp: np.ndarray,
    sigma: float,
    precision: np.ndarray | None,
) -> float:
    """Log density (up to shared constants) of a Gaussian proposal step.

    ``precision`` is the H matrix for covariant noise; its log-determinant
    must be kept because H varies between the two endpoints.
    """
    r = disp - mean_disp
    n = r.shape[0]
    if precision is None:
        return float(-(r @ r) / (2.0 * sigma**2) - n * math.log(sigma))
    sign, logdet = np.linalg.slogdet(precision)
    if sign <= 0:
        raise ValueError("covariant proposal needs a positive-definite matrix")
    return float(-(r @ (precision @ r)) / (2.0 * sigma**2) + 0.5 * logdet - n * math.log(sigma))


def downhill_step(
    problem: ProblemSpec,
    x: np.ndarray,
    cfg: DownhillConfig,
    gamma: float,
    mu: float,
    counter: EvalCounter,
    rng: np.random.Generator,
    evaluation: Evaluation | None = None,
) -> StepOutcome:
    """One propose/accept cycle on the penalized energy.

    ``evaluation`` passes an already-paid query at x; without it the point
    is (re-)evaluated and billed.  The proposal always costs one
    evaluation, which for Metropolis also provides the reverse drift.
    """
    evals = 0
    if evaluation is None:
        evaluation = evaluate(problem, x, counter)
        evals += 1
    e = evaluation

    x_prop, delta_det = propose(problem, e, cfg, gamma, mu, rng)
    e_prop = evaluate(problem, x_prop, counter)
    evals += 1

    if cfg.reject == "none":
        return StepOutcome(x_prop, True, evals, e_prop)

    sr = slack(e)
    sr_prop = slack(e_prop)
    f_x, grad_x = relaxed_energy(e, gamma, mu, slack_result=sr)
    f_prop, _ = relaxed_energy(e_prop, gamma, mu, slack_result=sr_prop)

    if cfg.reject == "armijo":
        ok = armijo_accept(f_x, f_prop, grad_x, x_prop - x, cfg.rho)
    else:
        sigma = cfg.effective_sigma()
        if sigma <= 0:
            raise ValueError("Metropolis rejection needs sigma > 0")
        if cfg.noise == "covariant":
            h_fwd, _ = gn_system(e, gamma, mu, cfg.lam, problem.hess_f, sr)
            h_rev, _ = gn_system(e_prop, gamma, mu, cfg.lam, problem.hess_f, sr_prop)
        else:
            h_fwd = h_rev = None
        drift_rev = drift(problem, e_prop, cfg, gamma, mu, slack_result=sr_prop)
        q_fwd = _proposal_logdens(x_prop - x, delta_det, sigma, h_fwd)
        q_rev = _proposal_logdens(x - x_prop, drift_rev, sigma, h_rev)
        ok = metropolis_accept(f_x, f_prop, q_fwd, q_rev, rng)

    if ok:
        return StepOutcome(x_prop, True, evals, e_prop)
    return StepOutcome(np.array(x, dtype=float), False, evals, e)


def preset(name: str, **overrides) -> DownhillConfig:
    """Named step configurations.

    gn: damped Gauss-Newton half steps; gn-over: overstepping
    (alpha=1.2) variant that jumps past the boundary into the interior;
    grad: plain gradient steps (alpha should be scaled to the box).
    """
    base = {
        "gn": DownhillConfig(direction="gauss_newton", alpha=0.5),
        "gn-over": DownhillConfig(direction="gauss_newton", alpha=1.2),
        "grad": DownhillConfig(direction="gradient", alpha=0.2),
    }
    try:
        cfg = base[name]
    except KeyError:
        raise KeyError(f"unknown step preset '{name}'") from None
    return replace(cfg, **overrides) if overrides else cfg
