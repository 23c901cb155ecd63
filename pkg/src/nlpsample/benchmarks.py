"""Analytic benchmark problems.

Four families, addressable by "family.n" names as used on plot labels:
box.N (uniform box), boxgauss.N (box with a Gaussian energy clipped by
it), modes.N (union of balls, one inequality), lp.N (random linear
program).
"""

from __future__ import annotations

import numpy as np

from .problem import Evaluation, ProblemSpec


def _box_constraints(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # -(x + 1) <= 0 rows first, then x - 1 <= 0 rows
    n = x.shape[0]
    eye = np.eye(n)
    g = np.concatenate([-(x + 1.0), x - 1.0])
    jac = np.vstack([-eye, eye])
    return g, jac


def make_box(n: int) -> ProblemSpec:
    """Flat energy on the unit box: 2n inequalities, bounds at +-2."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    empty = np.zeros((0, n))

    def query(x: np.ndarray) -> Evaluation:
        g, jac_g = _box_constraints(x)
        return Evaluation(
            x=x, f=0.0, grad_f=np.zeros(n),
            g=g, jac_g=jac_g, h=np.zeros(0), jac_h=empty,
        )

    return ProblemSpec(
        n=n, lower=np.full(n, -2.0), upper=np.full(n, 2.0),
        m=2 * n, m_eq=0, query=query, name=f"box.{n}",
    )


def make_clipped_gaussian(n: int) -> ProblemSpec:
    """Box constraints plus the quadratic energy 4*(x-1)'(x-1).

    The energy's mode sits on the corner of the feasible box, so the
    target density is a Gaussian clipped by the inequalities.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    empty = np.zeros((0, n))
    ones = np.ones(n)

    def query(x: np.ndarray) -> Evaluation:
        g, jac_g = _box_constraints(x)
        d = x - ones
        return Evaluation(
            x=x, f=float(4.0 * (d @ d)), grad_f=8.0 * d,
            g=g, jac_g=jac_g, h=np.zeros(0), jac_h=empty,
        )

    return ProblemSpec(
        n=n, lower=np.full(n, -2.0), upper=np.full(n, 2.0),
        m=2 * n, m_eq=0, query=query, hess_f=8.0 * np.eye(n),
        name=f"boxgauss.{n}",
    )


def modes_centers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Centers and radii of the modes problem.

    Center 0 is the origin with radius 0.5; centers 1..2^n sit on the
    (+-1)^n corners (signs from the binary code of the index) with
    radius 0.1.
    """
    centers = np.zeros((2**n + 1, n))
    for i in range(1, 2**n + 1):
        code = i - 1
        centers[i] = [1.0 if (code >> k) & 1 else -1.0 for k in range(n)]
    radii = np.full(2**n + 1, 0.1)
    radii[0] = 0.5
    return centers, radii


def make_modes(n: int) -> ProblemSpec:
    """Union of balls, written as the single inequality min_i |x-c_i|^2/r_i^2 - 1.

    The gradient is that of the active (argmin) term; ties go to the
    lowest index, a measure-zero choice.
    """
    if not 1 <= n <= 16:
        raise ValueError("modes problem supports 1 <= n <= 16")
    centers, radii = modes_centers(n)
    inv_r2 = 1.0 / radii**2
    empty = np.zeros((0, n))

    def query(x: np.ndarray) -> Evaluation:
        diffs = x[None, :] - centers
        terms = np.einsum("ij,ij->i", diffs, diffs) * inv_r2 - 1.0
        i = int(np.argmin(terms))
        grad = 2.0 * inv_r2[i] * diffs[i]
        return Evaluation(
            x=x, f=0.0, grad_f=np.zeros(n),
            g=np.array([terms[i]]), jac_g=grad[None, :],
            h=np.zeros(0), jac_h=empty,
        )

    return ProblemSpec(
        n=n, lower=np.full(n, -1.2), upper=np.full(n, 1.2),
        m=1, m_eq=0, query=query, name=f"modes.{n}",
    )


def make_random_lp(n: int, rng_seed: int = 0) -> ProblemSpec:
    """Random linear program: G x - 0.2 <= 0 with 5n standard normal rows.

    The origin is strictly feasible for every seed.  Sampling bounds are
    +-2, wide enough to contain the feasible neighborhood of the origin.
    """
    rng = np.random.default_rng(rng_seed)
    mat = rng.standard_normal((5 * n, n))
    empty = np.zeros((0, n))

    def query(x: np.ndarray) -> Evaluation:
        return Evaluation(
            x=x, f=0.0, grad_f=np.zeros(n),
            g=mat @ x - 0.2, jac_g=mat, h=np.zeros(0), jac_h=empty,
        )

    return ProblemSpec(
        n=n, lower=np.full(n, -2.0), upper=np.full(n, 2.0),
        m=5 * n, m_eq=0, query=query, name=f"lp.{n}",
    )


_FAMILIES = {
    "box": make_box,
    "boxgauss": make_clipped_gaussian,
    "modes": make_modes,
}


def get_problem(name: str, rng_seed: int = 0) -> ProblemSpec:
    """Look up a benchmark by its "family.n" name, e.g. "box.2" or "lp.2".

    The seed only affects the lp family, whose instances are randomized.
    """
    try:
        family, dim_str = name.split(".")
        dim = int(dim_str)
    except ValueError:
        raise KeyError(f"unknown problem '{name}' (expected family.n, e.g. box.2)") from None
    if family == "lp":
        return make_random_lp(dim, rng_seed)
    if family in _FAMILIES:
        return _FAMILIES[family](dim)
    raise KeyError(f"unknown problem family '{family}' (choose from box, boxgauss, modes, lp)")


PROBLEM_NAMES = ("box.2", "box.6", "modes.2", "modes.6", "lp.2", "boxgauss.2")
