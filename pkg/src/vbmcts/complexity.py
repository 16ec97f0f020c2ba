"""Computable sample-complexity quantities for GP-driven optimistic planning.

These are the closed-form pieces of the PAC-style analysis: the posterior
variance threshold below which predictions are epsilon1-accurate, a
covering bound for a rectangular feature domain, the resulting learning
complexity term zeta, the implied near-optimal-step bound, exploration
weights derived from Lipschitz constants, and the exact posterior variance
at a point correlated with n coincident observations.

All logarithms are natural.  The step bound is reported with implied
constant 1 and is an order-of-magnitude diagnostic, not a guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class ComplexityInputs:
    """Inputs of the bound: value range, accuracies, discount, noise, domain.

    ``v_max`` bounds the target value; ``epsilon``/``delta`` are the policy
    accuracy/confidence, ``epsilon1``/``delta1`` the per-prediction ones.
    ``side_lengths`` are the feature-domain box sides (length ``dims``).
    Lipschitz constants are optional and only needed for the beta formulas.
    """

    v_max: float
    epsilon: float
    delta: float
    epsilon1: float
    delta1: float
    gamma: float
    noise_variance: float
    dims: int
    side_lengths: tuple[float, ...] = ()
    lipschitz_r: float | None = None
    lipschitz_p: float | None = None
    lipschitz_q: float | None = None

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError(f"v_max must be > 0, got {self.v_max}")
        for name in ("epsilon", "delta", "epsilon1", "delta1"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0,1), got {v}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(
                f"gamma must be in (0,1) — the bound diverges at gamma=1; got {self.gamma}"
            )
        if self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.dims < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if self.side_lengths and len(self.side_lengths) != self.dims:
            raise ValueError(
                f"side_lengths has {len(self.side_lengths)} entries for dims={self.dims}"
            )


def sigma_tol(inputs: ComplexityInputs) -> float:
    """Variance threshold for epsilon1-accurate predictions.

    2 * noise_variance * epsilon1^2 / (v_max^2 * ln(2 / delta1)).
    """
    return (
        2.0
        * inputs.noise_variance
        * inputs.epsilon1**2
        / (inputs.v_max**2 * math.log(2.0 / inputs.delta1))
    )


def covering_bound(side_lengths: Sequence[float], d_max: float, dims: int) -> float:
    """Balls of radius d_max needed to cover a box: 2^m * prod(L_j) / d_max^m."""
    if d_max <= 0:
        raise ValueError(f"d_max must be > 0, got {d_max}")
    sides = tuple(side_lengths)
    if len(sides) != dims:
        raise ValueError(f"{len(sides)} side lengths for dims={dims}")
    if any(L <= 0 for L in sides):
        raise ValueError("all side lengths must be > 0")
    return (2.0**dims) * math.prod(sides) / d_max**dims


def zeta_bound(inputs: ComplexityInputs, covering_number: float) -> float:
    """Learning-complexity term zeta.

    (4 v_max^2 / (epsilon^2 (1-gamma)^2)) * ln(2 * covering / delta) * covering.
    """
    if covering_number < 1:
        raise ValueError(f"covering_number must be >= 1, got {covering_number}")
    eps, g = inputs.epsilon, inputs.gamma
    return (
        4.0
        * inputs.v_max**2
        / (eps**2 * (1.0 - g) ** 2)
        * math.log(2.0 * covering_number / inputs.delta)
        * covering_number
    )


def step_bound(inputs: ComplexityInputs, covering_number: float) -> float:
    """Bound on near-suboptimal steps, implied constant 1.

    (v_max * zeta / (epsilon (1-gamma))) * ln(1/delta) * ln(1/(epsilon (1-gamma))).
    """
    zeta = zeta_bound(inputs, covering_number)
    eg = inputs.epsilon * (1.0 - inputs.gamma)
    return (inputs.v_max * zeta / eg) * math.log(1.0 / inputs.delta) * math.log(1.0 / eg)


def beta_from_lipschitz(inputs: ComplexityInputs) -> tuple[float, float]:
    """Exploration weights (L_r / (2 omega^2), L_p / (2 omega^2)).

    The source analysis is inconsistent about a factor 2 (the optimism
    argument uses L_r / omega^2); this implements the headline form.
    """
    if inputs.lipschitz_r is None or inputs.lipschitz_p is None:
        raise ValueError("beta_from_lipschitz needs lipschitz_r and lipschitz_p")
    if inputs.noise_variance <= 0:
        raise ValueError("beta_from_lipschitz needs noise_variance > 0")
    return (
        inputs.lipschitz_r / (2.0 * inputs.noise_variance),
        inputs.lipschitz_p / (2.0 * inputs.noise_variance),
    )


def repeated_point_variance(n: int, rho: float, noise_variance: float) -> float:
    """Posterior variance at correlation rho to n coincident observations.

    Unit signal variance assumed: 1 - n rho^2 / (n + noise_variance).
    This is the exact rank-one closed form, matching a real GP fit on n
    duplicated training rows.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0,1], got {rho}")
    if n == 0:
        return 1.0
    return 1.0 - n * rho**2 / (n + noise_variance)
