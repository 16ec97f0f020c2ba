"""Exact Gaussian-process regression for the reward world model.

Squared-exponential kernel with per-dimension (ARD) length scales and a
zero prior mean:

    k(x, x') = alpha^2 * exp(-0.5 * (x - x')^T Lambda^-1 (x - x')),
    Lambda   = diag(l_1^2, ..., l_m^2).

Everything is the standard exact-GP linear algebra done through a Cholesky
factorization of ``K + omega^2 I``, with an escalating jitter schedule when
the factorization is ill conditioned.  Hyperparameters are chosen by
multi-start gradient ascent on the log marginal likelihood followed by a
cross-validated model comparison (see :func:`select_hyperparams`).

``fit``/``predict`` operate on the numbers they are given -- no internal
standardization.  :class:`GPRewardModel` is the layer used by the agents:
it standardizes reward targets before fitting and maps predictions back to
raw units.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .features import FEATURE_DIM, ActionPair, State, phi, phi_batch

#: Jitter escalation schedule for the Cholesky factorization.  The first
#: attempt adds no jitter at all; afterwards the diagonal boost grows by
#: two orders of magnitude per step.
JITTER_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

LOG_2PI = math.log(2.0 * math.pi)


class IllConditionedKernelError(np.linalg.LinAlgError):
    """Raised when ``K + omega^2 I`` cannot be factored at any jitter level."""


class Prediction(NamedTuple):
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class GPHyperParams:
    """Kernel and noise hyperparameters.

    ``length_scales`` has one entry per input dimension (14 for the reward
    world model; lower-dimensional instances are fine for testing).
    """

    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float

    def __eq__(self, other):
        if not isinstance(other, GPHyperParams):
            return NotImplemented
        return (
            self.signal_variance == other.signal_variance
            and self.noise_variance == other.noise_variance
            and np.array_equal(self.length_scales, other.length_scales)
        )

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=np.float64)
        object.__setattr__(self, "length_scales", ls)
        if not np.isfinite(self.signal_variance) or self.signal_variance <= 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if ls.ndim != 1 or ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("length_scales must be a 1-d array of positive finite values")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")


def default_hyperparams(dim: int = FEATURE_DIM) -> GPHyperParams:
    """Unit signal variance, unit length scales, noise variance 0.1.

    Sensible for targets that have been standardized to zero mean and unit
    variance (which is what :class:`GPRewardModel` fits on).
    """
    return GPHyperParams(1.0, np.ones(dim), 0.1)


@dataclass(frozen=True)
class TrainingSet:
    """Input matrix (n, m) and target vector (n,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.targets, dtype=np.float64).ravel()
        if X.size == 0:
            X = X.reshape(0, X.shape[1] if X.ndim == 2 and X.shape[1] else 0)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} input rows but {y.shape[0]} targets")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("training data must be finite")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class FittedGP:
    """A trained GP: data, hyperparameters, and the Cholesky solve products.

    ``chol`` is the lower-triangular factor L with L L^T = K + omega^2 I
    (+ jitter I when escalation was needed); ``weights`` solves
    (K + omega^2 I) w = y, so the posterior mean at x is k(x, X) . w.
    """

    data: TrainingSet
    hyperparams: GPHyperParams
    chol: np.ndarray
    weights: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.data.n


def kernel(x1: np.ndarray, x2: np.ndarray, hp: GPHyperParams) -> float:
    """SE-ARD covariance between two input points."""
    x1 = np.asarray(x1, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x1.shape != x2.shape or x1.shape[0] != hp.length_scales.shape[0]:
        raise ValueError(
            f"dimension mismatch: inputs {x1.shape[0]}/{x2.shape[0]}, "
            f"length_scales {hp.length_scales.shape[0]}"
        )
    d = (x1 - x2) / hp.length_scales
    return float(hp.signal_variance * math.exp(-0.5 * float(d @ d)))


def _kernel_matrix(X1: np.ndarray, X2: np.ndarray, hp: GPHyperParams) -> np.ndarray:
    """Dense covariance matrix between two input sets, (n1, n2)."""
    S1 = X1 / hp.length_scales
    S2 = X2 / hp.length_scales
    # chunk to keep the (b, n2, m) intermediate small
    out = np.empty((S1.shape[0], S2.shape[0]))
    step = max(1, int(2_000_000 // max(1, S2.shape[0] * max(1, S1.shape[1]))))
    for lo in range(0, S1.shape[0], step):
        diff = S1[lo : lo + step, None, :] - S2[None, :, :]
        out[lo : lo + step] = np.einsum("bnm,bnm->bn", diff, diff)
    return hp.signal_variance * np.exp(-0.5 * out)


def fit(data: TrainingSet, hp: GPHyperParams) -> FittedGP:
    """Factor ``K + omega^2 I`` and precompute the mean weights.

    An empty training set is legal and yields the prior.  If the plain
    factorization fails, jitter is escalated through
    :data:`JITTER_SCHEDULE`; total failure raises
    :class:`IllConditionedKernelError` naming every level tried.
    """
    n = data.n
    if n == 0:
        return FittedGP(data, hp, np.zeros((0, 0)), np.zeros(0), 0.0)
    if data.inputs.shape[1] != hp.length_scales.shape[0]:
        raise ValueError(
            f"inputs have {data.inputs.shape[1]} dims but length_scales has "
            f"{hp.length_scales.shape[0]}"
        )
    K = _kernel_matrix(data.inputs, data.inputs, hp)
    base = K + hp.noise_variance * np.eye(n)
    for jitter in JITTER_SCHEDULE:
        A = base if jitter == 0.0 else base + jitter * np.eye(n)
        try:
            L = scipy.linalg.cholesky(A, lower=True)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(L)):
            continue
        weights = scipy.linalg.cho_solve((L, True), data.targets)
        return FittedGP(data, hp, L, weights, jitter)
    raise IllConditionedKernelError(
        "Cholesky factorization of K + noise*I failed at every jitter level "
        f"{list(JITTER_SCHEDULE)}; kernel matrix is numerically singular "
        f"(n={n}, signal_variance={hp.signal_variance}, "
        f"noise_variance={hp.noise_variance})"
    )


def predict(gp: FittedGP, x: np.ndarray) -> Prediction:
    """Posterior mean and variance at a single input.

    The variance is the noise-free posterior variance
    ``k(x,x) - k_*^T (K + omega^2 I)^-1 k_*``, clamped into
    ``[0, signal_variance]``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    hp = gp.hyperparams
    if x.shape[0] != hp.length_scales.shape[0]:
        raise ValueError(
            f"input has {x.shape[0]} dims, model expects {hp.length_scales.shape[0]}"
        )
    if gp.n == 0:
        return Prediction(0.0, float(hp.signal_variance))
    diff = (x[None, :] - gp.data.inputs) / hp.length_scales
    k_star = hp.signal_variance * np.exp(-0.5 * np.einsum("nm,nm->n", diff, diff))
    mean = float(k_star @ gp.weights)
    v = scipy.linalg.solve_triangular(gp.chol, k_star, lower=True)
    var = float(hp.signal_variance - v @ v)
    var = min(max(var, 0.0), float(hp.signal_variance))
    return Prediction(mean, var)


def predict_batch(gp: FittedGP, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`predict` over the rows of ``X``; returns (means, vars)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    hp = gp.hyperparams
    if X.shape[1] != hp.length_scales.shape[0]:
        raise ValueError(
            f"inputs have {X.shape[1]} dims, model expects {hp.length_scales.shape[0]}"
        )
    if gp.n == 0:
        return (
            np.zeros(X.shape[0]),
            np.full(X.shape[0], float(hp.signal_variance)),
        )
    K_star = _kernel_matrix(gp.data.inputs, X, hp)  # (n, b)
    means = K_star.T @ gp.weights
    V = scipy.linalg.solve_triangular(gp.chol, K_star, lower=True)
    var = hp.signal_variance - np.einsum("nb,nb->b", V, V)
    return means, np.clip(var, 0.0, float(hp.signal_variance))


def log_marginal_likelihood(data: TrainingSet, hp: GPHyperParams) -> float:
    """log p(y | X, hp) under the zero-mean GP.

    Computed from the Cholesky factor as
    ``-0.5 y^T w - sum_i log L_ii - (n/2) log 2pi``.
    """
    gp = fit(data, hp)
    return _lml_from_fit(gp)


def _lml_from_fit(gp: FittedGP) -> float:
    n = gp.n
    if n == 0:
        return 0.0
    data_fit = -0.5 * float(gp.data.targets @ gp.weights)
    logdet = -float(np.sum(np.log(np.diag(gp.chol))))
    return data_fit + logdet - 0.5 * n * LOG_2PI


def _lml_and_grad(data: TrainingSet, log_theta: np.ndarray) -> tuple[float, np.ndarray]:
    """LML and its gradient w.r.t. log hyperparameters.

    Parameter order: [log signal_variance, log l_1 .. log l_m,
    log noise_variance].  Uses the classic trace identity
    d LML / d theta_j = 0.5 tr((w w^T - A^-1) dA/dtheta_j).
    """
    m = log_theta.shape[0] - 2
    hp = GPHyperParams(
        float(np.exp(log_theta[0])),
        np.exp(log_theta[1 : 1 + m]),
        float(np.exp(log_theta[1 + m])),
    )
    gp = fit(data, hp)
    lml = _lml_from_fit(gp)
    n = gp.n
    w = gp.weights
    A_inv = scipy.linalg.cho_solve((gp.chol, True), np.eye(n))
    P = np.outer(w, w) - A_inv
    K = _kernel_matrix(data.inputs, data.inputs, hp)
    PK = P * K
    grad = np.empty(m + 2)
    grad[0] = 0.5 * float(PK.sum())  # dK/dlog alpha^2 = K
    for d in range(m):
        col = data.inputs[:, d]
        sq = (col[:, None] - col[None, :]) ** 2 / hp.length_scales[d] ** 2
        grad[1 + d] = 0.5 * float((PK * sq).sum())  # dK/dlog l_d = K .* sq
    grad[1 + m] = 0.5 * hp.noise_variance * float(np.trace(P))
    return lml, grad


# ---------------------------------------------------------------------------
# hyperparameter selection
# ---------------------------------------------------------------------------


@dataclass
class SearchConfig:
    """Settings for :func:`select_hyperparams`.

    ``invert_folds=True`` trains on one fold and validates on the other
    ``folds - 1`` (deliberately data-starved validation, which favors
    hyperparameters that generalize from very few points); ``False`` gives
    the conventional split.  Bounds are (low, high) in natural units.
    """

    n_restarts: int = 3
    folds: int = 5
    min_points: int = 5
    invert_folds: bool = True
    seed: int = 0
    length_scale_bounds: tuple[float, float] = (1e-2, 1e3)
    signal_variance_bounds: tuple[float, float] = (1e-3, 1e2)
    noise_variance_bounds: tuple[float, float] = (1e-6, 1e1)
    max_opt_iter: int = 120


def _pack(hp: GPHyperParams) -> np.ndarray:
    return np.concatenate(
        (
            [math.log(hp.signal_variance)],
            np.log(hp.length_scales),
            [math.log(max(hp.noise_variance, 1e-300))],
        )
    )


def _unpack(log_theta: np.ndarray) -> GPHyperParams:
    m = log_theta.shape[0] - 2
    return GPHyperParams(
        float(np.exp(log_theta[0])),
        np.exp(log_theta[1 : 1 + m]),
        float(np.exp(log_theta[1 + m])),
    )


def _cv_score(data: TrainingSet, hp: GPHyperParams, folds: int, invert: bool) -> float:
    """Mean held-out predictive log density over contiguous folds.

    The predictive density includes observation noise:
    N(y | mu(x), sigma^2(x) + noise_variance).
    """
    n = data.n
    parts = np.array_split(np.arange(n), folds)
    parts = [p for p in parts if p.size > 0]
    if len(parts) < 2:
        return -np.inf
    scores = []
    for f, part in enumerate(parts):
        mask = np.zeros(n, dtype=bool)
        mask[part] = True
        train_idx, val_idx = (mask, ~mask) if invert else (~mask, mask)
        try:
            sub = fit(TrainingSet(data.inputs[train_idx], data.targets[train_idx]), hp)
        except IllConditionedKernelError:
            return -np.inf
        mu, var = predict_batch(sub, data.inputs[val_idx])
        pv = var + hp.noise_variance
        if np.any(pv <= 0):
            return -np.inf
        resid = data.targets[val_idx] - mu
        ll = -0.5 * (np.log(2.0 * np.pi * pv) + resid**2 / pv)
        scores.append(float(np.mean(ll)))
    return float(np.mean(scores))


def select_hyperparams(data: TrainingSet, search: SearchConfig | None = None) -> GPHyperParams:
    """Pick hyperparameters by multi-start LML ascent + CV comparison.

    Candidates are the defaults plus an L-BFGS-B optimum from each start
    (defaults, then ``n_restarts`` log-uniform random draws within bounds).
    Every candidate is scored with :func:`_cv_score`; the best score wins
    and ties go to the earlier candidate, so the defaults are never beaten
    by an equal-scoring optimum.  With fewer than ``min_points``
    observations a warning is issued and the defaults are returned.
    """
    search = search or SearchConfig()
    m = data.inputs.shape[1] if data.n else FEATURE_DIM
    defaults = default_hyperparams(m)
    if data.n < search.min_points:
        warnings.warn(
            f"only {data.n} observations (< {search.min_points}); "
            "keeping default hyperparameters",
            stacklevel=2,
        )
        return defaults

    lo = np.concatenate(
        (
            [math.log(search.signal_variance_bounds[0])],
            np.full(m, math.log(search.length_scale_bounds[0])),
            [math.log(search.noise_variance_bounds[0])],
        )
    )
    hi = np.concatenate(
        (
            [math.log(search.signal_variance_bounds[1])],
            np.full(m, math.log(search.length_scale_bounds[1])),
            [math.log(search.noise_variance_bounds[1])],
        )
    )
    bounds = list(zip(lo, hi))

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            lml, grad = _lml_and_grad(data, theta)
        except (IllConditionedKernelError, FloatingPointError):
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -grad

    rng = np.random.default_rng(search.seed)
    starts = [np.clip(_pack(defaults), lo, hi)]
    for _ in range(search.n_restarts):
        starts.append(rng.uniform(lo, hi))

    candidates = [defaults]
    for x0 in starts:
        res = scipy.optimize.minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": search.max_opt_iter},
        )
        if np.all(np.isfinite(res.x)):
            hp = _unpack(np.clip(res.x, lo, hi))
            # exp(log(bound)) can land one ulp outside; clamp in linear space
            candidates.append(
                GPHyperParams(
                    float(np.clip(hp.signal_variance, *search.signal_variance_bounds)),
                    np.clip(hp.length_scales, *search.length_scale_bounds),
                    float(np.clip(hp.noise_variance, *search.noise_variance_bounds)),
                )
            )

    best_hp, best_score = None, -np.inf
    for hp in candidates:
        score = _cv_score(data, hp, search.folds, search.invert_folds)
        if score > best_score:  # strict: ties keep the earlier candidate
            best_hp, best_score = hp, score
    return best_hp if best_hp is not None else defaults


# ---------------------------------------------------------------------------
# exploration reward
# ---------------------------------------------------------------------------


def variance_bonus_reward(
    model: "FittedGP | GPRewardModel",
    state: State,
    action: ActionPair,
    beta1: float,
    beta2: float,
) -> float:
    """Optimistic reward: predicted mean plus (beta1 + beta2) * variance.

    ``beta1`` prices reward-model uncertainty and ``beta2`` transition
    uncertainty; in this compact state encoding both fall on the same GP,
    so only their sum matters.  Betas must be non-negative.
    """
    if beta1 < 0 or beta2 < 0:
        raise ValueError(f"betas must be >= 0, got beta1={beta1}, beta2={beta2}")
    if hasattr(model, "predict_reward"):
        mean, var = model.predict_reward(state, action)
    else:
        mean, var = predict(model, phi(state, action))
    return float(mean + (beta1 + beta2) * var)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_FORMAT = "vbmcts-gp/1"


def gp_to_json(gp: FittedGP) -> str:
    """Serialize a fitted GP (data + hyperparameters) to a JSON string.

    Factors are recomputed on load, so the payload stays small and the
    round-trip is exact as long as :func:`fit` is deterministic (it is).
    """
    doc = {
        "format": _FORMAT,
        "signal_variance": gp.hyperparams.signal_variance,
        "length_scales": gp.hyperparams.length_scales.tolist(),
        "noise_variance": gp.hyperparams.noise_variance,
        "inputs": gp.data.inputs.tolist(),
        "targets": gp.data.targets.tolist(),
    }
    return json.dumps(doc)


def gp_from_json(text: str) -> FittedGP:
    doc = json.loads(text)
    if doc.get("format") != _FORMAT:
        raise ValueError(f"unrecognized GP payload format: {doc.get('format')!r}")
    hp = GPHyperParams(
        doc["signal_variance"], np.array(doc["length_scales"]), doc["noise_variance"]
    )
    n = len(doc["targets"])
    inputs = np.array(doc["inputs"], dtype=np.float64).reshape(n, -1) if n else np.zeros(
        (0, len(doc["length_scales"]))
    )
    return fit(TrainingSet(inputs, np.array(doc["targets"])), hp)


# ---------------------------------------------------------------------------
# the reward world model used by agents
# ---------------------------------------------------------------------------


class GPRewardModel:
    """GP world model over (state, action) reward observations.

    Owns the raw observation buffer and the target standardization: targets
    are shifted/scaled to zero mean, unit variance before fitting, and all
    predictions are mapped back to raw reward units.  ``refit`` is cheap
    (one Cholesky); pass ``optimize=True`` to rerun hyperparameter
    selection, which agents typically do once per episode.
    """

    def __init__(self, search: SearchConfig | None = None, dim: int = FEATURE_DIM):
        self.search = search or SearchConfig()
        self.dim = dim
        self._rows: list[np.ndarray] = []
        self._targets: list[float] = []
        self.hyperparams = default_hyperparams(dim)
        self.y_shift = 0.0
        self.y_scale = 1.0
        self.gp = fit(TrainingSet(np.zeros((0, dim)), np.zeros(0)), self.hyperparams)

    @property
    def n(self) -> int:
        return len(self._targets)

    def add_observation(self, state: State, action: ActionPair, reward: float) -> None:
        self._rows.append(phi(state, action))
        self._targets.append(float(reward))

    def refit(self, optimize: bool = False) -> None:
        y = np.array(self._targets)
        X = np.stack(self._rows) if self._rows else np.zeros((0, self.dim))
        if y.size:
            self.y_shift = float(np.mean(y))
            scale = float(np.std(y))
            self.y_scale = scale if scale > 1e-12 else 1.0
        else:
            self.y_shift, self.y_scale = 0.0, 1.0
        data = TrainingSet(X, (y - self.y_shift) / self.y_scale)
        if optimize:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self.hyperparams = select_hyperparams(data, self.search)
        self.gp = fit(data, self.hyperparams)

    def predict_reward(self, state: State, action: ActionPair) -> Prediction:
        mean, var = predict(self.gp, phi(state, action))
        return Prediction(
            mean * self.y_scale + self.y_shift, var * self.y_scale * self.y_scale
        )

    def predict_rewards_batch(
        self, state: State, actions: Sequence[ActionPair]
    ) -> tuple[np.ndarray, np.ndarray]:
        means, vars_ = predict_batch(self.gp, phi_batch(state, list(actions)))
        return (
            means * self.y_scale + self.y_shift,
            vars_ * self.y_scale * self.y_scale,
        )

    def sigma_threshold(self, fraction: float = 0.5) -> float:
        """Raw-units variance threshold: ``fraction * signal_variance``."""
        return fraction * self.hyperparams.signal_variance * self.y_scale * self.y_scale

    def core_arrays(self) -> dict:
        """Contiguous arrays consumed by the compiled search core."""
        gp = self.gp
        return {
            "X": np.ascontiguousarray(gp.data.inputs),
            "weights": np.ascontiguousarray(gp.weights),
            "chol": np.ascontiguousarray(gp.chol),
            "alpha2": float(gp.hyperparams.signal_variance),
            "ell2": np.ascontiguousarray(gp.hyperparams.length_scales**2),
            "omega2": float(gp.hyperparams.noise_variance),
            "y_shift": self.y_shift,
            "y_scale": self.y_scale,
        }

    def sample_returns(
        self,
        sequences: np.ndarray,
        n_samples: int,
        rng: np.random.Generator,
        gamma: float = 1.0,
    ) -> np.ndarray:
        """Monte-Carlo return estimates for fixed action sequences.

        ``sequences`` is (S, T, 2).  Each of ``n_samples`` trajectories per
        sequence starts from the blank start state and rolls forward by
        sampling the reward from the GP posterior N(mu, sigma^2) at every
        step, the sample feeding the next state's previous-reward slot.
        Returns the (S,) per-sequence means of the discounted totals.
        """
        seqs = np.asarray(sequences, dtype=np.float64)
        S, T, _ = seqs.shape
        B = S * n_samples
        r_prev = np.zeros(B)
        prev = np.zeros((B, 2))
        totals = np.zeros(B)
        disc = 1.0
        for t in range(1, T + 1):
            act = np.repeat(seqs[:, t - 1, :], n_samples, axis=0)
            rows = _phi_rows(t, r_prev, prev, act)
            mean_s, var_s = predict_batch(self.gp, rows)
            mean = mean_s * self.y_scale + self.y_shift
            sd = np.sqrt(np.maximum(var_s, 0.0)) * self.y_scale
            r = rng.normal(mean, sd)
            totals += disc * r
            disc *= gamma
            r_prev, prev = r, act
        return totals.reshape(S, n_samples).mean(axis=1)

    def to_json(self) -> str:
        doc = {
            "format": "vbmcts-reward-model/1",
            "gp": json.loads(gp_to_json(self.gp)),
            "y_shift": self.y_shift,
            "y_scale": self.y_scale,
            "raw_targets": self._targets,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str, search: SearchConfig | None = None) -> "GPRewardModel":
        doc = json.loads(text)
        if doc.get("format") != "vbmcts-reward-model/1":
            raise ValueError(f"unrecognized model payload: {doc.get('format')!r}")
        gp = gp_from_json(json.dumps(doc["gp"]))
        model = cls(search=search, dim=gp.data.inputs.shape[1])
        model._rows = [row.copy() for row in gp.data.inputs]
        model._targets = list(doc["raw_targets"])
        model.hyperparams = gp.hyperparams
        model.y_shift = float(doc["y_shift"])
        model.y_scale = float(doc["y_scale"])
        model.gp = gp
        return model


def _phi_rows(t: int, r_prev: np.ndarray, prev: np.ndarray, act: np.ndarray) -> np.ndarray:
    """Vectorized feature rows for a batch sharing one timestep.

    Must mirror :func:`vbmcts.features.phi` exactly, entry for entry.
    """
    B = r_prev.shape[0]
    rows = np.empty((B, FEATURE_DIM))
    rows[:, 0] = float(t)
    rows[:, 1] = float(t % 2)
    rows[:, 2] = float(t % 3)
    rows[:, 3] = r_prev
    rows[:, 4] = prev[:, 0]
    rows[:, 5] = prev[:, 1]
    rows[:, 6] = act[:, 0]
    rows[:, 7] = act[:, 1]
    rows[:, 8] = act[:, 0] * act[:, 1]
    rows[:, 9] = prev[:, 0] * prev[:, 1]
    rows[:, 10] = act[:, 0] * prev[:, 0]
    rows[:, 11] = act[:, 1] * prev[:, 1]
    rows[:, 12] = act[:, 0] * (1.0 - prev[:, 0])
    rows[:, 13] = act[:, 1] * (1.0 - prev[:, 1])
    return rows
