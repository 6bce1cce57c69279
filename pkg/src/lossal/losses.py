"""Weighted Bregman-divergence losses.

A loss is the triple (potential phi, transform T, weight w) and scores an
action ``a`` against a world state ``z`` as

    l(z, a) = w(z) * D_phi(T(z), a),
    D_phi(u, v) = phi(u) - phi(v) - <grad phi(v), u - v>.

Minimising the expected loss under a belief q has the closed form

    a* = E_{q_w}[T(z)],   q_w(z) = w(z) q(z) / w_bar,   w_bar = E_q[w(z)]
    h  = w_bar * (E_{q_w}[phi(T(z))] - phi(a*))

so both the Bayes act and the generalised entropy are plain weighted moments.

Points in dom(phi) are 1-D arrays of length K; scalar domains use K = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, xlogy

SIMPLEX_FLOOR = 1e-12


class DomainError(ValueError):
    """A point lies outside the domain of the potential."""


class InvalidWeightError(ValueError):
    """A weight function returned a non-positive or non-finite value."""


class DegenerateBeliefError(ValueError):
    """The belief carries no effective (weighted) mass."""


def _as_points(x) -> np.ndarray:
    """Return ``x`` as an (n, K) float array (a single point becomes n = 1)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(1, -1)
    return x


def _simplex_clamp(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, SIMPLEX_FLOOR, 1.0)
    return x / x.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential:
    """Strictly convex potential ``phi`` with its gradient and domain check.

    ``kind`` is one of ``"quadratic"`` (phi(x) = sum x^2 on R^K),
    ``"neg_entropy"`` (phi(x) = sum x log x on the probability simplex) or
    ``"neg_log"`` (phi(x) = -sum log x on the positive orthant).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("quadratic", "neg_entropy", "neg_log"):
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def quadratic(cls) -> "Potential":
        return cls("quadratic")

    @classmethod
    def neg_entropy(cls) -> "Potential":
        return cls("neg_entropy")

    @classmethod
    def neg_log(cls) -> "Potential":
        return cls("neg_log")

    def check(self, x) -> np.ndarray:
        """Validate points against dom(phi); return them as an (n, K) array."""
        x = _as_points(x)
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite point")
        if self.kind == "neg_entropy":
            if np.any(x < 0):
                raise DomainError("negative entry for a simplex potential")
            if np.any(np.abs(x.sum(axis=-1) - 1.0) > 1e-8):
                raise DomainError("simplex point does not sum to one")
        elif self.kind == "neg_log":
            if np.any(x <= 0):
                raise DomainError("neg_log potential requires strictly positive points")
        return x

    def value(self, x) -> np.ndarray:
        """phi evaluated row-wise; returns shape (n,)."""
        x = _as_points(x)
        if self.kind == "quadratic":
            return np.sum(x * x, axis=-1)
        if self.kind == "neg_entropy":
            # 0 log 0 = 0 keeps phi exact at one-hot vertices
            return np.sum(xlogy(x, x), axis=-1)
        return -np.sum(np.log(x), axis=-1)

    def grad(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "quadratic":
            return 2.0 * x
        if self.kind == "neg_entropy":
            return np.log(_simplex_clamp(x)) + 1.0
        return -1.0 / x


def bregman_divergence(potential: Potential, u, v) -> np.ndarray | float:
    """D_phi(u, v) = phi(u) - phi(v) - <grad phi(v), u - v>.

    ``u`` may sit on the boundary of the domain (e.g. a one-hot vector);
    ``v`` is the interior point where the gradient is taken. Rows broadcast.
    Returns a float for single points, an array otherwise.
    """
    single = np.ndim(u) <= 1 and np.ndim(v) <= 1
    u = potential.check(u)
    v = potential.check(v)
    if potential.kind == "neg_entropy":
        v = _simplex_clamp(v)
    d = (
        potential.value(u)
        - potential.value(v)
        - np.sum(potential.grad(v) * (u - v), axis=-1)
    )
    return float(d[0]) if single else d


# --------------------------------------------------------------------------
# transforms


@dataclass(frozen=True)
class Transform:
    """Measurable map T from world states into dom(phi).

    kinds: ``identity``, ``one_hot`` (needs ``n_classes``), ``box_cox``
    (needs ``lam != 0``; T(z) = (z^lam - 1)/lam) and ``neg_exp``
    (needs ``alpha > 0``; T(z) = exp(-alpha z)).
    """

    kind: str
    n_classes: int | None = None
    lam: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind == "one_hot":
            if not self.n_classes or self.n_classes < 1:
                raise ValueError("one_hot transform needs n_classes >= 1")
        elif self.kind == "box_cox":
            if self.lam is None or self.lam == 0:
                raise ValueError("box_cox transform needs lam != 0")
        elif self.kind == "neg_exp":
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("neg_exp transform needs alpha > 0")
        elif self.kind != "identity":
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "Transform":
        return cls("identity")

    @classmethod
    def one_hot(cls, n_classes: int) -> "Transform":
        return cls("one_hot", n_classes=n_classes)

    @classmethod
    def box_cox(cls, lam: float) -> "Transform":
        return cls("box_cox", lam=lam)

    @classmethod
    def neg_exp(cls, alpha: float) -> "Transform":
        return cls("neg_exp", alpha=alpha)

    @property
    def invertible(self) -> bool:
        return self.kind != "one_hot"

    def __call__(self, z) -> np.ndarray:
        """Map world states to an (n, K) array of points in dom(phi)."""
        if self.kind == "one_hot":
            idx = np.asarray(z)
            if not np.issubdtype(idx.dtype, np.integer):
                if not np.all(np.equal(np.mod(idx, 1), 0)):
                    raise DomainError("one_hot transform needs integer class labels")
                idx = idx.astype(int)
            idx = np.atleast_1d(idx)
            if np.any(idx < 0) or np.any(idx >= self.n_classes):
                raise DomainError("class label out of range")
            return np.eye(self.n_classes)[idx]
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            z = z.reshape(1)
        if self.kind == "identity":
            out = z
        elif self.kind == "box_cox":
            if np.any(z <= 0):
                raise DomainError("box_cox transform needs positive states")
            out = (z**self.lam - 1.0) / self.lam
        else:
            out = np.exp(-self.alpha * z)
        return out.reshape(-1, 1) if out.ndim == 1 else out

    def inverse(self, t) -> np.ndarray:
        """T^{-1} on T(Z); returns a 1-D array (one state per row)."""
        t = _as_points(t)[:, 0]
        if self.kind == "identity":
            return t.copy()
        if self.kind == "box_cox":
            return (self.lam * t + 1.0) ** (1.0 / self.lam)
        if self.kind == "neg_exp":
            if np.any(t <= 0):
                raise DomainError("neg_exp inverse needs positive values")
            return -np.log(t) / self.alpha
        raise TypeError("one_hot transform has no in-space inverse")


# --------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightFunction:
    """Positive reweighting w(z) of world states.

    ``constant`` (w = value, 1 by default), ``exp_pos`` (exp(alpha z)),
    ``exp_neg`` (exp(-alpha z)), ``class_weights`` (w(i) = values[i]) and
    ``custom`` (any callable returning positive values).
    """

    kind: str = "constant"
    alpha: float = 0.0
    values: tuple[float, ...] = ()
    fn: Callable | None = field(default=None, compare=False)
    value: float = 1.0

    @classmethod
    def constant(cls, value: float = 1.0) -> "WeightFunction":
        if not value > 0:
            raise InvalidWeightError("constant weight must be positive")
        return cls("constant", value=float(value))

    @classmethod
    def exp_pos(cls, alpha: float) -> "WeightFunction":
        return cls("exp_pos", alpha=float(alpha))

    @classmethod
    def exp_neg(cls, alpha: float) -> "WeightFunction":
        return cls("exp_neg", alpha=float(alpha))

    @classmethod
    def class_weights(cls, values: Sequence[float]) -> "WeightFunction":
        values = tuple(float(v) for v in values)
        if not values or min(values) <= 0:
            raise InvalidWeightError("class weights must be positive")
        return cls("class_weights", values=values)

    @classmethod
    def custom(cls, fn: Callable) -> "WeightFunction":
        return cls("custom", fn=fn)

    @property
    def is_constant(self) -> bool:
        if self.kind == "class_weights":
            return len(set(self.values)) == 1
        if self.kind in ("exp_pos", "exp_neg"):
            return self.alpha == 0.0
        return self.kind == "constant"

    @property
    def exponent(self) -> float | None:
        """Signed exponent ``a`` when w(z) = exp(a z) (constant-1 gives 0)."""
        if self.kind == "exp_pos":
            return self.alpha
        if self.kind == "exp_neg":
            return -self.alpha
        if self.kind == "constant" and self.value == 1.0:
            return 0.0
        return None

    def scaled(self, c: float) -> "WeightFunction":
        """The weight function c * w."""
        if not c > 0:
            raise InvalidWeightError("scale must be positive")
        if self.kind == "constant":
            return WeightFunction.constant(self.value * c)
        if self.kind == "class_weights":
            return WeightFunction.class_weights([c * v for v in self.values])
        return WeightFunction.custom(lambda z, _w=self: c * _w(z))

    def log(self, z) -> np.ndarray:
        """log w(z); exact for the exponential kinds (no overflow)."""
        z = np.asarray(z)
        if self.kind in ("exp_pos", "exp_neg"):
            return self.exponent * np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self(z))

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z)
        if self.kind == "constant":
            w = np.full(z.shape, self.value, dtype=float)
        elif self.kind in ("exp_pos", "exp_neg"):
            w = np.exp(self.exponent * z.astype(float))
        elif self.kind == "class_weights":
            idx = z.astype(int)
            if np.any(idx != z) or np.any(idx < 0) or np.any(idx >= len(self.values)):
                raise InvalidWeightError("class weights need labels in 0..K-1")
            w = np.asarray(self.values)[idx]
        else:
            w = np.asarray(self.fn(z), dtype=float)
            w = np.broadcast_to(w, z.shape).astype(float)
        if self.kind != "custom" and np.any(w <= 0):
            raise InvalidWeightError("weight must be positive")
        if np.any(w < 0) or np.any(np.isnan(w)):
            raise InvalidWeightError("weight must be non-negative")
        return w


# --------------------------------------------------------------------------
# the loss and discrete beliefs


@dataclass(frozen=True)
class WeightedBregmanLoss:
    potential: Potential
    transform: Transform
    weight: WeightFunction = field(default_factory=WeightFunction.constant)

    @classmethod
    def squared_error(cls, weight: WeightFunction | None = None) -> "WeightedBregmanLoss":
        return cls(Potential.quadratic(), Transform.identity(), weight or WeightFunction.constant())

    @classmethod
    def box_cox(cls, lam: float, weight: WeightFunction | None = None) -> "WeightedBregmanLoss":
        return cls(Potential.quadratic(), Transform.box_cox(lam), weight or WeightFunction.constant())

    @classmethod
    def linex(cls, alpha: float, weight: WeightFunction | None = None) -> "WeightedBregmanLoss":
        return cls(Potential.neg_log(), Transform.neg_exp(alpha), weight or WeightFunction.constant())

    @classmethod
    def nll(cls, n_classes: int, weight: WeightFunction | None = None) -> "WeightedBregmanLoss":
        return cls(Potential.neg_entropy(), Transform.one_hot(n_classes), weight or WeightFunction.constant())


@dataclass(frozen=True)
class DiscreteBelief:
    """Finite distribution over world states (scalars, labels or vectors)."""

    support: np.ndarray
    probs: np.ndarray

    def __init__(self, support, probs=None):
        support = np.asarray(support)
        n = support.shape[0]
        if probs is None:
            probs = np.full(n, 1.0 / n)
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (n,):
            raise ValueError("probs must have one entry per support atom")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point_mass(cls, z) -> "DiscreteBelief":
        return cls(np.asarray([z]), [1.0])

    def mean(self) -> np.ndarray:
        return np.tensordot(self.probs, np.asarray(self.support, dtype=float), axes=1)


def _reweight(weight: WeightFunction, belief: DiscreteBelief) -> tuple[float, np.ndarray]:
    """Return (w_bar, q_w) computed in log space."""
    mask = belief.probs > 0
    lq = np.full(belief.probs.shape, -np.inf)
    with np.errstate(divide="ignore"):
        lq[mask] = weight.log(belief.support[mask]) + np.log(belief.probs[mask])
    log_wbar = logsumexp(lq)
    if not np.isfinite(log_wbar):
        raise DegenerateBeliefError("belief has zero effective weight")
    return float(np.exp(log_wbar)), np.exp(lq - log_wbar)


def loss_eval(loss: WeightedBregmanLoss, z, a) -> float:
    """w(z) * D_phi(T(z), a) for a single world state and action."""
    w = float(np.asarray(loss.weight(np.asarray(z))).reshape(-1)[0])
    if not w > 0:
        raise InvalidWeightError("weight must be positive")
    return w * bregman_divergence(loss.potential, loss.transform(z)[0], np.atleast_1d(a))


def loss_eval_in_space(loss: WeightedBregmanLoss, z, b) -> float:
    """Pullback loss w(z) * D_phi(T(z), T(b)) for an in-space action ``b``."""
    return loss_eval(loss, z, loss.transform(b)[0])


def expected_loss(loss: WeightedBregmanLoss, belief: DiscreteBelief, a) -> float:
    """E_q[w(z) D_phi(T(z), a)] by direct summation."""
    mask = belief.probs > 0
    support = belief.support[mask]
    t = loss.transform(support)
    a = np.broadcast_to(np.atleast_1d(np.asarray(a, dtype=float)), t.shape)
    d = bregman_divergence(loss.potential, t, a)
    return float(np.sum(belief.probs[mask] * loss.weight(support) * np.atleast_1d(d)))


def bayes_act(loss: WeightedBregmanLoss, belief: DiscreteBelief) -> np.ndarray:
    """Minimiser of the expected loss: the q_w-mean of T(z), shape (K,)."""
    _, qw = _reweight(loss.weight, belief)
    mask = qw > 0
    act = qw[mask] @ loss.transform(belief.support[mask])
    loss.potential.check(act)
    return act


def in_space_act(loss: WeightedBregmanLoss, belief: DiscreteBelief) -> float:
    """T^{-1} of the Bayes act, for invertible transforms."""
    return float(loss.transform.inverse(bayes_act(loss, belief))[0])


def generalised_entropy(loss: WeightedBregmanLoss, belief: DiscreteBelief) -> float:
    """Minimum expected loss, w_bar * (E_{q_w}[phi(T z)] - phi(E_{q_w}[T z]))."""
    wbar, qw = _reweight(loss.weight, belief)
    mask = qw > 0
    t = loss.transform(belief.support[mask])
    act = qw[mask] @ t
    loss.potential.check(act)
    phi = loss.potential.value
    return float(wbar * (qw[mask] @ phi(t) - phi(act)[0]))


def eval_discrepancy_decomposition(potential: Potential, p_model: DiscreteBelief, p_eval: DiscreteBelief):
    """Split the expected loss of the model's Bayes act under ``p_eval``.

    Returns ``(total, estimation_error, irreducible)`` with

        total            = E_eval[D(z, E_model[z])]
        estimation_error = D(E_eval[z], E_model[z])
        irreducible      = E_eval[D(z, E_eval[z])]
    """
    z = np.asarray(p_eval.support, dtype=float)
    z = potential.check(z.reshape(-1, 1) if z.ndim == 1 else z)
    m_model = np.atleast_1d(p_model.mean())
    m_eval = np.atleast_1d(p_eval.mean())
    d_model = bregman_divergence(potential, z, np.broadcast_to(m_model, z.shape))
    d_eval = bregman_divergence(potential, z, np.broadcast_to(m_eval, z.shape))
    total = float(p_eval.probs @ d_model)
    irreducible = float(p_eval.probs @ d_eval)
    estimation = float(bregman_divergence(potential, m_eval, m_model))
    return total, estimation, irreducible
