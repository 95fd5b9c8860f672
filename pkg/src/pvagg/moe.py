"""Linear mixture-of-experts: experts on feature subsets and a softmax router.

Training is sequential. Each expert is fitted on its own feature subset, then
frozen; the router is fitted afterwards to minimise the MSE of the blended
prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

RIDGE = 1e-8
ROUTER_ITERS = 1000
ROUTER_STEP = 0.1


class FitError(RuntimeError):
    pass


class TrainingError(RuntimeError):
    pass


def _design(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


def fit_ols(A: np.ndarray, y: np.ndarray, ridge: float = RIDGE) -> np.ndarray:
    """Least squares through the ridge-damped normal equations."""
    G = A.T @ A
    G[np.diag_indices_from(G)] += ridge
    try:
        beta = np.linalg.solve(G, A.T @ y)
    except np.linalg.LinAlgError as e:
        raise FitError(str(e)) from e
    if not np.all(np.isfinite(beta)):
        raise FitError("nonfinite least-squares coefficients")
    return beta


def pinball_loss(residual: np.ndarray, tau: float) -> float:
    return float(np.mean(np.maximum(tau * residual, (tau - 1.0) * residual)))


def fit_quantile(A: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Linear quantile regression at level ``tau``, solved exactly as an LP."""
    n, p = A.shape
    c = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)]) / n
    A_eq = np.hstack([A, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        raise FitError(f"quantile LP failed: {res.message}")
    return res.x[:p]


@dataclass(frozen=True, eq=False)
class LinearExpert:
    """Linear model on a subset of columns; ``coef[0]`` is the intercept.

    A quantile expert carries a second coefficient vector for the upper
    quantile and ``coef`` is the lower one.
    """

    feature_indices: tuple[int, ...]
    coef: np.ndarray
    coef_hi: np.ndarray | None = None
    levels: tuple[float, float] | None = None
    name: str = ""

    def __post_init__(self):
        if len(self.feature_indices) == 0:
            raise ValueError(f"expert {self.name!r} has no features")
        for c in (self.coef, self.coef_hi):
            if c is not None and (len(c) != len(self.feature_indices) + 1 or not np.all(np.isfinite(c))):
                raise ValueError(f"expert {self.name!r}: bad coefficient vector")

    @property
    def kind(self) -> str:
        return "point" if self.coef_hi is None else "quantile"

    def _A(self, X):
        return _design(np.atleast_2d(X)[:, list(self.feature_indices)])

    def predict(self, X) -> np.ndarray:
        A = self._A(X)
        if self.coef_hi is None:
            return A @ self.coef
        return 0.5 * (A @ self.coef + A @ self.coef_hi)

    def bounds(self, X) -> tuple[np.ndarray, np.ndarray]:
        A = self._A(X)
        if self.coef_hi is None:
            mu = A @ self.coef
            return mu, mu
        lo, hi = A @ self.coef, A @ self.coef_hi
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "feature_indices": list(self.feature_indices),
                "coef": self.coef.tolist(),
                "coef_hi": None if self.coef_hi is None else self.coef_hi.tolist(),
                "levels": None if self.levels is None else list(self.levels)}

    @classmethod
    def from_json(cls, d: dict) -> "LinearExpert":
        hi = d.get("coef_hi")
        levels = d.get("levels")
        return cls(tuple(d["feature_indices"]), np.asarray(d["coef"], dtype=float),
                   None if hi is None else np.asarray(hi, dtype=float),
                   None if levels is None else tuple(levels), d.get("name", ""))


def fit_expert(X, y, feature_indices: Sequence[int], kind: str = "point", alpha: float = 0.1,
               name: str = "") -> LinearExpert:
    """Fit one expert on the given columns of ``X``.

    ``kind="quantile"`` fits the ``alpha/2`` and ``1 - alpha/2`` conditional
    quantiles, as used by CQR scores.
    """
    idx = tuple(int(i) for i in feature_indices)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    A = _design(X[:, list(idx)])
    if A.shape[0] < A.shape[1]:
        raise FitError(f"expert {name!r}: {A.shape[0]} rows for {A.shape[1]} coefficients")
    try:
        if kind == "point":
            return LinearExpert(idx, fit_ols(A, y), name=name)
        if kind == "quantile":
            levels = (alpha / 2.0, 1.0 - alpha / 2.0)
            return LinearExpert(idx, fit_quantile(A, y, levels[0]), fit_quantile(A, y, levels[1]),
                                levels, name)
    except FitError as e:
        raise FitError(f"expert {name!r}: {e}") from e
    raise ValueError(f"unknown expert kind {kind!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Router:
    """Linear gate; ``coef`` has shape (K, d + 1) with intercepts in column 0."""

    coef: np.ndarray

    @classmethod
    def zeros(cls, K: int, d: int) -> "Router":
        return cls(np.zeros((K, d + 1)))

    @property
    def n_experts(self) -> int:
        return self.coef.shape[0]

    def logits(self, X) -> np.ndarray:
        return _design(X) @ self.coef.T

    def weights(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def to_json(self) -> dict:
        return {"coef": self.coef.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Router":
        return cls(np.asarray(d["coef"], dtype=float))


@dataclass(frozen=True, eq=False)
class MoeModel:
    experts: tuple[LinearExpert, ...]
    router: Router

    def __post_init__(self):
        if len(self.experts) < 1:
            raise ValueError("a mixture needs at least one expert")
        if self.router.n_experts != len(self.experts):
            raise ValueError("router and expert counts differ")

    @property
    def K(self) -> int:
        return len(self.experts)

    def expert_outputs(self, X) -> np.ndarray:
        return np.column_stack([e.predict(X) for e in self.experts])

    def route(self, X) -> np.ndarray:
        return self.router.weights(X)

    def predict(self, X) -> np.ndarray:
        return np.sum(self.route(X) * self.expert_outputs(X), axis=1)

    def bounds(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Router-blended lower/upper expert outputs."""
        W = self.route(X)
        lo = np.column_stack([e.bounds(X)[0] for e in self.experts])
        hi = np.column_stack([e.bounds(X)[1] for e in self.experts])
        return np.sum(W * lo, axis=1), np.sum(W * hi, axis=1)

    def with_experts(self, experts: Sequence[LinearExpert]) -> "MoeModel":
        return MoeModel(tuple(experts), self.router)

    def to_json(self) -> dict:
        return {"experts": [e.to_json() for e in self.experts], "router": self.router.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "MoeModel":
        return cls(tuple(LinearExpert.from_json(e) for e in d["experts"]), Router.from_json(d["router"]))


def route(moe: MoeModel, x) -> np.ndarray:
    return moe.route(np.atleast_2d(x))[0]


def predict(moe: MoeModel, x) -> float:
    return float(moe.predict(np.atleast_2d(x))[0])


def routing_loss(coef_flat: np.ndarray, A: np.ndarray, F: np.ndarray, y: np.ndarray):
    """MSE of the blended prediction and its gradient in the router coefficients."""
    K = F.shape[1]
    coef = coef_flat.reshape(K, A.shape[1])
    W = softmax(A @ coef.T)
    pred = np.sum(W * F, axis=1)
    r = pred - y
    loss = np.mean(r * r)
    dlogits = (2.0 / len(y)) * r[:, None] * W * (F - pred[:, None])
    return loss, (dlogits.T @ A).ravel()


def fit_router(experts: Sequence[LinearExpert], X, y, max_iter: int = ROUTER_ITERS,
               step: float = ROUTER_STEP) -> MoeModel:
    """Fit the gate with experts frozen, starting from uniform weights.

    Full-batch gradient descent; a step that raises the loss is rejected and
    the step size halved. The iteration cap is part of the model definition:
    running to convergence drives the softmax towards one-hot weights.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    K = len(experts)
    router = Router.zeros(K, X.shape[1])
    if K == 1:
        return MoeModel(tuple(experts), router)
    A = _design(X)
    F = np.column_stack([e.predict(X) for e in experts])
    theta = router.coef.ravel()
    loss, grad = routing_loss(theta, A, F, y)
    for it in range(max_iter):
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingError(f"nonfinite routing loss at iteration {it}")
        cand = theta - step * grad
        cand_loss, cand_grad = routing_loss(cand, A, F, y)
        if not cand_loss <= loss:
            step *= 0.5
            continue
        theta, loss, grad = cand, cand_loss, cand_grad
    return MoeModel(tuple(experts), Router(theta.reshape(K, -1)))
