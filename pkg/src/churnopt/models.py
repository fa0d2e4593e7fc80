"""Trainable churn scorers.

The primary model is a one-hidden-layer network (tanh hidden units,
logistic output) trained with manual backpropagation and Adam on either
the smooth campaign-regret loss or binary cross-entropy. Baselines:
logistic regression, k-nearest neighbors, and a Gini-split decision tree.

All scorers emit scores in (0, 1) estimating the label (0 = churner),
so low scores flag likely churners.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .campaign import CampaignParams, campaign_cost, midpoint, optimal_decision, sigmoid
from .data import Dataset

__all__ = [
    "Mlp",
    "TrainConfig",
    "AdamState",
    "default_hidden",
    "init_mlp",
    "forward",
    "forward_batch",
    "adam_step",
    "train",
    "mean_loss",
    "gradient_check",
    "save_mlp",
    "load_mlp",
    "LogisticModel",
    "fit_logistic",
    "knn_score",
    "knn_scores",
    "CartConfig",
    "CartNode",
    "fit_cart",
    "cart_score",
    "cart_scores",
]

LOSS_KINDS = ("smooth-regret", "cross-entropy")


@dataclass
class Mlp:
    """One-hidden-layer scorer: sigmoid(w2 . tanh(w1 x + b1) + b2)."""

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # scalar, shape ()
    activation: str = "tanh"
    seed: int = 0
    loss_history: list[float] = field(default_factory=list, repr=False, compare=False)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "Mlp":
        return Mlp(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            activation=self.activation,
            seed=self.seed,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loss settings for gradient-trained scorers."""

    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int | None = None  # None: full batch up to 1024 rows, else 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "smooth-regret"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("Adam eps must be > 0")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")

    def resolve_batch_size(self, n: int) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n)
        return n if n <= 1024 else 128


def default_hidden(input_dim: int) -> int:
    """Default hidden width: half the input width, rounded up."""
    return max(1, math.ceil(input_dim / 2))


def init_mlp(input_dim: int, hidden_dim: int, seed: int = 0) -> Mlp:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("input_dim and hidden_dim must be >= 1")
    rng = np.random.default_rng(seed)
    lim1 = math.sqrt(6.0 / (input_dim + hidden_dim))
    lim2 = math.sqrt(6.0 / (hidden_dim + 1))
    return Mlp(
        w1=rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform(-lim2, lim2, size=hidden_dim),
        b2=np.zeros(()),
        seed=seed,
    )


def _forward_full(p: dict[str, np.ndarray], X: np.ndarray):
    """Forward pass keeping intermediates for backprop.

    Returns (scores, pre-activation u, hidden activations A).
    """
    A = np.tanh(X @ p["w1"].T + p["b1"])
    u = A @ p["w2"] + p["b2"]
    return sigmoid(u), u, A


def forward_batch(mlp: Mlp, X: np.ndarray) -> np.ndarray:
    """Scores for a feature matrix, shape (n,)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise ValueError(f"expected (n, {mlp.input_dim}) features, got {X.shape}")
    scores, _, _ = _forward_full(mlp.params(), X)
    return scores


def forward(mlp: Mlp, x) -> float:
    """Score for a single feature vector, in (0, 1)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (mlp.input_dim,):
        raise ValueError(f"expected feature vector of length {mlp.input_dim}, got {x.shape}")
    return float(forward_batch(mlp, x.reshape(1, -1))[0])


@dataclass
class AdamState:
    """First/second moment accumulators per parameter plus a step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; advances the state in place."""
    state.t += 1
    out: dict[str, np.ndarray] = {}
    for k, theta in params.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = state.m[k] / (1 - beta1**state.t)
        v_hat = state.v[k] / (1 - beta2**state.t)
        out[k] = theta - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return out, state


def _regret_terms(labels, params: CampaignParams, clvs):
    """Per-customer constants of the smooth regret loss."""
    labels = np.asarray(labels, dtype=float)
    clvs = np.asarray(clvs, dtype=float)
    coeff = np.asarray(campaign_cost(1.0, labels, params, clvs))
    opt_cost = np.asarray(
        campaign_cost(optimal_decision(labels, params, clvs), labels, params, clvs)
    )
    return np.asarray(midpoint(params, clvs)), coeff, opt_cost


def _losses_and_dscore(scores, u, labels, loss: str, regret_terms, slope: float):
    """Per-example losses and dloss/dscore-path terms.

    Returns (losses, du) where du is dloss/du for the output pre-activation,
    not yet averaged over the batch.
    """
    y = np.asarray(labels, dtype=float)
    if loss == "cross-entropy":
        losses = np.logaddexp(0.0, -u) + (1.0 - y) * u
        du = scores - y
        return losses, du
    m, coeff, opt_cost = regret_terms
    g = 1.0 - sigmoid(slope * (scores - m))
    losses = coeff * g - opt_cost
    dscore = coeff * (-slope * g * (1.0 - g))
    du = dscore * scores * (1.0 - scores)
    return losses, du


def _loss_and_grads(p, X, labels, loss, regret_terms, slope):
    """Mean loss over the batch and its gradients for every parameter."""
    scores, u, A = _forward_full(p, X)
    losses, du = _losses_and_dscore(scores, u, labels, loss, regret_terms, slope)
    n = X.shape[0]
    du = du / n
    grads = {
        "w2": A.T @ du,
        "b2": np.asarray(du.sum()),
    }
    dA = np.outer(du, p["w2"])
    dH = dA * (1.0 - A * A)
    grads["w1"] = dH.T @ X
    grads["b1"] = dH.sum(axis=0)
    return float(losses.mean()), grads


def _batch_regret_terms(regret_terms, idx):
    if regret_terms is None:
        return None
    m, coeff, opt_cost = regret_terms
    return m[idx], coeff[idx], opt_cost[idx]


def train(mlp: Mlp, data: Dataset, params: CampaignParams, cfg: TrainConfig) -> Mlp:
    """Mini-batch Adam training; returns a new trained model.

    Shuffling, batching and updates are fully determined by cfg.seed. The
    per-epoch mean training loss is recorded on the returned model's
    loss_history (not asserted monotone; the optimizer is stochastic).

    Raises:
        RuntimeError: the loss became non-finite (reports epoch and batch).
    """
    data.require_both_classes()
    X, y, clv = data.features, data.labels, data.clvs
    if X.shape[1] != mlp.input_dim:
        raise ValueError(f"model expects {mlp.input_dim} features, data has {X.shape[1]}")
    regret_terms = _regret_terms(y, params, clv) if cfg.loss == "smooth-regret" else None

    model = mlp.copy()
    p = model.params()
    state = AdamState.zeros_like(p)
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    batch = cfg.resolve_batch_size(n)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, batch)):
            idx = order[start : start + batch]
            loss, grads = _loss_and_grads(
                p, X[idx], y[idx], cfg.loss, _batch_regret_terms(regret_terms, idx), params.slope
            )
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite training loss at epoch {epoch}, batch {b}")
            p, state = adam_step(
                p, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps
            )
            epoch_loss += loss * idx.size
        model.loss_history.append(epoch_loss / n)

    model.w1, model.b1, model.w2, model.b2 = p["w1"], p["b1"], p["w2"], p["b2"]
    return model


def mean_loss(mlp: Mlp, data: Dataset, params: CampaignParams, loss: str) -> float:
    """Mean per-customer loss of a fixed model on a dataset."""
    if loss not in LOSS_KINDS:
        raise ValueError(f"loss must be one of {LOSS_KINDS}, got {loss!r}")
    regret_terms = _regret_terms(data.labels, params, data.clvs) if loss == "smooth-regret" else None
    scores, u, _ = _forward_full(mlp.params(), data.features)
    losses, _ = _losses_and_dscore(scores, u, data.labels, loss, regret_terms, params.slope)
    return float(losses.mean())


def gradient_check(
    mlp: Mlp,
    loss: str,
    X,
    labels,
    clvs,
    params: CampaignParams,
    h: float = 1e-5,
) -> float:
    """Max mismatch between analytic and central-difference gradients.

    Every parameter entry is perturbed by +-h. The reported error is
    |analytic - numeric| / max(|analytic|, |numeric|, 1), i.e. relative
    for large gradients and absolute near zero.
    """
    if not 1e-8 <= h <= 1e-4:
        raise ValueError(f"h must lie in [1e-8, 1e-4], got {h}")
    X = np.asarray(X, dtype=float)
    regret_terms = _regret_terms(labels, params, clvs) if loss == "smooth-regret" else None
    p = {k: v.copy() for k, v in mlp.params().items()}
    _, analytic = _loss_and_grads(p, X, labels, loss, regret_terms, params.slope)

    def loss_at(pp):
        scores, u, _ = _forward_full(pp, X)
        losses, _ = _losses_and_dscore(scores, u, labels, loss, regret_terms, params.slope)
        return float(losses.mean())

    worst = 0.0
    for k, theta in p.items():
        flat = theta.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_at(p)
            flat[i] = keep - h
            down = loss_at(p)
            flat[i] = keep
            numeric = (up - down) / (2 * h)
            a = float(np.asarray(analytic[k]).reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            worst = max(worst, err)
    return worst


_MLP_JSON_KEYS = ("activation", "seed", "w1", "b1", "w2", "b2")


def save_mlp(mlp: Mlp, path: str | Path) -> Path:
    """Serialize weights and config as flat JSON (exact float round trip)."""
    payload = {
        "activation": mlp.activation,
        "seed": mlp.seed,
        "w1": mlp.w1.tolist(),
        "b1": mlp.b1.tolist(),
        "w2": mlp.w2.tolist(),
        "b2": float(mlp.b2),
    }
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    return path


def load_mlp(path: str | Path) -> Mlp:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = [k for k in _MLP_JSON_KEYS if k not in payload]
    if missing:
        raise ValueError(f"model file {path} missing key(s) {missing}")
    return Mlp(
        w1=np.asarray(payload["w1"], dtype=float),
        b1=np.asarray(payload["b1"], dtype=float),
        w2=np.asarray(payload["w2"], dtype=float),
        b2=np.asarray(payload["b2"], dtype=float),
        activation=payload["activation"],
        seed=int(payload["seed"]),
    )


@dataclass(frozen=True)
class LogisticModel:
    """Linear scorer: sigmoid(w . x + b)."""

    w: np.ndarray
    b: float

    def score_batch(self, X) -> np.ndarray:
        return np.asarray(sigmoid(np.asarray(X, dtype=float) @ self.w + self.b))

    def score(self, x) -> float:
        return float(self.score_batch(np.asarray(x, dtype=float).reshape(1, -1))[0])


def fit_logistic(data: Dataset, cfg: TrainConfig | None = None) -> LogisticModel:
    """Full-batch Adam cross-entropy fit from a zero start (deterministic)."""
    if cfg is None:
        cfg = TrainConfig(learning_rate=0.05, epochs=300, loss="cross-entropy")
    X, y = data.features, data.labels.astype(float)
    w = np.zeros(X.shape[1])
    b = np.zeros(())
    p = {"w": w, "b": b}
    state = AdamState.zeros_like(p)
    for epoch in range(cfg.epochs):
        u = X @ p["w"] + p["b"]
        scores = sigmoid(u)
        loss = float(np.mean(np.logaddexp(0.0, -u) + (1.0 - y) * u))
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite logistic loss at epoch {epoch}")
        du = (scores - y) / len(y)
        grads = {"w": X.T @ du, "b": np.asarray(du.sum())}
        p, state = adam_step(p, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return LogisticModel(w=p["w"], b=float(p["b"]))


def knn_scores(train: Dataset, X, k: int) -> np.ndarray:
    """k-nearest-neighbor scores for each query row.

    The score is the fraction of the k Euclidean-nearest training labels
    equal to 1; distance ties break toward the lower training index.
    """
    if not 1 <= k <= len(train):
        raise ValueError(f"k must be in [1, {len(train)}], got {k}")
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], 128):  # chunked to bound the distance tensor
        block = X[start : start + 128]
        diff = block[:, None, :] - train.features[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[start : start + 128] = (train.labels[nearest] == 1).mean(axis=1)
    return out


def knn_score(train: Dataset, x, k: int) -> float:
    return float(knn_scores(train, np.asarray(x, dtype=float).reshape(1, -1), k)[0])


@dataclass(frozen=True)
class CartConfig:
    max_depth: int = 6
    min_leaf: int = 5

    def __post_init__(self) -> None:
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_leaf >= 1")


@dataclass(frozen=True)
class CartNode:
    """Decision-tree node; a leaf when feature is None."""

    score: float  # non-churner rate of the training rows at this node
    feature: int | None = None
    threshold: float = 0.0
    left: "CartNode | None" = None  # rows with value <= threshold
    right: "CartNode | None" = None


def _best_split(X: np.ndarray, y01: np.ndarray, min_leaf: int):
    """Lowest weighted-Gini split; ties to the first feature, lowest threshold."""
    n = y01.size
    best = None  # (impurity, feature, threshold)
    for j in range(X.shape[1]):
        vals = X[:, j]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        ones = np.cumsum(y01[order])
        sizes = np.arange(1, n)
        left1 = ones[:-1]
        valid = (sizes >= min_leaf) & (n - sizes >= min_leaf) & (v[:-1] < v[1:])
        if not valid.any():
            continue
        p_l = left1 / sizes
        p_r = (ones[-1] - left1) / (n - sizes)
        weighted = (sizes * 2 * p_l * (1 - p_l) + (n - sizes) * 2 * p_r * (1 - p_r)) / n
        weighted = np.where(valid, weighted, np.inf)
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[0]:
            best = (float(weighted[i]), j, float((v[i] + v[i + 1]) / 2))
    return best


def _grow(X, y01, cfg: CartConfig, depth: int) -> CartNode:
    score = float(y01.mean())
    if depth >= cfg.max_depth or y01.size < 2 * cfg.min_leaf or score in (0.0, 1.0):
        return CartNode(score=score)
    parent_gini = 2 * score * (1 - score)
    best = _best_split(X, y01, cfg.min_leaf)
    if best is None or best[0] >= parent_gini - 1e-12:
        return CartNode(score=score)
    _, j, thr = best
    mask = X[:, j] <= thr
    return CartNode(
        score=score,
        feature=j,
        threshold=thr,
        left=_grow(X[mask], y01[mask], cfg, depth + 1),
        right=_grow(X[~mask], y01[~mask], cfg, depth + 1),
    )


def fit_cart(data: Dataset, cfg: CartConfig | None = None) -> CartNode:
    """Greedy Gini-impurity binary tree on single-feature thresholds."""
    if cfg is None:
        cfg = CartConfig()
    return _grow(data.features, (data.labels == 1).astype(float), cfg, depth=0)


def cart_score(tree: CartNode, x) -> float:
    x = np.asarray(x, dtype=float)
    node = tree
    while node.feature is not None:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.score


def cart_scores(tree: CartNode, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.array([cart_score(tree, row) for row in X])
