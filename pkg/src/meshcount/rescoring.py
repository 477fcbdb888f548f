"""Second-stage objectness rescoring against rater agreement.

A linear scorer on feature vectors is trained with one of four losses:
agreement regression (AR), agreement classification (AC), ordinal
regression with learned thresholds (OR), and pairwise rank learning (RL).
Evaluation is by Pearson correlation between scores and agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadTuple,
    ConstantInput,
    DimensionMismatch,
    EmptyAgreementLevel,
    HeadMismatch,
    UnorderedThetas,
)

LOG_EPS = 1e-12
THETA_GAP = 1e-6  # minimum spacing restored after each update
DEFAULT_K = 7
DEFAULT_MARGIN = 0.1

SCALAR = "scalar"
CATEGORICAL = "categorical"
METHODS = ("AR", "AC", "OR", "RL")


@dataclass(frozen=True)
class AgreementSample:
    features: np.ndarray
    agreement: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 1 or not np.all(np.isfinite(f)):
            raise ValueError("features must be a finite 1-D vector")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)
        if self.agreement < 0:
            raise ValueError("agreement must be a non-negative integer")


@dataclass
class ScorerModel:
    """Linear scorer: scalar head w.x + b, or a (K+1)-way softmax head."""

    head: str
    weights: np.ndarray
    bias: object  # float for scalar head, (K+1,) vector for categorical
    thetas: np.ndarray | None = None  # OR only, strictly increasing

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.head == SCALAR:
            if self.weights.ndim != 1:
                raise ValueError("scalar head needs a weight vector")
            self.bias = float(self.bias)
        elif self.head == CATEGORICAL:
            if self.weights.ndim != 2:
                raise ValueError("categorical head needs a weight matrix")
            self.bias = np.asarray(self.bias, dtype=float)
            if self.bias.shape != (self.weights.shape[0],):
                raise ValueError("bias length must match the number of classes")
        else:
            raise ValueError(f"unknown head {self.head!r}")
        if self.thetas is not None:
            self.thetas = np.asarray(self.thetas, dtype=float)
            _check_thetas(self.thetas)

    @property
    def dim(self) -> int:
        return self.weights.shape[-1]


@dataclass(frozen=True)
class TrainConfig:
    method: str = "OR"
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 16
    margin: float = DEFAULT_MARGIN
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.margin > 0:
            raise ValueError("margin must be > 0")


def _check_thetas(thetas):
    if np.any(np.diff(thetas) <= 0):
        raise UnorderedThetas("thresholds must be strictly increasing")


def _check_dim(model, x):
    if x.shape[0] != model.dim:
        raise DimensionMismatch(f"feature length {x.shape[0]}, model expects {model.dim}")


def _sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def score(model: ScorerModel, features) -> float:
    """Scalar objectness: w.x + b, or the expected class for a softmax head."""
    x = np.asarray(features, dtype=float)
    _check_dim(model, x)
    if model.head == SCALAR:
        return float(model.weights @ x + model.bias)
    return expected_score(model, x)


def expected_score(model: ScorerModel, features) -> float:
    """Normalized expected class of the softmax head, in [0, 1]."""
    if model.head != CATEGORICAL:
        raise HeadMismatch("expected_score needs a categorical head")
    x = np.asarray(features, dtype=float)
    _check_dim(model, x)
    p = _softmax(model.weights @ x + model.bias)
    k = p.size - 1
    return float(np.arange(p.size) @ p / k)


def class_probs(model: ScorerModel, features) -> np.ndarray:
    if model.head != CATEGORICAL:
        raise HeadMismatch("class probabilities need a categorical head")
    x = np.asarray(features, dtype=float)
    _check_dim(model, x)
    return _softmax(model.weights @ x + model.bias)


# -- losses and analytic gradients -------------------------------------------


def loss_ar(model: ScorerModel, batch, k: int = DEFAULT_K) -> float:
    """Half the squared error against the normalized agreement, summed."""
    if model.head != SCALAR:
        raise HeadMismatch("AR needs a scalar head")
    total = 0.0
    for s in batch:
        total += 0.5 * (s.agreement / k - score(model, s.features)) ** 2
    return total


def grad_ar(model: ScorerModel, batch, k: int = DEFAULT_K):
    dw = np.zeros_like(model.weights)
    db = 0.0
    for s in batch:
        r = score(model, s.features) - s.agreement / k
        dw += r * s.features
        db += r
    return dw, db


def loss_ac(model: ScorerModel, batch) -> float:
    """Cross-entropy of the true agreement class, summed over the batch."""
    if model.head != CATEGORICAL:
        raise HeadMismatch("AC needs a categorical head")
    total = 0.0
    for s in batch:
        p = class_probs(model, s.features)
        total += -math.log(max(float(p[s.agreement]), LOG_EPS))
    return total


def grad_ac(model: ScorerModel, batch):
    dw = np.zeros_like(model.weights)
    db = np.zeros_like(model.bias)
    for s in batch:
        p = class_probs(model, s.features)
        dz = p.copy()
        dz[s.agreement] -= 1.0
        dw += np.outer(dz, s.features)
        db += dz
    return dw, db


def or_class_probs(s: float, thetas) -> np.ndarray:
    """Class probabilities of the cumulative-sigmoid ordinal model.

    y_0 = sig(theta_0 - s), interior classes are successive sigmoid
    differences, and y_K takes the remaining mass, so the vector always
    sums to one.
    """
    thetas = np.asarray(thetas, dtype=float)
    _check_thetas(thetas)
    cum = _sigmoid(thetas - s)
    y = np.empty(thetas.size + 1)
    y[0] = cum[0]
    y[1:-1] = np.diff(cum)
    y[-1] = 1.0 - cum[-1]
    return y


def loss_or(model: ScorerModel, batch) -> float:
    """Negative log likelihood of the observed agreement classes, summed."""
    if model.head != SCALAR or model.thetas is None:
        raise HeadMismatch("OR needs a scalar head with thresholds")
    total = 0.0
    for s in batch:
        y = or_class_probs(score(model, s.features), model.thetas)
        total += -math.log(max(float(y[s.agreement]), LOG_EPS))
    return total


def grad_or(model: ScorerModel, batch):
    thetas = model.thetas
    k = thetas.size
    dw = np.zeros_like(model.weights)
    db = 0.0
    dtheta = np.zeros(k)
    for smp in batch:
        s = score(model, smp.features)
        sig = _sigmoid(thetas - s)
        dsig = sig * (1.0 - sig)  # derivative w.r.t. (theta - s)
        a = smp.agreement
        if a == 0:
            y = sig[0]
            dy_ds = -dsig[0]
        elif a == k:
            y = 1.0 - sig[-1]
            dy_ds = dsig[-1]
        else:
            y = sig[a] - sig[a - 1]
            dy_ds = -dsig[a] + dsig[a - 1]
        inv = -1.0 / max(float(y), LOG_EPS)
        dw += inv * dy_ds * smp.features
        db += inv * dy_ds
        if a < k:
            dtheta[a] += inv * dsig[a]
        if a >= 1:
            dtheta[a - 1] += inv * -dsig[a - 1]
    return dw, db, dtheta


def loss_rl(model: ScorerModel, tup, margin: float = DEFAULT_MARGIN) -> float:
    """Class-balanced pairwise margin loss over one ordered tuple."""
    if model.head != SCALAR:
        raise HeadMismatch("RL needs a scalar head")
    tup = list(tup)
    if [s.agreement for s in tup] != list(range(len(tup))):
        raise BadTuple("tuple must hold one sample per agreement level, in order")
    k = len(tup) - 1
    scores = [score(model, s.features) for s in tup]
    total = 0.0
    for i in range(1, k + 1):
        total += max(margin - scores[i] + scores[i - 1], 0.0)
    return total / k


def grad_rl(model: ScorerModel, tup, margin: float = DEFAULT_MARGIN):
    tup = list(tup)
    k = len(tup) - 1
    scores = [score(model, s.features) for s in tup]
    coeff = np.zeros(k + 1)
    for i in range(1, k + 1):
        if margin - scores[i] + scores[i - 1] > 0.0:
            coeff[i] -= 1.0 / k
            coeff[i - 1] += 1.0 / k
    dw = np.zeros_like(model.weights)
    db = 0.0
    for c, s in zip(coeff, tup):
        if c != 0.0:
            dw += c * s.features
            db += c
    return dw, db


def make_tuples(dataset, count: int, seed: int, k: int = DEFAULT_K):
    """Seeded tuples with one uniform draw per agreement level 0..k."""
    levels = {a: [] for a in range(k + 1)}
    for s in dataset:
        if s.agreement > k:
            raise ValueError(f"agreement {s.agreement} exceeds k={k}")
        levels[s.agreement].append(s)
    for a, members in levels.items():
        if not members:
            raise EmptyAgreementLevel(f"no samples at agreement level {a}")
    rng = np.random.default_rng(seed)
    tuples = []
    for _ in range(count):
        tuples.append(
            tuple(levels[a][int(rng.integers(len(levels[a])))] for a in range(k + 1))
        )
    return tuples


# -- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    model: ScorerModel
    loss_trace: list = field(default_factory=list)  # entry 0 is the initial loss


def _init_model(method: str, dim: int, k: int, rng) -> ScorerModel:
    if method == "AC":
        return ScorerModel(
            head=CATEGORICAL,
            weights=rng.normal(0.0, 0.01, (k + 1, dim)),
            bias=np.zeros(k + 1),
        )
    thetas = np.linspace(-1.0, 1.0, k) if method == "OR" else None
    return ScorerModel(
        head=SCALAR,
        weights=rng.normal(0.0, 0.01, dim),
        bias=0.0,
        thetas=thetas,
    )


def _reorder_thetas(thetas):
    for i in range(1, thetas.size):
        if thetas[i] <= thetas[i - 1]:
            thetas[i] = thetas[i - 1] + THETA_GAP
    return thetas


def _dataset_loss(model, items, config, k):
    if not items:
        return 0.0
    if config.method == "AR":
        return loss_ar(model, items, k) / len(items)
    if config.method == "AC":
        return loss_ac(model, items) / len(items)
    if config.method == "OR":
        return loss_or(model, items) / len(items)
    return float(np.mean([loss_rl(model, t, config.margin) for t in items]))


def train(dataset, config: TrainConfig, k: int = DEFAULT_K) -> TrainResult:
    """Mini-batch gradient descent on the configured loss.

    Deterministic for a fixed seed; for RL the dataset is first expanded
    into one seeded tuple per sample. The loss trace holds the per-item
    mean dataset loss before training and after every epoch.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset must be non-empty")
    for s in dataset:
        if s.agreement > k:
            raise ValueError(f"agreement {s.agreement} exceeds k={k}")
    dim = dataset[0].features.size
    rng = np.random.default_rng(config.seed)
    model = _init_model(config.method, dim, k, rng)

    if config.method == "RL":
        items = make_tuples(dataset, count=len(dataset), seed=config.seed + 1, k=k)
    else:
        items = dataset

    trace = [_dataset_loss(model, items, config, k)]
    lr = config.learning_rate
    for _ in range(config.epochs):
        order = rng.permutation(len(items))
        for start in range(0, len(items), config.batch_size):
            batch = [items[i] for i in order[start : start + config.batch_size]]
            step = lr / len(batch)  # mean-gradient step: lr independent of batch size
            if config.method == "AR":
                dw, db = grad_ar(model, batch, k)
                model.weights = model.weights - step * dw
                model.bias = model.bias - step * db
            elif config.method == "AC":
                dw, db = grad_ac(model, batch)
                model.weights = model.weights - step * dw
                model.bias = model.bias - step * db
            elif config.method == "OR":
                dw, db, dtheta = grad_or(model, batch)
                model.weights = model.weights - step * dw
                model.bias = model.bias - step * db
                model.thetas = _reorder_thetas(model.thetas - step * dtheta)
            else:  # RL: the batch loss is the mean over tuples
                dw = np.zeros_like(model.weights)
                db = 0.0
                for tup in batch:
                    tw, tb = grad_rl(model, tup, config.margin)
                    dw += tw
                    db += tb
                model.weights = model.weights - step * dw
                model.bias = model.bias - step * db
        trace.append(_dataset_loss(model, items, config, k))
    return TrainResult(model=model, loss_trace=trace)


# -- evaluation ---------------------------------------------------------------


def pearson_r(scores, agreements) -> float:
    """Sample Pearson correlation between scores and agreement levels."""
    x = np.asarray(list(scores), dtype=float)
    y = np.asarray(list(agreements), dtype=float)
    if x.size != y.size:
        raise DimensionMismatch("score and agreement sequences differ in length")
    if x.size < 2:
        raise ConstantInput("need at least two observations")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt(float(xd @ xd))
    sy = math.sqrt(float(yd @ yd))
    if sx == 0.0 or sy == 0.0:
        raise ConstantInput("correlation of a constant sequence is undefined")
    return float(xd @ yd / (sx * sy))


@dataclass(frozen=True)
class ScoredObject:
    """A detection-like item carrying its feature vector and current score."""

    features: np.ndarray
    score: float
    payload: object = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        f.setflags(write=False)
        object.__setattr__(self, "features", f)


def rescore_and_filter(objects, model: ScorerModel, threshold: float):
    """Replace scores with model scores; keep items scoring at least ``threshold``."""
    out = []
    for obj in objects:
        s = score(model, obj.features)
        if s >= threshold:
            out.append(replace(obj, score=s))
    return out
