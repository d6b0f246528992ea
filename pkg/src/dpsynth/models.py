"""Downstream classifiers trained on synthetic rows, with confidences.

Four model families, all from first principles on top of numpy:

* logistic regression on one-hot features, full-batch gradient descent with
  Armijo backtracking;
* a bagged forest of Gini CART trees on raw ordinal indices;
* gradient-boosted depth-limited regression trees on the logistic loss with
  Newton leaf values;
* a linear hinge-loss model on random Fourier features (RBF approximation)
  whose margins are calibrated by Platt scaling.

Every classifier exposes `confidence(dataset)` returning P(label = 1) per
row in [0, 1], and serializes to a JSON-friendly dict (`to_dict` /
`model_from_dict`). Training on a single-label dataset degenerates to a
constant classifier at the clamped label frequency.
"""

from __future__ import annotations

import functools
import inspect
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Schema
from .errors import EmptyDataset, InvalidConfig
from .trees import TreeNode, fit_classification_tree, fit_regression_tree, tree_apply

LOGISTIC = "logistic"
RANDOM_FOREST = "random-forest"
GBDT = "gbdt"
SVM_RFF = "svm-rff"

MODEL_KINDS = (LOGISTIC, RANDOM_FOREST, GBDT, SVM_RFF)


@dataclass(frozen=True)
class ModelConfig:
    """A model family plus keyword overrides for its trainer."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidConfig(f"unknown model kind {self.kind!r}")
        unknown = set(self.params) - _trainer_param_names(self.kind)
        if unknown:
            raise InvalidConfig(
                f"unknown {self.kind} parameter(s): {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        params = {k: v for k, v in d.items() if k != "kind"}
        return cls(kind=d["kind"], params=params)


class FeatureEncoder:
    """One-hot expansion of every non-label attribute."""

    def __init__(self, schema: Schema):
        self.schema = schema
        self.feature_indices = list(schema.non_label_indices)
        cards = [schema.attributes[i].cardinality for i in self.feature_indices]
        self.offsets = np.concatenate([[0], np.cumsum(cards)[:-1]]).astype(np.int64)
        self.width = int(sum(cards))

    def encode_features(self, feats: np.ndarray) -> np.ndarray:
        """(n, a) feature-index rows -> (n, width) 0/1 matrix."""
        feats = np.asarray(feats)
        out = np.zeros((feats.shape[0], self.width), dtype=np.float64)
        cols = feats + self.offsets[None, :]
        out[np.arange(feats.shape[0])[:, None], cols] = 1.0
        return out

    def encode(self, rows: np.ndarray) -> np.ndarray:
        """Full dataset rows (label column included) -> one-hot features."""
        return self.encode_features(rows[:, self.feature_indices])


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1p_exp(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z) without overflow for large |z|
    return np.where(z > 0, z, 0.0) + np.log1p(np.exp(-np.abs(z)))


# ---------------------------------------------------------------------------
# constant fallback
# ---------------------------------------------------------------------------

class ConstantClassifier:
    """Outputs one fixed confidence; the single-label degenerate case."""

    kind = "constant"

    def __init__(self, schema: Schema, p: float):
        self.schema = schema
        self.p = float(min(max(p, 0.01), 0.99))

    def confidence(self, d: Dataset) -> np.ndarray:
        return np.full(d.n, self.p)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "schema": self.schema.to_dict(), "p": self.p}


def _constant_if_single_label(train: Dataset):
    rate = float(train.labels().mean())
    if rate == 0.0 or rate == 1.0:
        return ConstantClassifier(train.schema, rate)
    return None


def _grouped_rows(train: Dataset):
    """Collapse identical (features, label) rows into weighted groups."""
    rows = np.column_stack([train.features(), train.labels()])
    groups, counts = np.unique(rows, axis=0, return_counts=True)
    return groups[:, :-1], groups[:, -1], counts.astype(np.float64)


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def logistic_loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray,
                           reg: float, weights: np.ndarray | None = None):
    """Weighted mean cross-entropy + 0.5 reg ||w||^2, bias unregularized.

    params = [w_0 .. w_{m-1}, b]. Returns (loss, gradient); standalone so the
    analytic gradient can be checked against finite differences.
    """
    w, b = params[:-1], params[-1]
    if weights is None:
        weights = np.ones(X.shape[0])
    n = weights.sum()
    z = X @ w + b
    loss = float((weights * (_log1p_exp(z) - y * z)).sum() / n
                 + 0.5 * reg * (w @ w))
    delta = weights * (sigmoid(z) - y) / n
    grad = np.concatenate([X.T @ delta + reg * w, [delta.sum()]])
    return loss, grad


class LogisticClassifier:
    kind = LOGISTIC

    def __init__(self, schema: Schema, w: np.ndarray, b: float,
                 loss_curve: list[float] | None = None):
        self.schema = schema
        self.encoder = FeatureEncoder(schema)
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)
        self.loss_curve = loss_curve if loss_curve is not None else []

    def confidence(self, d: Dataset) -> np.ndarray:
        return sigmoid(self.encoder.encode(d.rows) @ self.w + self.b)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "schema": self.schema.to_dict(),
                "w": self.w.tolist(), "b": self.b}


def train_logistic(train: Dataset, rng: np.random.Generator | None = None,
                   reg: float = 1e-4, tol: float = 1e-6, max_iter: int = 5000):
    """Full-batch gradient descent with Armijo backtracking.

    Stops once the gradient L2 norm drops to tol, after max_iter accepted
    steps, or when no step length above 1e-12 makes progress. The recorded
    loss curve is strictly decreasing by construction.
    """
    if train.n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    constant = _constant_if_single_label(train)
    if constant is not None:
        return constant

    feats, labels, w_rows = _grouped_rows(train)
    encoder = FeatureEncoder(train.schema)
    X = encoder.encode_features(feats)
    y = labels.astype(np.float64)

    params = np.zeros(X.shape[1] + 1)
    loss, grad = logistic_loss_and_grad(params, X, y, reg, w_rows)
    curve = [loss]
    step = 1.0
    for _ in range(max_iter):
        gnorm2 = float(grad @ grad)
        if math.sqrt(gnorm2) <= tol:
            break
        step = min(step * 2.0, 1e4)  # probe above the last accepted step
        accepted = False
        while step >= 1e-12:
            trial = params - step * grad
            new_loss, new_grad = logistic_loss_and_grad(trial, X, y, reg, w_rows)
            if new_loss <= loss - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        params, loss, grad = trial, new_loss, new_grad
        curve.append(loss)
    return LogisticClassifier(train.schema, params[:-1], params[-1], loss_curve=curve)


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

class RandomForestClassifier:
    kind = RANDOM_FOREST

    def __init__(self, schema: Schema, trees: list[TreeNode]):
        self.schema = schema
        self.trees = trees

    def confidence(self, d: Dataset) -> np.ndarray:
        feats = d.features()
        votes = np.stack([tree_apply(t, feats) for t in self.trees])
        return votes.mean(axis=0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "schema": self.schema.to_dict(),
                "trees": [t.to_dict() for t in self.trees]}


def train_random_forest(train: Dataset, rng: np.random.Generator,
                        trees: int = 100, max_depth: int | None = None,
                        bootstrap: bool = True):
    """Bagged Gini CART on ordinal indices, sqrt(a) feature draws per node.

    Bootstrap resampling happens at the aggregated-group level: a multinomial
    over group counts has exactly the distribution of a classic per-row
    bootstrap while staying O(#distinct rows).
    """
    if train.n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if trees < 1:
        raise InvalidConfig("a forest needs at least one tree")
    constant = _constant_if_single_label(train)
    if constant is not None:
        return constant

    X, y, counts = _grouped_rows(train)
    n = int(counts.sum())
    mtry = max(1, math.isqrt(X.shape[1]))

    fitted = []
    for _ in range(trees):
        if bootstrap:
            w = rng.multinomial(n, counts / n).astype(np.float64)
            keep = w > 0
        else:
            w = counts
            keep = np.ones(len(w), dtype=bool)
        w_kept = w[keep]
        fitted.append(fit_classification_tree(
            X[keep], w_kept, w_kept * (y[keep] == 1), max_depth, mtry, rng))
    return RandomForestClassifier(train.schema, fitted)


# ---------------------------------------------------------------------------
# gradient boosting
# ---------------------------------------------------------------------------

class GbdtClassifier:
    kind = GBDT

    def __init__(self, schema: Schema, f0: float, learning_rate: float,
                 trees: list[TreeNode]):
        self.schema = schema
        self.f0 = float(f0)
        self.learning_rate = float(learning_rate)
        self.trees = trees

    def decision_function(self, feats: np.ndarray) -> np.ndarray:
        score = np.full(feats.shape[0], self.f0)
        for t in self.trees:
            score += self.learning_rate * tree_apply(t, feats)
        return score

    def confidence(self, d: Dataset) -> np.ndarray:
        return sigmoid(self.decision_function(d.features()))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "schema": self.schema.to_dict(), "f0": self.f0,
                "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees]}


def train_gbdt(train: Dataset, rng: np.random.Generator | None = None,
               stages: int = 100, learning_rate: float = 0.1, max_depth: int = 3):
    """Boosted regression trees on the logistic loss.

    Scores start at the base-rate log-odds; each stage fits the residual
    y - p with per-group hessian p(1 - p) and adds learning_rate times the
    tree's Newton values.
    """
    if train.n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if stages < 1:
        raise InvalidConfig("gbdt needs at least one stage")
    constant = _constant_if_single_label(train)
    if constant is not None:
        return constant

    X, labels, w = _grouped_rows(train)
    y = labels.astype(np.float64)

    rate = float((w * y).sum() / w.sum())
    f0 = math.log(rate / (1.0 - rate))
    scores = np.full(len(y), f0)
    fitted = []
    for _ in range(stages):
        p = sigmoid(scores)
        tree = fit_regression_tree(X, y - p, p * (1.0 - p), w, max_depth)
        fitted.append(tree)
        scores = scores + learning_rate * tree_apply(tree, X)
    return GbdtClassifier(train.schema, f0, learning_rate, fitted)


# ---------------------------------------------------------------------------
# random Fourier features + linear SVM + Platt scaling
# ---------------------------------------------------------------------------

@dataclass
class RffMap:
    """Random Fourier feature map approximating the RBF kernel.

    Directions omega ~ Normal(0, 2 gamma I) and phases b ~ Uniform[0, 2 pi);
    features sqrt(2/D) cos(x omega^T + b) satisfy
    E[phi(x) . phi(x')] = exp(-gamma ||x - x'||^2).
    """

    gamma: float
    omega: np.ndarray  # (D, input width)
    phases: np.ndarray  # (D,)

    @classmethod
    def draw(cls, width: int, dim: int, gamma: float, rng: np.random.Generator):
        omega = rng.normal(0.0, math.sqrt(2.0 * gamma), size=(dim, width))
        phases = rng.uniform(0.0, 2.0 * math.pi, size=dim)
        return cls(gamma=float(gamma), omega=omega, phases=phases)


def rff_features(x: np.ndarray, rmap: RffMap) -> np.ndarray:
    dim = rmap.omega.shape[0]
    return math.sqrt(2.0 / dim) * np.cos(x @ rmap.omega.T + rmap.phases)


def scale_gamma(x: np.ndarray) -> float:
    """The 1 / (n_columns * variance) bandwidth heuristic."""
    var = float(x.var())
    if var <= 0:
        return 1.0
    return 1.0 / (x.shape[1] * var)


def platt_loss_and_grad(params: np.ndarray, margins: np.ndarray,
                        targets: np.ndarray, weights: np.ndarray | None = None):
    """Cross-entropy of p = 1/(1 + exp(A m + B)) against soft targets.

    Returns (loss, gradient over [A, B]); standalone for gradient checking.
    """
    a, b = float(params[0]), float(params[1])
    if weights is None:
        weights = np.ones_like(margins)
    z = -(a * margins + b)  # p = sigmoid(z)
    loss = float((weights * (_log1p_exp(z) - targets * z)).sum())
    dz = weights * (sigmoid(z) - targets)
    return loss, np.array([-(dz * margins).sum(), -dz.sum()])


@dataclass(frozen=True)
class PlattCalibrator:
    """Margin -> confidence map 1 / (1 + exp(A m + B))."""

    A: float
    B: float

    def confidence(self, margins: np.ndarray) -> np.ndarray:
        return sigmoid(-(self.A * np.asarray(margins, dtype=np.float64) + self.B))


def fit_platt(margins: np.ndarray, labels: np.ndarray,
              weights: np.ndarray | None = None, max_iter: int = 100,
              tol: float = 1e-10) -> PlattCalibrator:
    """Newton fit of the Platt sigmoid with prior-corrected targets.

    Positive rows get target (N+ + 1)/(N+ + 2) and negative rows 1/(N- + 2),
    which keeps the optimum finite on separable margins. Newton steps are
    halved until the loss stops increasing.
    """
    margins = np.asarray(margins, dtype=np.float64)
    if weights is None:
        weights = np.ones_like(margins)
    n_pos = float(weights[labels == 1].sum())
    n_neg = float(weights[labels == 0].sum())
    targets = np.where(labels == 1, (n_pos + 1.0) / (n_pos + 2.0),
                       1.0 / (n_neg + 2.0))

    params = np.array([0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))])
    loss, grad = platt_loss_and_grad(params, margins, targets, weights)
    for _ in range(max_iter):
        if float(np.abs(grad).max()) <= tol:
            break
        p = sigmoid(-(params[0] * margins + params[1]))
        s = weights * p * (1.0 - p)
        h_aa = float((s * margins * margins).sum()) + 1e-12
        h_ab = float((s * margins).sum())
        h_bb = float(s.sum()) + 1e-12
        direction = np.linalg.solve(np.array([[h_aa, h_ab], [h_ab, h_bb]]), grad)
        step = 1.0
        while True:
            trial = params - step * direction
            new_loss, new_grad = platt_loss_and_grad(trial, margins, targets, weights)
            if new_loss <= loss + 1e-12 or step < 1e-12:
                break
            step *= 0.5
        params, loss, grad = trial, new_loss, new_grad
    return PlattCalibrator(A=float(params[0]), B=float(params[1]))


class SvmPlattClassifier:
    kind = SVM_RFF

    def __init__(self, schema: Schema, rmap: RffMap, w: np.ndarray, b: float,
                 calibrator: PlattCalibrator):
        self.schema = schema
        self.encoder = FeatureEncoder(schema)
        self.rmap = rmap
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)
        self.calibrator = calibrator

    def margins(self, d: Dataset) -> np.ndarray:
        phi = rff_features(self.encoder.encode(d.rows), self.rmap)
        return phi @ self.w + self.b

    def confidence(self, d: Dataset) -> np.ndarray:
        return self.calibrator.confidence(self.margins(d))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "schema": self.schema.to_dict(),
                "gamma": self.rmap.gamma, "omega": self.rmap.omega.tolist(),
                "phases": self.rmap.phases.tolist(), "w": self.w.tolist(),
                "b": self.b, "A": self.calibrator.A, "B": self.calibrator.B}


def train_svm_platt(train: Dataset, rng: np.random.Generator,
                    rff_dim: int = 1024, epochs: int = 5, reg: float = 1e-4):
    """Averaged hinge-loss SGD on RFF features, then Platt calibration.

    One SGD step per sampled row for epochs * n steps at learning rate
    1/(reg t); the classifier uses the average of the iterates. Feature maps
    are evaluated once per distinct row, so the inner loop only touches
    D-dimensional vectors. Calibration margins come from the training rows.
    """
    if train.n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if rff_dim < 1 or epochs < 1:
        raise InvalidConfig("rff_dim and epochs must be positive")
    constant = _constant_if_single_label(train)
    if constant is not None:
        return constant

    encoder = FeatureEncoder(train.schema)
    gamma = scale_gamma(encoder.encode(train.rows))
    rmap = RffMap.draw(encoder.width, rff_dim, gamma, rng)

    feats, labels, counts = _grouped_rows(train)
    phi = rff_features(encoder.encode_features(feats), rmap)
    signs = np.where(labels == 1, 1.0, -1.0)
    n = int(counts.sum())

    total_steps = epochs * n
    order = rng.choice(len(counts), size=total_steps, p=counts / n)
    w = np.zeros(rff_dim)
    b = 0.0
    w_sum = np.zeros(rff_dim)
    b_sum = 0.0
    for t, g in enumerate(order, start=1):
        eta = 1.0 / (reg * t)
        s = signs[g]
        row = phi[g]
        w *= 1.0 - eta * reg
        if s * (row @ w + b) < 1.0:
            w += (eta * s) * row
            b += eta * s
        w_sum += w
        b_sum += b
    w_avg = w_sum / total_steps
    b_avg = b_sum / total_steps

    margins = phi @ w_avg + b_avg
    calibrator = fit_platt(margins, labels, weights=counts)
    return SvmPlattClassifier(train.schema, rmap, w_avg, b_avg, calibrator)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_TRAINERS = {
    LOGISTIC: train_logistic,
    RANDOM_FOREST: train_random_forest,
    GBDT: train_gbdt,
    SVM_RFF: train_svm_platt,
}


@functools.lru_cache(maxsize=None)
def _trainer_param_names(kind: str) -> frozenset:
    """Keyword names a trainer accepts beyond (train, rng)."""
    sig = inspect.signature(_TRAINERS[kind])
    return frozenset(list(sig.parameters)[2:])


def train_model(train: Dataset, config: ModelConfig, rng: np.random.Generator):
    """Train one classifier of the configured family."""
    return _TRAINERS[config.kind](train, rng, **config.params)


def model_from_dict(d: dict):
    """Rebuild any serialized classifier from its `to_dict` output."""
    kind = d["kind"]
    schema = Schema.from_dict(d["schema"])
    if kind == "constant":
        return ConstantClassifier(schema, d["p"])
    if kind == LOGISTIC:
        return LogisticClassifier(schema, np.asarray(d["w"]), d["b"])
    if kind == RANDOM_FOREST:
        return RandomForestClassifier(
            schema, [TreeNode.from_dict(t) for t in d["trees"]])
    if kind == GBDT:
        return GbdtClassifier(schema, d["f0"], d["learning_rate"],
                              [TreeNode.from_dict(t) for t in d["trees"]])
    if kind == SVM_RFF:
        rmap = RffMap(gamma=float(d["gamma"]), omega=np.asarray(d["omega"]),
                      phases=np.asarray(d["phases"]))
        return SvmPlattClassifier(schema, rmap, np.asarray(d["w"]), d["b"],
                                  PlattCalibrator(A=d["A"], B=d["B"]))
    raise InvalidConfig(f"unknown model kind {kind!r}")
