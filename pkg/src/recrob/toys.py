"""Desk-scale classifiers, perturbation sets, and datasets.

Linear classifiers with closed-form margins and optimal l2 attacks, a
one-hidden-layer tanh network with analytic gradients, lp perturbation
balls, finite weighted datasets, and the two-member fixture on which
deterministic logit averaging is strictly worse than either member while
fifty-fifty randomization halves the risk.

Class labels are 0-based everywhere. Argmax ties break to the smallest
class index. Models are treated as immutable after construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, InvalidInputError


def softmax(logits):
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(logits, y):
    """Stable per-sample cross-entropy; logits (n, C), y (n,)."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=-1))
    return lse - shifted[np.arange(len(y)), y]


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise InvalidInputError("inputs must be (d,) or (n, d)")


class LinearClassifier:
    """Affine logits ``W x + b`` with W of shape (C, d)."""

    def __init__(self, weights, bias=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] < 2:
            raise InvalidInputError("weight matrix must be (C, d) with C >= 2")
        self.bias = (
            np.zeros(self.weights.shape[0])
            if bias is None
            else np.asarray(bias, dtype=np.float64)
        )
        if self.bias.shape != (self.weights.shape[0],):
            raise InvalidInputError("bias length must match the class count")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise InvalidInputError("parameters must be finite")

    @property
    def classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def logits(self, x):
        batch, single = _as_batch(x)
        if batch.shape[1] != self.dim:
            raise InvalidInputError(
                f"input has dimension {batch.shape[1]}, expected {self.dim}"
            )
        out = batch @ self.weights.T + self.bias
        return out[0] if single else out

    def backprop_logit_grad(self, x, dlogits):
        """Map d(loss)/d(logits) back to d(loss)/d(x); both batched."""
        return dlogits @ self.weights

    def parameter_grads(self, x, y, dlogits):
        batch, _ = _as_batch(x)
        return {
            "weights": dlogits.T @ batch / len(batch),
            "bias": dlogits.mean(axis=0),
        }

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def copy(self):
        return LinearClassifier(self.weights.copy(), self.bias.copy())


def binary_linear(w, b=0.0):
    """Binary classifier deciding class 0 iff ``w.x + b >= 0``.

    Built as the antisymmetric soft classifier [w.x + b, -(w.x + b)], so
    the >= comes from the smallest-index tie-break.
    """
    w = np.asarray(w, dtype=np.float64)
    return LinearClassifier(np.vstack([w, -w]), np.array([b, -b], dtype=np.float64))


class SmallMlp:
    """One-hidden-layer tanh network: d -> hidden -> C."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise InvalidInputError("weight matrices must be 2-D")
        hidden, dim = self.w1.shape
        classes = self.w2.shape[0]
        if self.w2.shape[1] != hidden or self.b1.shape != (hidden,) or self.b2.shape != (classes,):
            raise InvalidInputError("layer shapes are inconsistent")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.isfinite(arr).all():
                raise InvalidInputError("parameters must be finite")

    @classmethod
    def init(cls, rng, dim, hidden, classes):
        w1 = rng.normal(scale=1.0 / math.sqrt(dim), size=(hidden, dim))
        w2 = rng.normal(scale=1.0 / math.sqrt(hidden), size=(classes, hidden))
        return cls(w1, np.zeros(hidden), w2, np.zeros(classes))

    @property
    def classes(self):
        return self.w2.shape[0]

    @property
    def dim(self):
        return self.w1.shape[1]

    def _hidden(self, batch):
        return np.tanh(batch @ self.w1.T + self.b1)

    def logits(self, x):
        batch, single = _as_batch(x)
        if batch.shape[1] != self.dim:
            raise InvalidInputError(
                f"input has dimension {batch.shape[1]}, expected {self.dim}"
            )
        out = self._hidden(batch) @ self.w2.T + self.b2
        return out[0] if single else out

    def backprop_logit_grad(self, x, dlogits):
        batch, _ = _as_batch(x)
        a1 = self._hidden(batch)
        dz1 = (dlogits @ self.w2) * (1.0 - a1 * a1)
        return dz1 @ self.w1

    def parameter_grads(self, x, y, dlogits):
        batch, _ = _as_batch(x)
        a1 = self._hidden(batch)
        dz1 = (dlogits @ self.w2) * (1.0 - a1 * a1)
        n = len(batch)
        return {
            "w2": dlogits.T @ a1 / n,
            "b2": dlogits.mean(axis=0),
            "w1": dz1.T @ batch / n,
            "b1": dz1.mean(axis=0),
        }

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self):
        return SmallMlp(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


class DeterministicEnsemble:
    """Logit-averaging ensemble exposed as a single classifier."""

    def __init__(self, members):
        members = list(members)
        if not members:
            raise InvalidInputError("ensemble needs at least one member")
        dims = {mdl.dim for mdl in members}
        classes = {mdl.classes for mdl in members}
        if len(dims) != 1 or len(classes) != 1:
            raise InvalidInputError("members must share input dimension and classes")
        self.members = tuple(members)

    @property
    def classes(self):
        return self.members[0].classes

    @property
    def dim(self):
        return self.members[0].dim

    def logits(self, x):
        out = self.members[0].logits(x)
        for mdl in self.members[1:]:
            out = out + mdl.logits(x)
        return out

    def backprop_logit_grad(self, x, dlogits):
        out = self.members[0].backprop_logit_grad(x, dlogits)
        for mdl in self.members[1:]:
            out = out + mdl.backprop_logit_grad(x, dlogits)
        return out


def classify(model, x):
    """Predicted class index; ties break to the smallest index."""
    logits = model.logits(x)
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=1)


def deterministic_ensemble_classify(models, x):
    """Class of the summed-logit ensemble; smallest-index tie-break."""
    return classify(DeterministicEnsemble(models), x)


def ce_loss_and_input_grad(model, x, y):
    """Cross-entropy loss and its input gradient; batched or single."""
    batch, single = _as_batch(x)
    ys = np.atleast_1d(np.asarray(y, dtype=np.int64))
    logits = np.atleast_2d(model.logits(batch))
    probs = softmax(logits)
    losses = cross_entropy(logits, ys)
    dlogits = probs.copy()
    dlogits[np.arange(len(ys)), ys] -= 1.0
    grads = model.backprop_logit_grad(batch, dlogits)
    if single:
        return float(losses[0]), grads[0]
    return losses, grads


def input_jacobian(model, x):
    """Jacobian of the logits with respect to the input; (C, d)."""
    batch, _ = _as_batch(x)
    classes = model.classes
    rows = []
    for c in range(classes):
        dlogits = np.zeros((1, classes))
        dlogits[0, c] = 1.0
        rows.append(model.backprop_logit_grad(batch[:1], dlogits)[0])
    return np.vstack(rows)


def _decision_hyperplane(model):
    if not isinstance(model, LinearClassifier) or model.classes != 2:
        raise InvalidInputError("margin formulas require a binary linear classifier")
    w = model.weights[0] - model.weights[1]
    b = float(model.bias[0] - model.bias[1])
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise DegenerateModelError("decision boundary is degenerate (zero weights)")
    return w, b, norm


def linear_margin(model, x):
    """Exact l2 distance from ``x`` to a binary linear decision boundary."""
    w, b, norm = _decision_hyperplane(model)
    x = np.asarray(x, dtype=np.float64)
    return float(abs(w @ x + b) / norm)


def linear_optimal_l2_attack(model, z, eps):
    """Closed-form optimal l2 perturbation against a binary linear classifier.

    Pushes the true class's margin down by the full budget:
    ``delta = -s * eps * w / ||w||`` with s = +1 for class 0 and -1 for
    class 1. Returns the perturbation when it misclassifies (always the
    case at an already-misclassified point), else None: no perturbation in
    the ball flips the decision.
    """
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    if eps < 0.0:
        raise InvalidInputError("attack radius must be >= 0")
    w, _, norm = _decision_hyperplane(model)
    sign = 1.0 if y == 0 else -1.0
    delta = -sign * eps * w / norm
    if classify(model, x + delta) != y:
        return delta
    return None


def mlp_forward_backward(model, x, y):
    """Loss, input gradient, and parameter gradients of the network at (x, y).

    All gradients are exact; the parameter gradients come back as a dict
    keyed like ``model.params()``.
    """
    x = np.asarray(x, dtype=np.float64)
    loss, grad_x = ce_loss_and_input_grad(model, x, y)
    logits = np.atleast_2d(model.logits(x))
    dlogits = softmax(logits)
    dlogits[0, int(y)] -= 1.0
    grads = model.parameter_grads(x[None, :], np.array([y]), dlogits)
    return loss, grad_x, grads


@dataclass(frozen=True)
class PerturbationSet:
    """Closed lp ball of radius eps, p in {2, inf}."""

    norm: float
    radius: float

    def __post_init__(self):
        if self.norm not in (2.0, math.inf):
            raise InvalidInputError("only l2 and linf balls are supported")
        if self.radius < 0.0:
            raise InvalidInputError("radius must be >= 0")

    def project(self, delta):
        """Nearest point of the ball; batched over rows for 2-D input."""
        delta = np.asarray(delta, dtype=np.float64)
        if self.norm == math.inf:
            return np.clip(delta, -self.radius, self.radius)
        norms = np.linalg.norm(delta, axis=-1, keepdims=delta.ndim == 2)
        scale = np.minimum(1.0, np.divide(self.radius, norms, out=np.ones_like(norms), where=norms > 0))
        return delta * scale

    def steepest(self, grad):
        """Unit-step ascent direction: sign map for linf, normalized for l2.

        A zero gradient maps to the zero direction.
        """
        grad = np.asarray(grad, dtype=np.float64)
        if self.norm == math.inf:
            return np.sign(grad)
        norms = np.linalg.norm(grad, axis=-1, keepdims=grad.ndim == 2)
        return np.divide(grad, norms, out=np.zeros_like(grad), where=norms > 0)

    def contains(self, delta, tol=1e-12):
        delta = np.asarray(delta, dtype=np.float64)
        if self.norm == math.inf:
            return bool(np.max(np.abs(delta), initial=0.0) <= self.radius + tol)
        return bool(np.linalg.norm(delta) <= self.radius + tol)

    def random_point(self, rng, dim):
        """Uniform draw from the ball."""
        if self.norm == math.inf:
            return rng.uniform(-self.radius, self.radius, size=dim)
        direction = rng.normal(size=dim)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            return np.zeros(dim)
        radius = self.radius * rng.uniform() ** (1.0 / dim)
        return direction / norm * radius


class LabeledDataset:
    """Finite weighted dataset: features, 0-based labels, probability weights.

    Weights default to uniform and are renormalized so their float sum is
    exactly 1.0 (largest weight absorbs the residual), which keeps the
    exact-risk arithmetic of small fixtures stable.
    """

    def __init__(self, x, y, weights=None):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 1 or len(self.x) != len(self.y):
            raise InvalidInputError("need features (n, d) and labels (n,)")
        if len(self.x) == 0:
            raise InvalidInputError("dataset must be nonempty")
        if np.any(self.y < 0):
            raise InvalidInputError("labels must be nonnegative class indices")
        if weights is None:
            w = np.full(len(self.x), 1.0 / len(self.x))
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (len(self.x),):
                raise InvalidInputError("weights must match the number of points")
            if np.any(w < 0.0):
                raise InvalidInputError("weights must be >= 0")
        total = float(np.sum(w))
        if abs(total - 1.0) > 1e-12:
            raise InvalidInputError(f"weights sum to {total!r}, not 1")
        if total != 1.0:
            w = w / total
        residual = 1.0 - float(np.sum(w))
        if residual != 0.0:
            w[int(np.argmax(w))] += residual
        self.weights = w

    def __len__(self):
        return len(self.x)

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def classes(self):
        return int(self.y.max()) + 1

    def subset(self, idx):
        w = self.weights[idx]
        return LabeledDataset(self.x[idx], self.y[idx], w / np.sum(w))


def sample_gaussian_mixture(seed, n, means, scales):
    """Reproducible isotropic Gaussian mixture with one component per class."""
    if n < 1:
        raise InvalidInputError("need at least one sample")
    means = np.asarray(means, dtype=np.float64)
    scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), (means.shape[0],))
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, means.shape[0], size=n)
    x = means[labels] + scales[labels][:, None] * rng.standard_normal((n, means.shape[1]))
    return LabeledDataset(x, labels)


COUNTEREXAMPLE_EPS_LIMIT = 1.0 / math.sqrt(2.0)


def make_counterexample(p=0.5, eps=0.5):
    """Two-member fixture where logit averaging fails and randomization helps.

    Two binary linear classifiers on the plane and a two-point dataset with
    Bernoulli(p) weights. Each member errs on exactly one of the points
    (risks 1-p and p), the averaged-logit ensemble errs on both (risk 1),
    and the fifty-fifty randomized ensemble has risk 1/2. Requires
    0 < p < 1 and 0 < eps < 1/sqrt(2) so neither member can be fooled at
    its correctly classified point.
    """
    if not 0.0 < p < 1.0:
        raise InvalidInputError("p must lie strictly between 0 and 1")
    if not 0.0 < eps < COUNTEREXAMPLE_EPS_LIMIT:
        raise InvalidInputError("eps must lie in (0, 1/sqrt(2))")
    f1 = binary_linear(np.array([1.0, 1.0]))
    f2 = binary_linear(np.array([1.0, -1.0]))
    dataset = LabeledDataset(
        x=np.array([[-1.0, 2.0], [-1.0, -2.0]]),
        y=np.array([0, 0]),
        weights=np.array([p, 1.0 - p]),
    )
    return (f1, f2), dataset, PerturbationSet(norm=2.0, radius=eps)
