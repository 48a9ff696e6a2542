"""Classifier oracles, objectives and query accounting.

Images are ``(C, H, W)`` float arrays with values in ``[0, 1]``.

Built-in models can be stored in a little-endian weight file::

    magic   b"SBO1"
    uint32  kind      0 = linear, 1 = mlp, 2 = ball
    uint32  C, H, W   input shape
    uint32  K         number of classes
    uint32  hidden    hidden width (mlp only, else 0)
    float32 payload, row-major:
        linear: W (K x D), b (K)
        mlp:    W1 (hidden x D), b1 (hidden), W2 (K x hidden), b2 (K)
        ball:   center (D), radius (1)            K must be 2

with ``D = C * H * W``.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from bayesattack.errors import BudgetExhausted, CapabilityError, FormatError

WEIGHT_MAGIC = b"SBO1"
_HEADER = struct.Struct("<4s6I")
_KINDS = {0: "linear", 1: "mlp", 2: "ball"}


def as_image(x, shape=None) -> np.ndarray:
    img = np.asarray(x, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"images must be (C, H, W), got shape {img.shape}")
    if shape is not None and img.shape != tuple(shape):
        raise ValueError(f"expected image shape {tuple(shape)}, got {img.shape}")
    return img


class Oracle:
    """Deterministic classifier. Subclasses implement :meth:`logits`.

    Oracles do no budget accounting themselves; go through
    :func:`query_hard` / :func:`query_soft` with a :class:`QueryLedger`.
    """

    shape: tuple
    classes: int
    modes = ("hard", "soft")

    def logits(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def label(self, image: np.ndarray) -> int:
        # np.argmax returns the first maximum, i.e. ties go to the lowest index
        return int(np.argmax(self.logits(image)))

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LinearOracle(Oracle):
    """``logits = W x + b`` on the flattened image."""

    kind = "linear"

    def __init__(self, weights, bias, shape):
        self.W = np.asarray(weights, dtype=np.float64)
        self.b = np.asarray(bias, dtype=np.float64).ravel()
        self.shape = tuple(int(s) for s in shape)
        self.classes = self.b.size
        if self.W.shape != (self.classes, int(np.prod(self.shape))):
            raise ValueError(f"weights shape {self.W.shape} does not match {self.shape}")

    def logits(self, image):
        return self.W @ as_image(image, self.shape).ravel() + self.b

    def _payload(self):
        return 0, 0, [self.W, self.b]


class MLPOracle(Oracle):
    """One hidden ReLU layer."""

    kind = "mlp"

    def __init__(self, w1, b1, w2, b2, shape):
        self.W1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64).ravel()
        self.W2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64).ravel()
        self.shape = tuple(int(s) for s in shape)
        self.classes = self.b2.size
        hidden = self.b1.size
        D = int(np.prod(self.shape))
        if self.W1.shape != (hidden, D) or self.W2.shape != (self.classes, hidden):
            raise ValueError("inconsistent MLP weight shapes")

    def logits(self, image):
        h = np.maximum(self.W1 @ as_image(image, self.shape).ravel() + self.b1, 0.0)
        return self.W2 @ h + self.b2

    def _payload(self):
        return 1, self.b1.size, [self.W1, self.b1, self.W2, self.b2]


class BallOracle(Oracle):
    """Two classes split by an l2 sphere: class 0 inside (boundary included).

    ``logits = [radius - ||x - c||, ||x - c|| - radius]``. The decision
    margins are available in closed form, which makes the attack's
    difficulty exactly controllable.
    """

    kind = "ball"
    classes = 2

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=np.float64)
        if self.center.ndim != 3:
            raise ValueError("center must be a (C, H, W) array")
        self.shape = self.center.shape
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def logits(self, image):
        r = np.linalg.norm(as_image(image, self.shape) - self.center)
        return np.array([self.radius - r, r - self.radius])

    def l2_margin(self, x) -> float:
        """Smallest l2 perturbation that leaves the ball (x inside)."""
        return self.radius - float(np.linalg.norm(as_image(x, self.shape) - self.center))

    def linf_margin(self, x) -> float:
        """Smallest t such that some ``||delta||_inf <= t`` leaves the ball.

        The farthest point of the box ``x + [-t, t]^D`` from the center is
        ``x + t sign(x - c)``, so ``t`` solves
        ``sum (|a_i| + t)^2 = radius^2`` with ``a = x - c``.
        """
        a = np.abs(as_image(x, self.shape) - self.center).ravel()
        D = a.size
        s1, s2 = a.sum(), a @ a
        if s2 > self.radius**2:
            return 0.0
        return float((-s1 + np.sqrt(s1 * s1 - D * (s2 - self.radius**2))) / D)

    def _payload(self):
        return 2, 0, [self.center, np.array([self.radius])]


def save_weights(oracle: Oracle, path) -> None:
    kind, hidden, arrays = oracle._payload()
    C, H, W = oracle.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WEIGHT_MAGIC, kind, C, H, W, oracle.classes, hidden))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_weights(path) -> Oracle:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, kind, C, H, W, K, hidden = _HEADER.unpack_from(raw)
    if magic != WEIGHT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if kind not in _KINDS:
        raise FormatError(f"{path}: unknown model kind {kind}")
    D = C * H * W
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    shape = (C, H, W)
    if kind == 0:
        sizes = [K * D, K]
    elif kind == 1:
        sizes = [hidden * D, hidden, K * hidden, K]
    else:
        if K != 2:
            raise FormatError(f"{path}: ball model must have 2 classes, got {K}")
        sizes = [D, 1]
    if body.size != sum(sizes):
        raise FormatError(f"{path}: expected {sum(sizes)} floats, found {body.size}")
    parts = np.split(body, np.cumsum(sizes)[:-1])
    if kind == 0:
        return LinearOracle(parts[0].reshape(K, D), parts[1], shape)
    if kind == 1:
        return MLPOracle(
            parts[0].reshape(hidden, D), parts[1], parts[2].reshape(K, hidden), parts[3], shape
        )
    return BallOracle(parts[0].reshape(shape), parts[1][0])


@dataclass
class QueryLedger:
    budget: int
    used: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be positive")

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def check(self):
        if self.used >= self.budget:
            raise BudgetExhausted(f"query budget of {self.budget} exhausted")

    def charge(self):
        self.check()
        self.used += 1


def query_hard(oracle: Oracle, image, ledger: QueryLedger) -> int:
    """Top-1 label; charges one query only if the oracle answers."""
    ledger.check()
    label = oracle.label(image)
    ledger.charge()
    return label


def query_soft(oracle: Oracle, image, ledger: QueryLedger) -> np.ndarray:
    if "soft" not in oracle.modes:
        raise CapabilityError("oracle does not expose logits")
    ledger.check()
    logits = np.asarray(oracle.logits(image), dtype=np.float64)
    ledger.charge()
    return logits


class Goal(str, enum.Enum):
    UNTARGETED = "untargeted"
    TARGETED = "targeted"


class Feedback(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class ObjectiveSpec:
    goal: Goal = Goal.UNTARGETED
    feedback: Feedback = Feedback.HARD
    target: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "goal", Goal(self.goal))
        object.__setattr__(self, "feedback", Feedback(self.feedback))
        if (self.goal is Goal.TARGETED) != (self.target is not None):
            raise ValueError("target label must be given exactly for targeted attacks")

    def validate_for(self, true_label: int):
        if self.goal is Goal.TARGETED and self.target == true_label:
            raise ValueError("target label must differ from the true label")


class Evaluation(NamedTuple):
    value: float
    success: bool
    label: int


def perturbed_image(x0, delta) -> np.ndarray:
    """``clip(x0 + delta, 0, 1)``."""
    return np.clip(as_image(x0) + np.asarray(delta, dtype=np.float64), 0.0, 1.0)


def objective(spec: ObjectiveSpec, oracle: Oracle, x0, y0: int, delta, ledger: QueryLedger) -> Evaluation:
    """Evaluate the attack objective at ``delta`` with exactly one query.

    Hard-label feedback gives 0 on success and -1 otherwise. Soft-label
    feedback gives a logit margin that is positive exactly on success.
    """
    image = perturbed_image(x0, delta)
    targeted = spec.goal is Goal.TARGETED
    if spec.feedback is Feedback.HARD:
        label = query_hard(oracle, image, ledger)
        ok = label == spec.target if targeted else label != y0
        return Evaluation(0.0 if ok else -1.0, ok, label)
    z = query_soft(oracle, image, ledger)
    label = int(np.argmax(z))
    ref = spec.target if targeted else y0
    others = np.delete(z, ref)
    margin = float(z[ref] - others.max()) if targeted else float(others.max() - z[ref])
    return Evaluation(margin, margin > 0, label)
