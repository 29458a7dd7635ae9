"""Differentiable classifiers over a flat parameter vector.

Two architectures: a linear softmax classifier and a one-hidden-layer
tanh MLP (tanh keeps the model smooth so finite-difference gradient
checks stay clean).  Loss is log-sum-exp-stabilized cross-entropy, either
a plain mean over the batch or a per-class weighted mean for clients
realized as weighted views of a shared pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rng import Rng, as_generator


@dataclass(frozen=True)
class SoftmaxRegression:
    in_dim: int
    n_classes: int

    @property
    def n_params(self) -> int:
        return self.in_dim * self.n_classes + self.n_classes


@dataclass(frozen=True)
class Mlp:
    in_dim: int
    hidden: int
    n_classes: int

    @property
    def n_params(self) -> int:
        return (
            self.in_dim * self.hidden
            + self.hidden
            + self.hidden * self.n_classes
            + self.n_classes
        )


Arch = SoftmaxRegression | Mlp


@dataclass
class ModelParams:
    """Flat float64 parameter vector plus its architecture descriptor."""

    arch: Arch
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.arch.n_params,):
            raise ValueError(
                f"parameter vector has shape {self.theta.shape}, "
                f"arch requires ({self.arch.n_params},)"
            )

    def copy(self) -> ModelParams:
        return ModelParams(self.arch, self.theta.copy())


def _validate_arch(arch: Arch) -> None:
    if arch.in_dim < 1 or arch.n_classes < 2:
        raise ValueError(f"invalid architecture {arch}")
    if isinstance(arch, Mlp) and arch.hidden < 1:
        raise ValueError(f"invalid architecture {arch}")


def init_params(rng: Rng | np.random.Generator, arch: Arch) -> ModelParams:
    """Scaled-uniform weight init (+-1/sqrt(fan_in)), zero biases."""
    _validate_arch(arch)
    gen = as_generator(rng)
    theta = np.zeros(arch.n_params)
    if isinstance(arch, SoftmaxRegression):
        nw = arch.in_dim * arch.n_classes
        bound = 1.0 / np.sqrt(arch.in_dim)
        theta[:nw] = gen.uniform(-bound, bound, nw)
    else:
        o1 = arch.in_dim * arch.hidden
        o2 = o1 + arch.hidden
        o3 = o2 + arch.hidden * arch.n_classes
        theta[:o1] = gen.uniform(-1.0 / np.sqrt(arch.in_dim), 1.0 / np.sqrt(arch.in_dim), o1)
        theta[o2:o3] = gen.uniform(-1.0 / np.sqrt(arch.hidden), 1.0 / np.sqrt(arch.hidden), o3 - o2)
    return ModelParams(arch, theta)


def _check_batch(arch: Arch, x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != arch.in_dim:
        raise ValueError(f"feature matrix shape {x.shape} does not match in_dim={arch.in_dim}")
    if y.shape != (x.shape[0],):
        raise ValueError(f"label vector shape {y.shape} does not match batch size {x.shape[0]}")
    if x.shape[0] == 0:
        raise ValueError("empty batch")


def sample_weights(
    y: np.ndarray, n_classes: int, class_weights: np.ndarray | None
) -> np.ndarray:
    """Per-sample weights realizing the loss reduction.

    Plain mode: every sample weighs 1/n.  Per-class mode: class j's samples
    share weight class_weights[j] equally, so the total loss is the
    class-weighted mean of per-class mean losses; classes absent from the
    batch contribute nothing.
    """
    n = y.shape[0]
    if class_weights is None:
        return np.full(n, 1.0 / n)
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    per_class = np.zeros(n_classes)
    present = counts > 0
    per_class[present] = np.asarray(class_weights, dtype=np.float64)[present] / counts[present]
    return per_class[y]


def loss_and_grad(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    class_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and its exact gradient over the flat parameters."""
    arch = params.arch
    _check_batch(arch, x, y)
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    sw = sample_weights(y, arch.n_classes, class_weights)
    if isinstance(arch, SoftmaxRegression):
        return _kernels.softmax_xent(params.theta, x, y, sw, arch.in_dim, arch.n_classes)
    return _kernels.mlp_tanh_xent(
        params.theta, x, y, sw, arch.in_dim, arch.hidden, arch.n_classes
    )


def loss(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    class_weights: np.ndarray | None = None,
) -> float:
    return loss_and_grad(params, x, y, class_weights)[0]


def scores(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class scores (logits), shape (n, n_classes)."""
    arch = params.arch
    theta = params.theta
    x = np.asarray(x, dtype=np.float64)
    if isinstance(arch, SoftmaxRegression):
        nw = arch.in_dim * arch.n_classes
        return x @ theta[:nw].reshape(arch.in_dim, arch.n_classes) + theta[nw:]
    o1 = arch.in_dim * arch.hidden
    o2 = o1 + arch.hidden
    o3 = o2 + arch.hidden * arch.n_classes
    h = np.tanh(x @ theta[:o1].reshape(arch.in_dim, arch.hidden) + theta[o1:o2])
    return h @ theta[o2:o3].reshape(arch.hidden, arch.n_classes) + theta[o3:]


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Predicted class per row; score ties resolve to the lowest class index."""
    return np.argmax(scores(params, x), axis=1)


def accuracy(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    class_weights: np.ndarray | None = None,
) -> float:
    """Fraction of correct predictions in [0, 1].

    With class_weights, returns the class-weighted mean of per-class
    accuracies (weights renormalized over the classes present in ``y``),
    mirroring the weighted loss of shared-pool clients.
    """
    _check_batch(params.arch, np.asarray(x), np.asarray(y))
    hits = predict(params, x) == y
    if class_weights is None:
        return float(np.mean(hits))
    cw = np.asarray(class_weights, dtype=np.float64)
    total = 0.0
    weight_seen = 0.0
    for j in range(params.arch.n_classes):
        mask = y == j
        if mask.any():
            total += cw[j] * float(np.mean(hits[mask]))
            weight_seen += cw[j]
    if weight_seen == 0.0:
        raise ValueError("class_weights put no mass on any class present in the data")
    return total / weight_seen


def central_difference(fn, x0: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Coordinate-wise central-difference gradient of a scalar function.

    Exact (up to roundoff) for quadratics; O(eps^2) error in general.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    probe = np.array(x0, dtype=np.float64, copy=True)
    grad = np.empty_like(probe)
    for i in range(probe.shape[0]):
        orig = probe[i]
        probe[i] = orig + eps
        hi = fn(probe)
        probe[i] = orig - eps
        lo = fn(probe)
        probe[i] = orig
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad


def finite_diff_grad(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    class_weights: np.ndarray | None = None,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference approximation of the loss gradient.

    Independent numerical oracle for ``loss_and_grad``; shares only the
    loss evaluation itself.
    """
    return central_difference(
        lambda theta: loss(ModelParams(params.arch, theta), x, y, class_weights),
        params.theta,
        eps,
    )


def _arch_header(arch: Arch) -> str:
    if isinstance(arch, SoftmaxRegression):
        return f"arch softmax_regression in_dim={arch.in_dim} classes={arch.n_classes}"
    return f"arch mlp in_dim={arch.in_dim} hidden={arch.hidden} classes={arch.n_classes}"


def save_params(params: ModelParams, path: str) -> None:
    """Write a text checkpoint with hex floats for bit-exact reload."""
    lines = ["fedvar-model-v1", _arch_header(params.arch), f"params {params.theta.shape[0]}"]
    lines.extend(float(v).hex() for v in params.theta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path: str) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "fedvar-model-v1":
        raise ValueError(f"{path}: not a fedvar model checkpoint")
    fields = dict(part.split("=") for part in lines[1].split()[2:])
    kind = lines[1].split()[1]
    if kind == "softmax_regression":
        arch: Arch = SoftmaxRegression(int(fields["in_dim"]), int(fields["classes"]))
    elif kind == "mlp":
        arch = Mlp(int(fields["in_dim"]), int(fields["hidden"]), int(fields["classes"]))
    else:
        raise ValueError(f"{path}: unknown architecture {kind!r}")
    count = int(lines[2].split()[1])
    theta = np.array([float.fromhex(v) for v in lines[3 : 3 + count]])
    return ModelParams(arch, theta)
