"""Named parameter storage, the Adam optimizer, and a finite-difference checker."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels as K
from .tensor import Tensor, backward


class OptimizerError(ValueError):
    """Optimizer contract violation, e.g. stepping without gradients."""


class GradientCheckError(RuntimeError):
    """Non-finite values encountered while checking gradients."""


@dataclass
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValueError(f"betas must lie in (0,1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


class ParamStore:
    """Ordered map of named parameter tensors plus Adam moment buffers.

    Parameters registered with decay=False (biases, layer-norm gains/biases)
    are exempt from weight decay.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._decay: dict[str, bool] = {}
        self.step_count = 0

    def register(self, name: str, data: np.ndarray, decay: bool = True) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._entries[name] = t
        self._m[name] = np.zeros(t.size)
        self._v[name] = np.zeros(t.size)
        self._decay[name] = decay
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def decays(self, name: str) -> bool:
        return self._decay[name]

    def n_values(self) -> int:
        return sum(t.size for t in self._entries.values())

    def zero_grads(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def fingerprint(self) -> str:
        """sha256 over all parameter bytes, for mutation checks."""
        h = hashlib.sha256()
        for name, t in self._entries.items():
            h.update(name.encode())
            h.update(t.data.tobytes())
        return h.hexdigest()


def adam_step(params: ParamStore, config: AdamConfig, lr: float | None = None) -> None:
    """Bias-corrected Adam update with decoupled weight decay; clears grads.

    `lr` overrides config.learning_rate for schedule support.
    """
    for name, t in params.items():
        if t.grad is None:
            raise OptimizerError(f"parameter {name!r} has no gradient")
    params.step_count += 1
    step = params.step_count
    bc1 = 1.0 - config.beta1 ** step
    bc2 = 1.0 - config.beta2 ** step
    rate = config.learning_rate if lr is None else lr
    for name, t in params.items():
        wd = config.weight_decay if params.decays(name) else 0.0
        K.adam_update(
            t.data.reshape(-1), t.grad.reshape(-1),
            params._m[name], params._v[name],
            rate, config.beta1, config.beta2, config.epsilon, wd, bc1, bc2,
        )
        t.grad = None


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tolerance: float
    worst_param: str = ""
    worst_index: int = -1
    analytic_at_worst: float = 0.0
    numeric_at_worst: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: max relative error {self.max_rel_error:.3e} over "
                f"{self.n_checked} coordinates (tolerance {self.tolerance:.1e}, "
                f"worst {self.worst_param}[{self.worst_index}])")


def gradient_check(
    model_fn: Callable[[ParamStore], Tensor],
    point: ParamStore,
    tolerance: float,
    n_coords: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients of model_fn against central differences.

    Samples up to n_coords coordinates across all parameters; the step for
    coordinate value w is h = 1e-5 * max(1, |w|). Relative error uses
    max(|analytic|, |numeric|, 1e-6) as denominator so near-zero gradients
    are compared at absolute scale.
    """
    point.zero_grads()
    loss = model_fn(point)
    if not np.isfinite(loss.data):
        raise GradientCheckError("loss is not finite at the evaluation point")
    backward(loss)
    analytic = {}
    for name, t in point.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise GradientCheckError(f"non-finite analytic gradient in parameter {name!r}")
        analytic[name] = g.reshape(-1).copy()
    point.zero_grads()

    coords = [(name, i) for name, t in point.items() for i in range(t.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > n_coords:
        picked = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(picked)]

    report = GradCheckReport(max_rel_error=0.0, n_checked=len(coords), tolerance=tolerance)
    for name, i in coords:
        flat = point[name].data.reshape(-1)
        orig = flat[i]
        h = 1e-5 * max(1.0, abs(orig))
        flat[i] = orig + h
        f_plus = float(model_fn(point).data)
        flat[i] = orig - h
        f_minus = float(model_fn(point).data)
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise GradientCheckError(f"non-finite loss while perturbing {name}[{i}]")
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[name][i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        if rel > report.max_rel_error:
            report.max_rel_error = rel
            report.worst_param = name
            report.worst_index = i
            report.analytic_at_worst = float(a)
            report.numeric_at_worst = float(numeric)
    return report
