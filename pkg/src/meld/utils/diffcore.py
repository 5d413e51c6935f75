"""Differentiable tensor core.

Reverse-mode differentiation is delegated to torch autograd: every primitive
below is a thin wrapper that enforces meld's shape and temperature contracts
and, in debug mode, checks outputs for NaN/inf. ``Tape`` and ``gradcheck``
expose the gradient side with the single-use and finite-difference
guarantees the training and test code rely on.
"""

import math
import weakref
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from ..errors import DetachedRoot, NonPositiveTemperature, NotScalar, NumericalError, ShapeMismatch

Tensor = torch.Tensor

DTYPES = {"f32": torch.float32, "f64": torch.float64}

# uniform draws are clamped here before the double log
GUMBEL_CLAMP = 1e-10

_debug = False


def set_debug(enabled: bool) -> None:
    """Toggle NaN/inf checks on every primitive output."""
    global _debug
    _debug = enabled


@contextmanager
def debug_mode(enabled: bool = True) -> Iterator[None]:
    previous = _debug
    set_debug(enabled)
    try:
        yield
    finally:
        set_debug(previous)


def check_finite(x: Tensor, name: str) -> Tensor:
    if _debug and not torch.isfinite(x).all():
        raise NumericalError(f"non-finite values produced by {name}")
    return x


def _leading_broadcast(a: Tensor, b: Tensor, name: str) -> None:
    """Only leading-axis expansion (or a scalar operand) is allowed."""
    if a.dim() == 0 or b.dim() == 0 or a.shape == b.shape:
        return
    short, long = (a, b) if a.dim() <= b.dim() else (b, a)
    if tuple(long.shape[long.dim() - short.dim():]) != tuple(short.shape):
        raise ShapeMismatch(f"{name}: shapes {tuple(a.shape)} and {tuple(b.shape)}")


# elementwise and linear algebra

def add(a: Tensor, b: Tensor) -> Tensor:
    _leading_broadcast(a, b, "add")
    return check_finite(a + b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _leading_broadcast(a, b, "sub")
    return check_finite(a - b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _leading_broadcast(a, b, "mul")
    return check_finite(a * b, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _leading_broadcast(a, b, "div")
    return check_finite(a / b, "div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeMismatch(f"matmul: {tuple(a.shape)} @ {tuple(b.shape)}")
    return check_finite(a @ b, "matmul")


def exp(x: Tensor) -> Tensor:
    return check_finite(torch.exp(x), "exp")


def log(x: Tensor) -> Tensor:
    return check_finite(torch.log(x), "log")


def power(x: Tensor, c) -> Tensor:
    """x ** c for a constant or tensor exponent c."""
    if isinstance(c, Tensor):
        _leading_broadcast(x, c, "power")
    return check_finite(torch.pow(x, c), "power")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return check_finite(torch.softmax(x, dim=axis), "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return check_finite(torch.log_softmax(x, dim=axis), "log_softmax")


def silu(x: Tensor) -> Tensor:
    return check_finite(F.silu(x), "silu")


def softplus(x: Tensor) -> Tensor:
    return check_finite(F.softplus(x), "softplus")


def layer_norm(x: Tensor, weight: Optional[Tensor] = None, bias: Optional[Tensor] = None,
               axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize over ``axis`` (moved last internally) with optional scale/shift."""
    moved = x.movedim(axis, -1)
    out = F.layer_norm(moved, moved.shape[-1:], weight, bias, eps)
    return check_finite(out.movedim(-1, axis), "layer_norm")


def embedding_lookup(table: Tensor, index: Tensor) -> Tensor:
    return F.embedding(index, table)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return torch.cat(list(tensors), dim=axis)


def slice_(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    return x.narrow(axis, start, stop - start)


def transpose(x: Tensor, axis0: int = -2, axis1: int = -1) -> Tensor:
    return x.transpose(axis0, axis1)


def sum_(x: Tensor, axis=None) -> Tensor:
    return x.sum() if axis is None else x.sum(dim=axis)


def mean(x: Tensor, axis=None) -> Tensor:
    return x.mean() if axis is None else x.mean(dim=axis)


def masked_fill(x: Tensor, mask: Tensor, value: float) -> Tensor:
    return x.masked_fill(mask, value)


def gumbel_noise(shape: Sequence[int], generator: Optional[torch.Generator] = None,
                 dtype: torch.dtype = torch.float32) -> Tensor:
    """g = -log(-log(u)), u ~ Unif(0, 1) clamped away from 0 and 1."""
    u = torch.rand(tuple(shape), generator=generator, dtype=dtype)
    u = u.clamp(GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -torch.log(-torch.log(u))


def logistic_from_uniform(u: Tensor) -> Tensor:
    """log(u) - log(1 - u), distributed as the difference of two independent Gumbels."""
    u = u.clamp(GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return torch.log(u) - torch.log1p(-u)


def logistic_noise(shape: Sequence[int], generator: Optional[torch.Generator] = None,
                   dtype: torch.dtype = torch.float32) -> Tensor:
    return logistic_from_uniform(torch.rand(tuple(shape), generator=generator, dtype=dtype))


def gumbel_softmax(logits: Tensor, temperature: float, noise: Tensor) -> Tensor:
    """Relaxed categorical sample softmax((z + g) / eta) over the last axis."""
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    if noise.shape != logits.shape:
        raise ShapeMismatch(f"noise {tuple(noise.shape)} vs logits {tuple(logits.shape)}")
    return check_finite(torch.softmax((logits + noise) / temperature, dim=-1), "gumbel_softmax")


def straight_through(soft: Tensor) -> Tensor:
    """One-hot argmax in the forward pass, ``soft``'s Jacobian in the backward pass."""
    index = soft.argmax(dim=-1, keepdim=True)
    hard = torch.zeros_like(soft).scatter_(-1, index, 1.0)
    # soft - soft.detach() is exactly zero, so the forward value is exactly one-hot
    return hard + (soft - soft.detach())


PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "sub": sub,
    "div": div,
    "exp": exp,
    "log": log,
    "power": power,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "silu": silu,
    "softplus": softplus,
    "layer_norm": layer_norm,
    "embedding_lookup": embedding_lookup,
    "concat": concat,
    "slice": slice_,
    "transpose": transpose,
    "sum": sum_,
    "mean": mean,
    "masked_fill": masked_fill,
    "gumbel_softmax": gumbel_softmax,
}


class Tape:
    """Single-use gradient extraction over torch's recorded graph.

    A root may be differentiated once; ``reset`` forgets consumed roots.
    """

    def __init__(self) -> None:
        self._consumed: List[weakref.ref] = []

    def reset(self) -> None:
        self._consumed.clear()

    def _is_consumed(self, root: Tensor) -> bool:
        self._consumed = [ref for ref in self._consumed if ref() is not None]
        return any(ref() is root for ref in self._consumed)

    def backward(self, root: Tensor, leaves: Mapping[str, Tensor],
                 retain_graph: bool = False) -> Dict[str, Tensor]:
        """Gradients of a scalar root with respect to named leaves.

        Leaves that do not participate get an exact zero gradient.
        """
        if root.numel() != 1:
            raise NotScalar(f"root must be scalar, got shape {tuple(root.shape)}")
        if not root.requires_grad or root.grad_fn is None and not root.is_leaf:
            raise DetachedRoot("root is not on the tape")
        if self._is_consumed(root):
            raise DetachedRoot("backward already ran for this root; call reset()")
        names = list(leaves)
        grads = torch.autograd.grad(root.reshape(()), [leaves[k] for k in names],
                                    retain_graph=retain_graph, allow_unused=True)
        self._consumed.append(weakref.ref(root))
        return {name: torch.zeros_like(leaves[name]) if g is None else g
                for name, g in zip(names, grads)}


def backward(root: Tensor, leaves: Mapping[str, Tensor]) -> Dict[str, Tensor]:
    return Tape().backward(root, leaves)


@dataclass
class GradcheckReport:
    passed: bool
    max_rel_error: float
    tolerance: float
    per_input: Dict[str, float] = field(default_factory=dict)
    failures: List[Tuple[str, int, float, float]] = field(default_factory=list)


def gradcheck(f: Callable[..., Tensor],
              inputs: Mapping[str, Tensor],
              tolerance: float = 1e-5,
              step: float = 1e-5) -> GradcheckReport:
    """Compare autograd gradients of scalar ``f`` with central differences.

    The error per element is |analytic - numeric| / max(|analytic|, |numeric|, 1),
    i.e. relative for gradients above one and absolute below.

    Args:
        f: Function of the named inputs returning a scalar tensor
        inputs: f64 tensors; they are cloned, never modified
        tolerance: Maximum accepted error
        step: Central-difference step

    Returns:
        GradcheckReport with the maximum error and any failing elements
    """
    leaves = {k: v.detach().clone().to(torch.float64).requires_grad_(True) for k, v in inputs.items()}
    analytic = Tape().backward(f(**leaves), leaves)

    report = GradcheckReport(passed=True, max_rel_error=0.0, tolerance=tolerance)
    with torch.no_grad():
        for name, leaf in leaves.items():
            flat = leaf.view(-1)
            grad = analytic[name].reshape(-1)
            worst = 0.0
            for k in range(flat.numel()):
                original = flat[k].item()
                flat[k] = original + step
                plus = f(**leaves).item()
                flat[k] = original - step
                minus = f(**leaves).item()
                flat[k] = original
                numeric = (plus - minus) / (2 * step)
                a = grad[k].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
                if not math.isfinite(err):
                    err = math.inf
                worst = max(worst, err)
                if err > tolerance:
                    report.failures.append((name, k, a, numeric))
            report.per_input[name] = worst
            report.max_rel_error = max(report.max_rel_error, worst)
    report.passed = not report.failures
    return report
