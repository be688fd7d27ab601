"""
Dense reverse-mode differentiation over numpy float64 arrays.

Only the handful of primitives the extractor, the two heads, the VAE and the
latent classifier need are provided. Broadcasting is limited to a row-vector
bias against a batch and to scalars.
"""

from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from util import logger
from zsl.errors import DivergenceError, DomainError, LabelError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: Tuple["Tensor", ...] = ()):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = np.zeros_like(self.data) if requires_grad else None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, ())
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(self, other)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(_as_tensor(other), self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(self, other)
    def __neg__(self): return scale(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("Division is only supported by a constant")
        return scale(self, 1.0 / float(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Tuple[Tensor, ...], backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data, _parents=parents)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._backward = backward
    return out


def _reduce_to(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    return g.sum(axis=tuple(range(g.ndim - len(shape))))


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return
    raise ShapeError(op, a.shape, b.shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _result(a.data * c, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return _result(out_data, (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(2.0 * a.data * g)

    return _result(a.data * a.data, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Elementwise clamp to [lo, hi]; the gradient is zero where the bound is active."""
    if lo > hi:
        raise DomainError(f"Empty clip interval [{lo}, {hi}]")
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a._accumulate(g * inside)

    return _result(np.clip(a.data, lo, hi), (a,), backward)


def relu(x: Tensor) -> Tensor:
    # subgradient 0 at exactly 0
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), backward)


def total(a: Tensor) -> Tensor:
    """Sum of every element, as a scalar."""
    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(np.asarray(a.data.sum()), (a,), backward)


def mean(a: Tensor) -> Tensor:
    return scale(total(a), 1.0 / max(a.data.size, 1))


def affine(params: "ParamSet", x: Tensor) -> Tensor:
    """y = W x + b for a vector, or x W^T + b row-wise for a batch."""
    W, b = params["weight"], params["bias"]
    x = _as_tensor(x)
    if x.ndim not in (1, 2) or x.shape[-1] != W.shape[1]:
        raise ShapeError("affine", W.shape, x.shape)

    if x.ndim == 1:
        def backward(g):
            if W.requires_grad:
                W._accumulate(np.outer(g, x.data))
            if b.requires_grad:
                b._accumulate(g)
            if x.requires_grad:
                x._accumulate(W.data.T @ g)

        return _result(W.data @ x.data + b.data, (W, b, x), backward)

    def backward(g):
        if W.requires_grad:
            W._accumulate(g.T @ x.data)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))
        if x.requires_grad:
            x._accumulate(g @ W.data)

    return _result(x.data @ W.data.T + b.data, (W, b, x), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ShapeError("softmax_cross_entropy", logits.shape, labels.shape)
    n, k = logits.shape
    if n < 1:
        raise LabelError("Cross-entropy needs a batch of at least one sample")
    if labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"Labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))

    def backward(g):
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        logits._accumulate(probs * (g / n))

    return _result(np.asarray(loss), (logits,), backward)


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; gradients accumulate into leaves."""
    if loss.data.size != 1:
        raise ShapeError("backward", loss.shape, ())
    if not loss.requires_grad:
        return

    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class ParamSet:
    """Named parameter tensors, each with a gradient accumulator of its own shape."""

    def __init__(self, tensors: Optional[Dict[str, Tensor]] = None):
        self._tensors: Dict[str, Tensor] = {}
        for name, t in (tensors or {}).items():
            self._register(name, t)

    def _register(self, name: str, t: Tensor) -> Tensor:
        t.requires_grad = True
        t.name = t.name or name
        if t.grad is None or t.grad.shape != t.data.shape:
            t.grad = np.zeros_like(t.data)
        self._tensors[name] = t
        return t

    def add(self, name: str, value: ArrayLike) -> Tensor:
        return self._register(name, Tensor(np.ascontiguousarray(value, dtype=np.float64), requires_grad=True, name=name))

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self) -> List[str]:
        return list(self._tensors)

    def slice(self, prefix: str) -> "ParamSet":
        """View over the tensors under ``prefix.``, sharing storage."""
        head = prefix + "."
        view = ParamSet()
        view._tensors = {k[len(head):]: t for k, t in self._tensors.items() if k.startswith(head)}
        if not view._tensors:
            raise KeyError(f"No parameters under prefix '{prefix}'")
        return view

    @classmethod
    def combine(cls, parts: Dict[str, "ParamSet"]) -> "ParamSet":
        merged = cls()
        merged._tensors = {f"{prefix}.{k}": t for prefix, ps in parts.items() for k, t in ps.items()}
        return merged

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = np.zeros_like(t.data)

    def grads(self) -> Dict[str, np.ndarray]:
        return {k: t.grad.copy() for k, t in self._tensors.items()}

    def state(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def copy(self) -> "ParamSet":
        return ParamSet({k: Tensor(t.data.copy(), requires_grad=True, name=k) for k, t in self._tensors.items()})

    def equals(self, other: "ParamSet") -> bool:
        if self.names() != other.names():
            return False
        return all(np.array_equal(t.data, other[k].data) for k, t in self.items())


def init_affine(params: ParamSet, name: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> ParamSet:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    params.add(f"{name}.weight", rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    params.add(f"{name}.bias", np.zeros(fan_out))
    return params


def sgd_step(params: ParamSet, lr: float) -> ParamSet:
    """theta <- theta - lr * grad on every tensor, then zero the gradients."""
    for name, t in params.items():
        if not np.all(np.isfinite(t.grad)):
            logger.error(f"Non-finite gradient in parameter '{name}', aborting update")
            raise DivergenceError(f"Non-finite gradient in parameter '{name}'")
    for t in params._tensors.values():
        t.data -= lr * t.grad
    params.zero_grad()
    return params


def grad_check(f: Callable[[], Tensor], params: ParamSet, eps: float = 1e-6) -> float:
    """
    Largest relative disagreement between backprop and central differences.

    Args:
        f: builds the scalar loss from the current parameter values.
        params: tensors to perturb, one element at a time.
        eps: finite-difference step.

    Returns:
        max over elements of |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
    """
    if eps <= 0:
        raise DomainError(f"Finite-difference step must be positive, got {eps}")

    params.zero_grad()
    backward(f())
    analytic = params.grads()
    params.zero_grad()

    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f().item()
            flat[i] = orig - eps
            f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a_flat[i] - numeric) / max(1e-12, abs(a_flat[i]) + abs(numeric))
            worst = max(worst, err)
    logger.debug(f"grad_check over {len(params)} tensors: max relative error {worst:.3e}")
    return worst
