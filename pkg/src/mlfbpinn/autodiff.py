"""Differentiation engine.

Two layers work together here:

* :class:`Var` is a node on a reverse-mode tape over numpy arrays.  Every
  operation on a ``Var`` records its parents together with a vector-Jacobian
  product, and :func:`gradients` walks the tape backwards.
* :class:`Jet` carries a truncated Taylor expansion with respect to the input
  coordinates: the value, the first partials and the *diagonal* second
  partials.  Each jet component may be a plain array or a ``Var``, so jets
  built from parameter ``Var`` objects are differentiable end to end.  This is
  what lets a PDE-residual loss be differentiated with respect to the network
  parameters.

Jet derivative channels are stored with a leading axis of length ``d`` (the
input dimension).  ``None`` stands for a channel that is identically zero,
which keeps the first layer of a network cheap (its second derivatives vanish).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Var",
    "Jet",
    "DualValue",
    "UnsupportedPrimitiveError",
    "NonFiniteLossError",
    "gradients",
    "loss_gradient",
    "eval_with_input_derivatives",
    "seed_input",
    "tanh",
    "sin",
    "cos",
    "exp",
    "reciprocal",
    "take",
    "gather_sum",
    "linear",
    "mlp_jet",
    "mean",
]


class UnsupportedPrimitiveError(TypeError):
    """Raised when a traced function uses an operation the engine cannot differentiate."""

    def __init__(self, primitive: str):
        super().__init__(f"unsupported primitive: {primitive}")
        self.primitive = primitive


class NonFiniteLossError(FloatingPointError):
    """Loss or residual evaluated to inf/nan.

    ``index`` is the offending collocation point when it is known.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


# ---------------------------------------------------------------------------
# reverse-mode tape
# ---------------------------------------------------------------------------


class Var:
    """Array-valued node on the reverse-mode tape."""

    __slots__ = ("value", "parents")
    __array_priority__ = 1000

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __add__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return add(self, other)

    def __radd__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return add(other, self)

    def __sub__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return sub(self, other)

    def __rsub__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise UnsupportedPrimitiveError("divide by Var")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return matmul(self, other)

    def __rmatmul__(self, other):
        if isinstance(other, Jet):
            return NotImplemented
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def __abs__(self):
        raise UnsupportedPrimitiveError("absolute")

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None):
        return vsum(self, axis)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            raise UnsupportedPrimitiveError(f"{ufunc.__name__}.{method}")
        fn = _VAR_UFUNCS.get(ufunc.__name__)
        if fn is None:
            raise UnsupportedPrimitiveError(ufunc.__name__)
        return fn(*inputs)


def _val(x):
    return x.value if isinstance(x, Var) else x


def _make(value, links):
    """Wrap ``value`` in a Var when any of the linked parents is on the tape."""
    links = [(p, fn) for p, fn in links if isinstance(p, Var)]
    if not links:
        return value
    return Var(value, links)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _shape(x):
    return np.shape(_val(x))


def add(a, b):
    sa, sb = _shape(a), _shape(b)
    return _make(
        _val(a) + _val(b),
        [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: _unbroadcast(g, sb))],
    )


def sub(a, b):
    sa, sb = _shape(a), _shape(b)
    return _make(
        _val(a) - _val(b),
        [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: _unbroadcast(-g, sb))],
    )


def neg(a):
    return _make(-_val(a), [(a, lambda g: -g)])


def mul(a, b):
    va, vb = _val(a), _val(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _make(
        va * vb,
        [(a, lambda g: _unbroadcast(g * vb, sa)), (b, lambda g: _unbroadcast(g * va, sb))],
    )


def matmul(a, b):
    va, vb = _val(a), _val(b)
    if va.ndim < 2 or vb.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    sa, sb = va.shape, vb.shape
    return _make(
        va @ vb,
        [
            (a, lambda g: _unbroadcast(g @ np.swapaxes(vb, -1, -2), sa)),
            (b, lambda g: _unbroadcast(np.swapaxes(va, -1, -2) @ g, sb)),
        ],
    )


def linear(x, w, b=None):
    """Stacked affine map ``x @ w^T + b`` for a batch of ``J`` small networks.

    ``x`` has shape ``(..., J, P, n_in)``, ``w`` shape ``(J, n_out, n_in)`` and
    ``b`` shape ``(J, n_out)``.  Unlike :func:`matmul` this uses compiled
    kernels with a fixed summation order: every output and gradient entry is
    independent of ``P``, of row positions and of rows that carry an exactly
    zero gradient.  That is what makes restricted (active-subdomain) and
    brute-force evaluation agree to the last bit.
    """
    from . import _kernels as kern

    vx, vw = np.asarray(_val(x), dtype=np.float64), np.asarray(_val(w), dtype=np.float64)
    if vx.ndim < 3 or vw.ndim != 3 or vx.shape[-3] != vw.shape[0] or vx.shape[-1] != vw.shape[-1]:
        raise ValueError(f"linear: input {vx.shape} does not match weights {vw.shape}")
    lead = vx.shape[:-3]
    J, n_out, n_in = vw.shape
    x4 = np.ascontiguousarray(vx.reshape((-1,) + vx.shape[-3:]))
    wc = np.ascontiguousarray(vw)
    bc = np.zeros((J, n_out)) if b is None else np.ascontiguousarray(_val(b), dtype=np.float64)
    out = kern.affine_forward(x4, wc, bc, b is not None).reshape(lead + vx.shape[-3:-1] + (n_out,))

    def g4(g):
        return np.ascontiguousarray(np.reshape(g, (-1,) + g.shape[-3:]))

    return _make(
        out,
        [
            (x, lambda g: kern.affine_input_grad(g4(g), wc).reshape(vx.shape)),
            (w, lambda g: kern.affine_weight_grad(g4(g), x4)),
            (b, lambda g: kern.affine_bias_grad(g4(g))),
        ],
    )


def mlp_jet(params, layer_sizes, x, scale, derivatives: bool = True, counts=None):
    """Fused evaluation of ``J`` stacked tanh networks with input jets.

    ``params`` (array or Var) has shape ``(J, n)``: one flat parameter row per
    network, layer by layer (weight row-major, then bias).  ``x`` holds the
    network inputs ``(J, P, d)``; their first derivatives with respect to the
    physical coordinates are ``diag(scale[j])`` and their second derivatives
    vanish.  Returns an array or Var of shape ``(1 + 2d, J, P)``: the value,
    the ``d`` first partials and the ``d`` diagonal second partials (only the
    value when ``derivatives`` is false).  ``counts[j]`` optionally marks rows
    ``p >= counts[j]`` of network ``j`` as padding (output zero).

    Same numbers as composing :func:`linear` and :func:`tanh` jets (up to
    rounding), in one compiled pass; the gradient is a hand-written
    vector-Jacobian product that recomputes the forward pass point by point.
    Every output entry depends only on its own point, and parameter
    gradients accumulate points in increasing order, skipping points whose
    incoming gradient is exactly zero.
    """
    from . import _kernels as kern

    vp = np.ascontiguousarray(_val(params), dtype=np.float64)
    sizes = np.asarray(layer_sizes, dtype=np.int64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    scale = np.ascontiguousarray(scale, dtype=np.float64)
    if vp.ndim != 2 or x.ndim != 3 or vp.shape[0] != x.shape[0] or x.shape[2] != sizes[0] or sizes[-1] != 1:
        raise ValueError(f"mlp_jet: params {vp.shape}, inputs {x.shape} and sizes {tuple(sizes)} do not match")
    if scale.shape != (x.shape[0], x.shape[2]):
        raise ValueError(f"mlp_jet: scale must have shape {(x.shape[0], x.shape[2])}")
    J, P = x.shape[:2]
    counts = np.full(J, P, dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
    if counts.shape != (J,) or np.any(counts < 0) or np.any(counts > P):
        raise ValueError("mlp_jet: counts must give 0..P valid rows per network")
    out, tcache = kern.mlp_jet_forward(vp, sizes, x, scale, counts, bool(derivatives))

    def back(g):
        return kern.mlp_jet_backward(vp, sizes, x, scale, tcache, np.ascontiguousarray(g))

    return _make(out, [(params, back)])


def swapaxes(a, i, j):
    return _make(np.swapaxes(_val(a), i, j), [(a, lambda g: np.swapaxes(g, i, j))])


def reshape(a, shape):
    s = _shape(a)
    return _make(np.reshape(_val(a), shape), [(a, lambda g: np.reshape(g, s))])


def broadcast_to(a, shape):
    s = _shape(a)
    return _make(np.broadcast_to(_val(a), shape).copy(), [(a, lambda g: _unbroadcast(g, s))])


def vsum(a, axis=None):
    va = _val(a)
    s = va.shape

    def back(g):
        if axis is None:
            return np.broadcast_to(g, s).copy()
        return np.broadcast_to(np.expand_dims(g, axis), s).copy()

    return _make(va.sum(axis=axis), [(a, back)])


def mean(a):
    va = _val(a)
    n = va.size
    s = va.shape
    return _make(np.asarray(va.mean()), [(a, lambda g: np.full(s, g / n))])


def _is_basic(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (slice, int, np.integer)) or k is Ellipsis or k is None for k in keys)


def getitem(a, key):
    va = _val(a)
    s = va.shape
    basic = _is_basic(key)

    def back(g):
        out = np.zeros(s)
        if basic:  # a view: no repeated entries
            out[key] = g
        else:
            np.add.at(out, key, g)
        return out

    return _make(va[key], [(a, back)])


def take(a, index, unique: bool = False):
    """Gather entries of the flattened array ``a`` at integer ``index`` (any shape)."""
    va = _val(a)
    size = va.size
    s = va.shape
    index = np.asarray(index)

    def back(g):
        out = np.zeros(size)
        if unique:
            out[index.ravel()] = g.ravel()
        else:
            np.add.at(out, index.ravel(), g.ravel())
        return out.reshape(s)

    return _make(va.reshape(-1)[index], [(a, back)])


def gather_sum(a, slots, pad: int):
    """Sum slot values into targets along the last axis, in a fixed order.

    ``a`` has shape ``(..., S)``; ``slots`` has shape ``(N, K)`` with entries in
    ``[0, S]`` where ``pad == S`` marks an empty slot.  Output ``(..., N)`` with
    ``out[..., n] = a[..., slots[n, 0]] + a[..., slots[n, 1]] + ...`` summed left
    to right.  Each non-pad slot must appear at most once in ``slots``.
    """
    va = _val(a)
    lead = va.shape[:-1]
    ext = np.concatenate([va, np.zeros(lead + (1,))], axis=-1)
    picked = ext[..., slots]
    out = picked[..., 0].copy()
    for k in range(1, slots.shape[1]):
        out = out + picked[..., k]
    size = va.shape[-1]

    def back(g):
        gext = np.zeros(lead + (size + 1,))
        for k in range(slots.shape[1]):
            gext[..., slots[:, k]] = g
        return gext[..., :size]

    return _make(out, [(a, back)])


def _unary(name):
    def op(a):
        z = _val(a)
        f0, f1, _, _ = _UNARY[name](z)
        return _make(f0, [(a, lambda g: g * f1)])

    op.__name__ = name
    return op


def _tanh_derivs(z):
    t = np.tanh(z)
    s = 1.0 - t * t
    return t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)


def _sin_derivs(z):
    sn, cs = np.sin(z), np.cos(z)
    return sn, cs, -sn, -cs


def _cos_derivs(z):
    sn, cs = np.sin(z), np.cos(z)
    return cs, -sn, -cs, sn


def _exp_derivs(z):
    e = np.exp(z)
    return e, e, e, e


def _recip_derivs(z):
    r = 1.0 / z
    r2 = r * r
    return r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2


# value and first three derivatives of each supported elementwise function
_UNARY: dict[str, Callable] = {
    "tanh": _tanh_derivs,
    "sin": _sin_derivs,
    "cos": _cos_derivs,
    "exp": _exp_derivs,
    "reciprocal": _recip_derivs,
}

_var_tanh = _unary("tanh")
_var_sin = _unary("sin")
_var_cos = _unary("cos")
_var_exp = _unary("exp")
_var_recip = _unary("reciprocal")

_VAR_UFUNCS = {
    "add": add,
    "subtract": sub,
    "multiply": mul,
    "negative": neg,
    "matmul": matmul,
    "tanh": _var_tanh,
    "sin": _var_sin,
    "cos": _var_cos,
    "exp": _var_exp,
    "reciprocal": _var_recip,
    "square": lambda a: mul(a, a),
}


def _topo(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(root: Var, wrt: list[Var]) -> list[np.ndarray]:
    """Reverse sweep from scalar ``root``; returns d(root)/d(v) for each v in ``wrt``."""
    keep = {id(v) for v in wrt}
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(_topo(root)):
        nid = id(node)
        g = grads.get(nid) if nid in keep else grads.pop(nid, None)
        if g is None:
            continue
        for parent, vjp in node.parents:
            pid = id(parent)
            contrib = vjp(g)
            prev = grads.get(pid)
            grads[pid] = contrib if prev is None else prev + contrib
    return [grads.get(id(v), np.zeros_like(v.value)) for v in wrt]


# ---------------------------------------------------------------------------
# forward-mode jets
# ---------------------------------------------------------------------------


def _opt_add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return add(a, b)


def _opt_mul(a, b):
    if a is None or b is None:
        return None
    return mul(a, b)


def _opt_neg(a):
    return None if a is None else neg(a)


def _jet_unary(x: "Jet", name: str) -> "Jet":
    z0 = _val(x.value)
    f0, f1, f2, f3 = _UNARY[name](z0)
    s0 = z0.shape
    z1, z2 = x.d1, x.d2
    z1v = _val(z1)
    z2v = _val(z2)

    y0 = _make(f0, [(x.value, lambda g: g * f1)])
    y1 = y2 = None
    if z1 is not None:
        s1 = z1v.shape
        y1 = _make(
            f1 * z1v,
            [
                (x.value, lambda g: _unbroadcast((g * z1v).sum(axis=0) * f2, s0)),
                (z1, lambda g: _unbroadcast(g * f1, s1)),
            ],
        )
    if z1 is not None or z2 is not None:
        if z1 is not None:
            sq = z1v * z1v
            val2 = f2 * sq
            if z2 is not None:
                val2 = f1 * z2v + val2
        else:
            val2 = f1 * z2v

        def back0(g):
            acc = 0.0
            if z1 is not None:
                acc = (g * sq).sum(axis=0) * f3
            if z2 is not None:
                acc = acc + (g * z2v).sum(axis=0) * f2
            return _unbroadcast(np.broadcast_to(acc, np.broadcast_shapes(np.shape(acc), s0)), s0)

        links = [(x.value, back0)]
        if z1 is not None:
            s1 = z1v.shape
            links.append((z1, lambda g: _unbroadcast(2.0 * f2 * z1v * g, s1)))
        if z2 is not None:
            s2 = z2v.shape
            links.append((z2, lambda g: _unbroadcast(g * f1, s2)))
        y2 = _make(val2, links)
    return Jet(y0, y1, y2)


_JET_UFUNCS = {
    "tanh": lambda a: _jet_unary(_as_jet(a), "tanh"),
    "sin": lambda a: _jet_unary(_as_jet(a), "sin"),
    "cos": lambda a: _jet_unary(_as_jet(a), "cos"),
    "exp": lambda a: _jet_unary(_as_jet(a), "exp"),
    "reciprocal": lambda a: _jet_unary(_as_jet(a), "reciprocal"),
    "add": lambda a, b: _as_jet(a) + b,
    "subtract": lambda a, b: _as_jet(a) - b,
    "multiply": lambda a, b: _as_jet(a) * b,
    "true_divide": lambda a, b: _as_jet(a) / b,
    "negative": lambda a: -_as_jet(a),
    "positive": lambda a: a,
    "square": lambda a: _as_jet(a) * a,
    "matmul": lambda a, b: _as_jet(a) @ b,
}


def _as_jet(x) -> "Jet":
    return x if isinstance(x, Jet) else Jet(x)


class Jet:
    """Second-order diagonal Taylor jet with respect to the input coordinates.

    Attributes
    ----------
    value : array or Var, shape ``S``
    d1 : array, Var or None, shape broadcastable to ``(d, *S)``
        First partials, one slice per input coordinate.
    d2 : array, Var or None, shape broadcastable to ``(d, *S)``
        Diagonal second partials.
    """

    __slots__ = ("value", "d1", "d2")

    def __init__(self, value, d1=None, d2=None):
        if not isinstance(value, Var):
            value = np.asarray(value, dtype=np.float64)
        self.value = value
        self.d1 = d1
        self.d2 = d2

    def __repr__(self):
        return f"Jet(shape={_shape(self.value)})"

    @property
    def shape(self):
        return _shape(self.value)

    def laplacian(self):
        """Sum of the diagonal second partials (zero if the channel is absent)."""
        if self.d2 is None:
            return np.zeros(self.shape)
        return vsum(self.d2, axis=0)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(add(self.value, other.value), _opt_add(self.d1, other.d1), _opt_add(self.d2, other.d2))
        return Jet(add(self.value, other), self.d1, self.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet(neg(self.value), _opt_neg(self.d1), _opt_neg(self.d2))

    def __sub__(self, other):
        return self + (-_as_jet(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(mul(self.value, other), _opt_mul(self.d1, other), _opt_mul(self.d2, other))
        a0, a1, a2 = self.value, self.d1, self.d2
        b0, b1, b2 = other.value, other.d1, other.d2
        d1 = _opt_add(_opt_mul(a1, b0), _opt_mul(a0, b1))
        cross = _opt_mul(a1, b1)
        if cross is not None:
            cross = mul(cross, 2.0)
        d2 = _opt_add(_opt_add(_opt_mul(a2, b0), cross), _opt_mul(a0, b2))
        return Jet(mul(a0, b0), d1, d2)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * _jet_unary(other, "reciprocal")
        if isinstance(other, Var):
            raise UnsupportedPrimitiveError("divide by Var")
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return _jet_unary(self, "reciprocal") * other

    def __matmul__(self, other):
        """Apply a linear map on the right to every channel."""
        return Jet(
            matmul(self.value, other),
            None if self.d1 is None else matmul(self.d1, other),
            None if self.d2 is None else matmul(self.d2, other),
        )

    def __getitem__(self, key):
        key = key if isinstance(key, tuple) else (key,)
        dkey = (slice(None),) + key
        return Jet(
            getitem(self.value, key),
            None if self.d1 is None else getitem(self.d1, dkey),
            None if self.d2 is None else getitem(self.d2, dkey),
        )

    def __abs__(self):
        raise UnsupportedPrimitiveError("absolute")

    def __pow__(self, p):
        if p == 2:
            return self * self
        raise UnsupportedPrimitiveError("power")

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            raise UnsupportedPrimitiveError(f"{ufunc.__name__}.{method}")
        fn = _JET_UFUNCS.get(ufunc.__name__)
        if fn is None:
            raise UnsupportedPrimitiveError(ufunc.__name__)
        if len(inputs) == 2 and not isinstance(inputs[0], Jet):
            # reflected binary op, e.g. ndarray * Jet
            a, b = inputs
            if ufunc.__name__ == "subtract":
                return (-inputs[1]) + a
            if ufunc.__name__ == "true_divide":
                return b.__rtruediv__(a)
            if ufunc.__name__ == "matmul":
                raise UnsupportedPrimitiveError("left matmul on Jet")
            return fn(b, a)
        return fn(*inputs)


def tanh(x):
    return np.tanh(x) if not isinstance(x, (Jet, Var)) else x.__array_ufunc__(np.tanh, "__call__", x)


def sin(x):
    return np.sin(x) if not isinstance(x, (Jet, Var)) else x.__array_ufunc__(np.sin, "__call__", x)


def cos(x):
    return np.cos(x) if not isinstance(x, (Jet, Var)) else x.__array_ufunc__(np.cos, "__call__", x)


def exp(x):
    return np.exp(x) if not isinstance(x, (Jet, Var)) else x.__array_ufunc__(np.exp, "__call__", x)


def reciprocal(x):
    if isinstance(x, Jet):
        return _jet_unary(x, "reciprocal")
    if isinstance(x, Var):
        return _var_recip(x)
    return 1.0 / np.asarray(x, dtype=np.float64)


def seed_input(points) -> Jet:
    """Jet for the identity map on a batch of points of shape ``(n, d)``."""
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    d1 = np.broadcast_to(np.eye(d)[:, None, :], (d, n, d)).copy()
    return Jet(points, d1, None)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


@dataclass
class DualValue:
    """Value, first partials and diagonal second partials of a scalar field."""

    value: float | np.ndarray
    input_partials: np.ndarray
    input_second_partials: np.ndarray


def _channel(c, d, shape):
    if c is None:
        return np.zeros((d,) + shape)
    return np.broadcast_to(_val(c), (d,) + shape).copy()


def eval_with_input_derivatives(f, params, x) -> DualValue:
    """Evaluate ``f(params, x_jet)`` with exact input derivatives.

    ``x`` is a single point of shape ``(d,)`` or a batch ``(n, d)``.  ``f``
    must be built from jet-compatible operations (affine maps, sums,
    products, tanh, sin, cos, exp); anything else raises
    :class:`UnsupportedPrimitiveError` while ``f`` is being traced.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    n, d = pts.shape
    out = f(params, seed_input(pts))
    if not isinstance(out, Jet):
        out = Jet(np.broadcast_to(np.asarray(out, dtype=np.float64), (n,)))
    value = np.asarray(_val(out.value), dtype=np.float64)
    if value.shape == (n, 1):
        out = out[:, 0]
        value = np.asarray(_val(out.value))
    value = np.broadcast_to(value, (n,)).copy()
    g1 = _channel(out.d1, d, (n,)).T
    g2 = _channel(out.d2, d, (n,)).T
    if single:
        return DualValue(float(value[0]), g1[0].copy(), g2[0].copy())
    return DualValue(value, g1, g2)


def loss_gradient(loss: Callable[[Var], Var], params) -> tuple[float, np.ndarray]:
    """Evaluate ``loss(theta)`` and its gradient with respect to the flat vector ``theta``.

    The gradient array follows the ordering of ``params``.
    """
    theta = Var(np.array(params, dtype=np.float64, copy=True).reshape(-1))
    out = loss(theta)
    if not isinstance(out, Var):
        value = float(np.asarray(out))
        if not np.isfinite(value):
            raise NonFiniteLossError(f"loss is not finite: {value}")
        return value, np.zeros_like(theta.value)
    value = float(out.value)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"loss is not finite: {value}")
    (grad,) = gradients(out, [theta])
    return value, grad
