"""Windowed sums of subdomain networks, hard constraints and checkpoints.

The solution at a point is

    u(x) = (1/L) * sum_l sum_j  w_lj(x) * v_lj(normalize_lj(x))

where ``w_lj`` are the partition-of-unity windows of level ``l`` and ``v_lj``
the subdomain networks.  A plain PINN is the special case of one level with
one subdomain spanning the domain.

Parameters of all networks live in one flat vector (``ModelSpec.theta``),
ordered level by level, subdomain by subdomain, layer by layer with each
weight matrix (row-major) followed by its bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, Var
from .decomposition import (
    ActiveMap,
    Decomposition,
    build_active_map,
    build_decomposition,
    build_levels,
    full_active_map,
    global_decomposition,
    raw_window_jet,
)
from .network import NetworkParams, fcn_jet, init_fcn, param_count

__all__ = [
    "KINDS",
    "ConstraintOp",
    "dirichlet_box",
    "ModelSpec",
    "Plan",
    "make_model",
    "multilevel_model",
    "one_level_model",
    "pinn_model",
    "raw_solution",
    "constrained_solution",
    "solution_jet",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]

KINDS = ("multilevel-fbpinn", "one-level-fbpinn", "pinn")


@dataclass(frozen=True)
class ConstraintOp:
    """Product of ``tanh(direction * (x[dim] - location) / sharpness)`` factors.

    Each factor vanishes on the hyperplane ``x[dim] == location`` and has the
    sign of ``direction`` on the interior side.
    """

    factors: tuple[tuple[int, float, float, int], ...] = ()

    def __post_init__(self):
        for dim, loc, sharp, direction in self.factors:
            if sharp <= 0:
                raise ValueError(f"constraint sharpness must be positive, got {sharp}")
            if direction not in (-1, 1):
                raise ValueError("constraint direction must be +1 or -1")

    def jet(self, points, derivatives: bool = True) -> Jet:
        pts = np.asarray(points, dtype=np.float64)
        n = pts.shape[0]
        x = ad.seed_input(pts) if derivatives else Jet(pts)
        out = Jet(np.ones(n))
        for dim, loc, sharp, direction in self.factors:
            out = out * ad.tanh((x[:, dim] - loc) * (direction / sharp))
        return out

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=np.float64)
        out = np.ones(x.shape[:-1])
        for dim, loc, sharp, direction in self.factors:
            out = out * np.tanh((x[..., dim] - loc) * (direction / sharp))
        return float(out) if out.ndim == 0 else out

    def descriptor(self) -> str:
        return ";".join(f"{d}:{loc!r}:{s!r}:{di:+d}" for d, loc, s, di in self.factors)

    @classmethod
    def parse(cls, text: str) -> "ConstraintOp":
        factors = []
        for part in filter(None, text.strip().split(";")):
            d, loc, s, di = part.split(":")
            factors.append((int(d), float(loc), float(s), int(di)))
        return cls(tuple(factors))


def dirichlet_box(domain, sharpness: float) -> ConstraintOp:
    """Vanish on every face of a box domain."""
    dom = np.asarray(domain, dtype=np.float64).reshape(-1, 2)
    factors = []
    for i, (lo, hi) in enumerate(dom):
        factors.append((i, float(lo), float(sharpness), 1))
        factors.append((i, float(hi), float(sharpness), -1))
    return ConstraintOp(tuple(factors))


@dataclass
class ModelSpec:
    kind: str
    decomposition: Decomposition
    layer_sizes: tuple[int, ...]
    theta: np.ndarray
    constraint: ConstraintOp = field(default_factory=ConstraintOp)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if self.layer_sizes[0] != self.decomposition.dim or self.layer_sizes[-1] != 1:
            raise ValueError(
                f"layer sizes {self.layer_sizes} must start with the input dimension "
                f"{self.decomposition.dim} and end with 1"
            )
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.size != self.n_params:
            raise ValueError(f"theta has {self.theta.size} entries, expected {self.n_params}")

    @property
    def n_levels(self) -> int:
        return self.decomposition.n_levels

    @property
    def n_nets(self) -> int:
        return sum(self.decomposition.counts)

    @property
    def params_per_net(self) -> int:
        return param_count(self.layer_sizes)

    @property
    def n_params(self) -> int:
        return self.n_nets * self.params_per_net

    def with_theta(self, theta) -> "ModelSpec":
        return replace(self, theta=np.array(theta, dtype=np.float64))

    def net(self, l: int, j: int) -> NetworkParams:
        """Parameters of subdomain network ``j`` on level ``l`` (both 1-based)."""
        k = self.params_per_net
        start = (sum(self.decomposition.counts[: l - 1]) + j - 1) * k
        return NetworkParams.from_flat(self.layer_sizes, self.theta[start : start + k])

    def level_params(self, theta=None):
        """Per level, the ``(J, params_per_net)`` block of ``theta`` (array or tape variable)."""
        theta = self.theta if theta is None else theta
        k = self.params_per_net
        out, base = [], 0
        for J in self.decomposition.counts:
            out.append(ad.reshape(ad.getitem(theta, slice(base, base + J * k)), (J, k)))
            base += J * k
        return out


def make_model(kind: str, decomposition: Decomposition, layer_sizes, seed: int = 0,
               constraint: ConstraintOp | None = None) -> ModelSpec:
    """Initialize every subdomain network from a single seeded stream, in parameter order."""
    rng = np.random.default_rng(seed)
    parts = []
    for J in decomposition.counts:
        for _ in range(J):
            parts.append(init_fcn(layer_sizes, rng=rng).flatten())
    theta = np.concatenate(parts)
    return ModelSpec(kind, decomposition, tuple(layer_sizes), theta, constraint or ConstraintOp())


def _sizes(dim: int, hidden) -> list[int]:
    hidden = [hidden] if np.isscalar(hidden) else list(hidden)
    return [dim] + [int(h) for h in hidden] + [1]


def multilevel_model(domain, levels, delta: float = 1.9, hidden=16, seed: int = 0,
                     constraint: ConstraintOp | None = None) -> ModelSpec:
    """``levels`` is either L (default ``2**(l-1)`` per dimension) or a list of per-dimension counts."""
    if np.isscalar(levels):
        dec = build_levels(domain, int(levels), delta)
    else:
        dec = build_decomposition(domain, levels, delta)
    return make_model("multilevel-fbpinn", dec, _sizes(dec.dim, hidden), seed, constraint)


def one_level_model(domain, per_dim: int, delta: float = 1.9, hidden=16, seed: int = 0,
                    constraint: ConstraintOp | None = None) -> ModelSpec:
    dec = build_decomposition(domain, [per_dim], delta)
    return make_model("one-level-fbpinn", dec, _sizes(dec.dim, hidden), seed, constraint)


def pinn_model(domain, hidden=(64, 64, 64), seed: int = 0, constraint: ConstraintOp | None = None) -> ModelSpec:
    dec = global_decomposition(domain)
    return make_model("pinn", dec, _sizes(dec.dim, hidden), seed, constraint)


# ---------------------------------------------------------------------------
# batched evaluation
# ---------------------------------------------------------------------------


def _jet_reshape(j: Jet, shape) -> Jet:
    def chan(c):
        if c is None:
            return None
        d = ad._val(c).shape[0]
        full = (d,) + ad._shape(j.value)
        if ad._val(c).shape != full:
            c = ad.broadcast_to(c, full)
        return ad.reshape(c, (d,) + tuple(shape))

    return Jet(ad.reshape(j.value, shape), chan(j.d1), chan(j.d2))


def _jet_gather_sum(j: Jet, slots, pad) -> Jet:
    def chan(c):
        return None if c is None else ad.gather_sum(c, slots, pad)

    return Jet(ad.gather_sum(j.value, slots, pad), chan(j.d1), chan(j.d2))


class Plan:
    """Everything about a point set that does not depend on the parameters.

    Holds, per level, the padded subdomain batches from an :class:`ActiveMap`,
    the normalized network inputs (as jets when ``derivatives`` is set) and
    the normalized window values at every (subdomain, point) pair.
    """

    def __init__(self, decomposition: Decomposition, points, active_map: ActiveMap | None = None,
                 derivatives: bool = True):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, decomposition.dim)
        if active_map is None:
            active_map = build_active_map(decomposition, pts)
        if active_map.n_points != pts.shape[0] or len(active_map.layouts) != decomposition.n_levels:
            raise ValueError("active map does not match the decomposition / point set")
        self.decomposition = decomposition
        self.points = pts
        self.active_map = active_map
        self.derivatives = derivatives
        self.levels = [self._level(lv, lay) for lv, lay in zip(decomposition.levels, active_map.layouts)]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def _level(self, lv, lay):
        d = self.decomposition.dim
        J, P = lay.index.shape
        if J != lv.n_subdomains:
            raise ValueError("active map does not match the decomposition")
        x = self.points[lay.index]  # (J, P, d)
        c = lv.centers[:, None, :]
        h = lv.half_widths[:, None, :]
        xn = (x - c) / h
        xj = Jet(x, np.eye(d).reshape(d, 1, 1, d), None) if self.derivatives else Jet(x)
        if lv.windowed:
            inside = lay.valid & np.all(np.abs(x - c) < h, axis=-1)
            raw = raw_window_jet(c, h, xj, inside)
            flat = _jet_reshape(raw, (J * P,))
            den = _jet_gather_sum(flat, lay.slots, lay.pad_slot)
            if np.any(den.value <= 0.0):
                raise ValueError("window normalization is zero: point outside the covered region")
            inv = ad.reciprocal(den)
            window = raw * inv[lay.index]
        else:
            window = Jet(np.where(lay.valid, 1.0, 0.0))
        return _LevelPlan(xn, 1.0 / lv.half_widths, window, lay)


class _LevelPlan:
    __slots__ = ("inputs", "scale", "window", "layout")

    def __init__(self, inputs, scale, window, layout):
        self.inputs = inputs  # normalized network inputs (J, P, d)
        self.scale = scale  # d(normalized input)/dx per subdomain (J, d)
        self.window = window  # normalized window jet (J, P)
        self.layout = layout

    def input_jet(self, derivatives: bool) -> Jet:
        if not derivatives:
            return Jet(self.inputs)
        J, P, d = self.inputs.shape
        d1 = np.broadcast_to(np.eye(d)[:, None, None, :] * self.scale[None, :, None, :], (d, J, P, d)).copy()
        return Jet(self.inputs, d1, None)


def _subdomain_outputs(m: ModelSpec, lp: _LevelPlan, params, derivatives: bool, fused: bool) -> Jet:
    """Jet of every subdomain network at its own points, shape ``(J, P)``."""
    J, P = lp.layout.index.shape
    if fused:
        out = ad.mlp_jet(params, m.layer_sizes, lp.inputs, lp.scale, derivatives, lp.layout.valid.sum(axis=1))
        if not derivatives:
            return Jet(out[0])
        d = m.decomposition.dim
        return Jet(out[0], out[1 : 1 + d], out[1 + d :])
    ws, bs = _unflatten_stack(m, params)
    v = fcn_jet(ws, bs, lp.input_jet(derivatives))
    return _jet_reshape(v, (J, P))


def _unflatten_stack(m: ModelSpec, params):
    """Split ``(J, n)`` parameter rows into stacked weights ``(J, out, in)`` and biases ``(J, out)``."""
    J = ad._shape(params)[0]
    ws, bs, off = [], [], 0
    for i, o in zip(m.layer_sizes[:-1], m.layer_sizes[1:]):
        ws.append(ad.reshape(ad.getitem(params, (slice(None), slice(off, off + o * i))), (J, o, i)))
        off += o * i
        bs.append(ad.getitem(params, (slice(None), slice(off, off + o))))
        off += o
    return ws, bs


def solution_jet(m: ModelSpec, plan: Plan, theta=None, fused: bool = True) -> Jet:
    """Unconstrained multilevel solution at the plan's points, shape ``(N,)``.

    ``theta`` may be a tape variable (for training) or an array; it defaults
    to ``m.theta``.  ``fused=False`` evaluates the subdomain networks through
    the composite jet operations instead of the compiled fused kernel.
    """
    if plan.decomposition is not m.decomposition and plan.decomposition.counts != m.decomposition.counts:
        raise ValueError("plan was built for a different decomposition")
    theta = m.theta if theta is None else theta
    total = None
    for params, lp in zip(m.level_params(theta), plan.levels):
        J, P = lp.layout.index.shape
        v = _subdomain_outputs(m, lp, params, plan.derivatives, fused)
        wv = _jet_reshape(lp.window * v, (J * P,))
        u = _jet_gather_sum(wv, lp.layout.slots, lp.layout.pad_slot)
        total = u if total is None else total + u
    return total * (1.0 / m.n_levels)


def predict(m: ModelSpec, points, constraint: ConstraintOp | None = None, chunk: int = 16384) -> np.ndarray:
    """Values of the (optionally constrained) solution at many points, in chunks."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, m.decomposition.dim)
    out = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], chunk):
        block = pts[s : s + chunk]
        plan = Plan(m.decomposition, block, derivatives=False)
        u = np.asarray(solution_jet(m, plan).value)
        if constraint is not None:
            u = constraint(block) * u
        out[s : s + chunk] = u
    return out


def _check_entry(m: ModelSpec, x, entry):
    dec = m.decomposition
    for l, j in entry:
        if not (1 <= l <= dec.n_levels and 1 <= j <= dec.counts[l - 1]):
            raise ValueError(f"active entry ({l}, {j}) does not exist in this decomposition")
    expected = build_active_map(dec, x[None]).entry(0)
    if sorted(entry) != expected:
        raise ValueError(f"active entry {sorted(entry)} does not match the decomposition ({expected})")


def raw_solution(m: ModelSpec, x, entry=None) -> float:
    """Unconstrained solution at a single point.

    ``entry`` is the list of active ``(level, j)`` pairs for ``x``; it is
    checked against the decomposition when given.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if entry is not None:
        _check_entry(m, x, entry)
    plan = Plan(m.decomposition, x[None], derivatives=False)
    return float(np.asarray(solution_jet(m, plan).value)[0])


def constrained_solution(m: ModelSpec, p, x, entry=None) -> float:
    """``constraint(x) * raw_solution(x)`` with the constraint of problem ``p``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return float(p.constraint(x)) * raw_solution(m, x, entry)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def save_checkpoint(m: ModelSpec, path) -> None:
    dec = m.decomposition
    dom = ";".join(f"{_fmt(a)},{_fmt(b)}" for a, b in dec.domain)
    lines = [
        "# mlfbpinn checkpoint",
        f"kind={m.kind}",
        f"L={dec.n_levels}",
        f"d={dec.dim}",
        f"delta={_fmt(dec.delta)}",
        f"domain={dom}",
        f"levels={','.join(str(c) for c in dec.per_dim_counts)}",
        f"layer_sizes={','.join(str(s) for s in m.layer_sizes)}",
        f"constraint={m.constraint.descriptor()}",
        f"n_params={m.n_params}",
        "---",
    ]
    lines.extend(_fmt(v) for v in m.theta)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelSpec:
    text = Path(path).read_text().splitlines()
    sep = text.index("---")
    header = dict(line.split("=", 1) for line in text[1:sep])
    theta = np.array([float(v) for v in text[sep + 1 :] if v.strip()])
    domain = [[float(a) for a in part.split(",")] for part in header["domain"].split(";")]
    kind = header["kind"]
    if kind == "pinn":
        dec = global_decomposition(domain)
    else:
        dec = build_decomposition(domain, [int(c) for c in header["levels"].split(",")], float(header["delta"]))
    sizes = tuple(int(s) for s in header["layer_sizes"].split(","))
    m = ModelSpec(kind, dec, sizes, theta, ConstraintOp.parse(header["constraint"]))
    if m.n_params != int(header["n_params"]):
        raise ValueError("checkpoint parameter count does not match its header")
    return m
