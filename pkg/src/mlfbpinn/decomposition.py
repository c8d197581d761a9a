"""Multilevel uniform rectangular overlapping decompositions and their windows.

Levels and subdomains are numbered from 1 in the public functions, matching
the usual ``(l, j)`` notation.  Internally everything is 0-based arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .autodiff import Jet, cos, seed_input

__all__ = [
    "Subdomain",
    "Level",
    "Decomposition",
    "ActiveMap",
    "LevelLayout",
    "build_levels",
    "build_decomposition",
    "global_decomposition",
    "raw_window",
    "raw_window_jet",
    "pou_window",
    "pou_windows",
    "pou_window_jet",
    "build_active_map",
    "full_active_map",
    "normalize_input",
]


@dataclass(frozen=True)
class Subdomain:
    level: int
    index: int
    center: np.ndarray
    half_width: np.ndarray
    windowed: bool = True

    @property
    def box(self) -> np.ndarray:
        """``(d, 2)`` array of lower/upper bounds; may stick out of the domain."""
        return np.stack([self.center - self.half_width, self.center + self.half_width], axis=1)


@dataclass(frozen=True)
class Level:
    """One decomposition level.

    ``centers`` and ``half_widths`` have shape ``(J, d)``.  Subdomains are
    enumerated row-major over their per-dimension indices (last dimension
    fastest), the same ordering as the collocation grids.
    """

    centers: np.ndarray
    half_widths: np.ndarray
    per_dim: int

    @property
    def n_subdomains(self) -> int:
        return self.centers.shape[0]

    @property
    def windowed(self) -> bool:
        # a single-subdomain level uses the constant window 1
        return self.n_subdomains > 1


@dataclass(frozen=True)
class Decomposition:
    domain: np.ndarray  # (d, 2)
    levels: tuple[Level, ...]
    delta: float

    @property
    def dim(self) -> int:
        return self.domain.shape[0]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def counts(self) -> list[int]:
        return [lv.n_subdomains for lv in self.levels]

    @property
    def per_dim_counts(self) -> list[int]:
        return [lv.per_dim for lv in self.levels]

    def subdomain(self, l: int, j: int) -> Subdomain:
        lv = self.levels[l - 1]
        return Subdomain(l, j, lv.centers[j - 1], lv.half_widths[j - 1], lv.windowed)

    def subdomains(self, l: int) -> list[Subdomain]:
        return [self.subdomain(l, j) for j in range(1, self.levels[l - 1].n_subdomains + 1)]

    def summary_csv(self) -> str:
        """Text table ``level,j,mu_1..mu_d,sigma_1..sigma_d`` for plotting."""
        d = self.dim
        head = ["level", "j"] + [f"mu_{i + 1}" for i in range(d)] + [f"sigma_{i + 1}" for i in range(d)]
        lines = [",".join(head)]
        for l, lv in enumerate(self.levels, start=1):
            for j in range(lv.n_subdomains):
                vals = [repr(float(v)) for v in lv.centers[j]] + [repr(float(v)) for v in lv.half_widths[j]]
                lines.append(",".join([str(l), str(j + 1)] + vals))
        return "\n".join(lines) + "\n"


def _as_domain(domain) -> np.ndarray:
    dom = np.asarray(domain, dtype=np.float64)
    if dom.ndim == 1:
        dom = dom.reshape(1, 2)
    if dom.ndim != 2 or dom.shape[1] != 2 or np.any(dom[:, 1] <= dom[:, 0]):
        raise ValueError(f"domain must be a (d, 2) array of increasing bounds, got {domain!r}")
    return dom


def _make_level(dom: np.ndarray, n: int, delta: float) -> Level:
    lo, ext = dom[:, 0], dom[:, 1] - dom[:, 0]
    d = dom.shape[0]
    if n == 1:
        centers_1d = [np.array([0.5])]
        hw = delta / 2.0
    else:
        centers_1d = [np.arange(n) / (n - 1)]
        hw = (delta / 2.0) / (n - 1)
    grids = [c for c in itertools.product(*(centers_1d * d))]
    unit = np.array(grids, dtype=np.float64).reshape(-1, d)
    centers = lo + unit * ext
    half_widths = np.broadcast_to(hw * ext, centers.shape).copy()
    return Level(centers, half_widths, n)


def _check_coverage(dec: Decomposition, samples: int = 65) -> None:
    d = dec.dim
    axes = [np.linspace(a, b, samples) for a, b in dec.domain]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    for l, lv in enumerate(dec.levels, start=1):
        if not lv.windowed:
            continue
        inside = np.ones((pts.shape[0],), dtype=bool)
        covered = np.zeros((pts.shape[0],), dtype=bool)
        for j in range(lv.n_subdomains):
            inside = np.all(np.abs(pts - lv.centers[j]) < lv.half_widths[j], axis=1)
            covered |= inside
        if not covered.all():
            raise ValueError(f"level {l} does not cover the domain (d={d}); increase the overlap ratio")


def build_decomposition(domain, per_dim_counts, delta: float) -> Decomposition:
    """Levels with the given number of subdomains along each dimension.

    A level with one subdomain per dimension is centered on the domain with
    half-width ``delta/2`` (relative to the domain extent); otherwise centers
    sit at ``(j-1)/(n-1)`` and half-widths are ``(delta/2)/(n-1)``.
    """
    dom = _as_domain(domain)
    counts = [int(c) for c in per_dim_counts]
    if not counts:
        raise ValueError("need at least one level")
    if any(c < 1 for c in counts):
        raise ValueError(f"subdomain counts must be >= 1, got {counts}")
    delta = float(delta)
    if delta <= 1.0:
        raise ValueError(f"non-overlapping decomposition: overlap ratio {delta} must exceed 1")
    dec = Decomposition(dom, tuple(_make_level(dom, n, delta) for n in counts), delta)
    _check_coverage(dec)
    return dec


def build_levels(domain, L: int, delta: float) -> Decomposition:
    """``L`` levels with ``2**(l-1)`` subdomains per dimension on level ``l``."""
    if int(L) < 1:
        raise ValueError(f"number of levels must be >= 1, got {L}")
    return build_decomposition(domain, [2 ** (l - 1) for l in range(1, int(L) + 1)], delta)


def global_decomposition(domain) -> Decomposition:
    """Single subdomain spanning exactly the domain (plain PINN normalization)."""
    dom = _as_domain(domain)
    lv = _make_level(dom, 1, 1.0)
    return Decomposition(dom, (lv,), 1.0)


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------


def _window_factors(x, center, half_width):
    """``prod_i (1 + cos(pi (x_i - mu_i) / sigma_i))**2`` without the support mask."""
    u = (x - center) * (np.pi / half_width)
    g = np.cos(u) + 1.0
    g = g * g
    out = g[..., 0]
    for i in range(1, g.shape[-1]):
        out = out * g[..., i]
    return out


def raw_window(s: Subdomain, x) -> float | np.ndarray:
    """Unnormalized window; exactly zero on and outside the subdomain box."""
    x = np.asarray(x, dtype=np.float64)
    if not s.windowed:
        out = np.ones(x.shape[:-1])
    else:
        inside = np.all(np.abs(x - s.center) < s.half_width, axis=-1)
        out = np.where(inside, _window_factors(x, s.center, s.half_width), 0.0)
    return float(out) if out.ndim == 0 else out


def raw_window_jet(centers, half_widths, x_jet: Jet, inside) -> Jet:
    """Window jets for stacked subdomains.

    ``x_jet`` has value shape ``(..., P, d)``; ``centers``/``half_widths`` have
    shape ``(..., 1, d)``; ``inside`` is the boolean support mask ``(..., P)``.
    Returns a jet of value shape ``(..., P)`` with every channel zeroed outside
    the support.
    """
    d = x_jet.shape[-1]
    u = (x_jet - centers) * (np.pi / half_widths)
    g = cos(u) + 1.0
    g = g * g
    out = g[..., 0]
    for i in range(1, d):
        out = out * g[..., i]
    return Jet(
        np.where(inside, out.value, 0.0),
        None if out.d1 is None else np.where(inside, out.d1, 0.0),
        None if out.d2 is None else np.where(inside, out.d2, 0.0),
    )


def pou_window(dec: Decomposition, l: int, j: int, x) -> float | np.ndarray:
    """Normalized window of subdomain ``j`` on level ``l``; sums to 1 over ``j``."""
    x = np.asarray(x, dtype=np.float64)
    lv = dec.levels[l - 1]
    if not lv.windowed:
        out = np.ones(x.shape[:-1])
        return float(out) if out.ndim == 0 else out
    num = None
    den = 0.0
    for s in dec.subdomains(l):
        w = np.asarray(raw_window(s, x))
        den = den + w
        if s.index == j:
            num = w
    den = np.asarray(den)
    if np.any(den <= 0.0):
        raise ValueError("window normalization is zero: point outside the covered region")
    out = num / den
    return float(out) if out.ndim == 0 else out


def pou_windows(dec: Decomposition, l: int, x) -> np.ndarray:
    """Normalized windows of every subdomain on level ``l``: shape ``(J, n)`` for points ``(n, d)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, dec.dim)
    lv = dec.levels[l - 1]
    if not lv.windowed:
        return np.ones((1, x.shape[0]))
    raw = np.stack([raw_window(s, x) for s in dec.subdomains(l)])
    den = raw.sum(axis=0)
    if np.any(den <= 0.0):
        raise ValueError("window normalization is zero: point outside the covered region")
    return raw / den


def pou_window_jet(dec: Decomposition, l: int, x) -> Jet:
    """Normalized windows of every subdomain on a level, with input derivatives.

    Dense evaluation: returns a jet of value shape ``(J, n)`` for points ``(n, d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    lv = dec.levels[l - 1]
    n = x.shape[0]
    if not lv.windowed:
        return Jet(np.ones((1, n)))
    xj = seed_input(x)
    xj = Jet(xj.value[None], xj.d1[:, None], None)
    inside = np.all(np.abs(x[None] - lv.centers[:, None]) < lv.half_widths[:, None], axis=-1)
    raw = raw_window_jet(lv.centers[:, None], lv.half_widths[:, None], xj, inside)
    # keep a leading axis so the jet channels broadcast against (J, n)
    den = raw[0:1]
    for k in range(1, lv.n_subdomains):
        den = den + raw[k : k + 1]
    if np.any(den.value <= 0.0):
        raise ValueError("window normalization is zero: point outside the covered region")
    return raw * (1.0 / den)


def normalize_input(s: Subdomain, x) -> np.ndarray:
    """Map the subdomain box onto ``[-1, 1]^d``."""
    return (np.asarray(x, dtype=np.float64) - s.center) / s.half_width


# ---------------------------------------------------------------------------
# point -> subdomain maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelLayout:
    """Padded per-subdomain batches for one level.

    ``members[j]`` lists the points handled by subdomain ``j`` (ascending).
    ``index`` is the ``(J, P)`` padded version (pads repeat the first member,
    or point 0 when empty) and ``valid`` marks real entries.  ``slots`` is
    ``(N, K)``: for every point the flat positions ``j * P + p`` of its
    entries in subdomain order, padded with ``J * P``.
    """

    members: tuple[np.ndarray, ...]
    index: np.ndarray
    valid: np.ndarray
    slots: np.ndarray

    @property
    def pad_slot(self) -> int:
        return self.index.size


@dataclass(frozen=True)
class ActiveMap:
    """For each point, the subdomains whose open box contains it."""

    n_points: int
    layouts: tuple[LevelLayout, ...]

    def entry(self, i: int) -> list[tuple[int, int]]:
        """``(level, j)`` pairs (1-based) active at point ``i``."""
        out = []
        for l, lay in enumerate(self.layouts, start=1):
            P = lay.index.shape[1]
            for s in lay.slots[i]:
                if s != lay.pad_slot:
                    out.append((l, int(s // P) + 1))
        return out

    def entries(self) -> list[list[tuple[int, int]]]:
        return [self.entry(i) for i in range(self.n_points)]


def _layout(members: list[np.ndarray], n_points: int) -> LevelLayout:
    J = len(members)
    P = max(1, max(len(m) for m in members))
    index = np.zeros((J, P), dtype=np.int64)
    valid = np.zeros((J, P), dtype=bool)
    counts = np.zeros(n_points, dtype=np.int64)
    for j, m in enumerate(members):
        index[j, : len(m)] = m
        if len(m):
            index[j, len(m) :] = m[0]
        valid[j, : len(m)] = True
        counts[m] += 1
    K = max(1, int(counts.max()) if n_points else 1)
    slots = np.full((n_points, K), J * P, dtype=np.int64)
    fill = np.zeros(n_points, dtype=np.int64)
    for j, m in enumerate(members):
        slots[m, fill[m]] = j * P + np.arange(len(m))
        fill[m] += 1
    return LevelLayout(tuple(members), index, valid, slots)


def _inside_level(lv: Level, points: np.ndarray) -> list[np.ndarray]:
    if not lv.windowed:
        return [np.arange(points.shape[0])]
    d = points.shape[1]
    n = lv.per_dim
    # per-dimension membership, then combine over the row-major multi-index
    per_dim = []
    for i in range(d):
        c = lv.centers[:, i].reshape([n] * d)
        c1 = np.moveaxis(c, i, 0).reshape(n, -1)[:, 0]
        h1 = lv.half_widths[0, i]
        per_dim.append(np.abs(points[:, i][:, None] - c1[None, :]) < h1)
    members = []
    for multi in itertools.product(range(n), repeat=d):
        mask = per_dim[0][:, multi[0]].copy()
        for i in range(1, d):
            mask &= per_dim[i][:, multi[i]]
        members.append(np.flatnonzero(mask))
    return members


def build_active_map(dec: Decomposition, points) -> ActiveMap:
    """Exact support test of every subdomain against every point."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, dec.dim)
    layouts = []
    for l, lv in enumerate(dec.levels, start=1):
        members = _inside_level(lv, pts)
        covered = np.zeros(pts.shape[0], dtype=bool)
        for m in members:
            covered[m] = True
        if not covered.all():
            bad = int(np.flatnonzero(~covered)[0])
            raise ValueError(f"point {bad} is not inside any subdomain of level {l}")
        layouts.append(_layout(members, pts.shape[0]))
    return ActiveMap(pts.shape[0], tuple(layouts))


def full_active_map(dec: Decomposition, points) -> ActiveMap:
    """Every subdomain paired with every point (brute-force summation)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, dec.dim)
    all_pts = np.arange(pts.shape[0])
    layouts = [_layout([all_pts] * lv.n_subdomains, pts.shape[0]) for lv in dec.levels]
    return ActiveMap(pts.shape[0], tuple(layouts))
