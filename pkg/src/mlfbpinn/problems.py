"""Boundary value problems: sources, residuals and closed-form solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .ansatz import ConstraintOp, dirichlet_box

__all__ = [
    "PROBLEM_IDS",
    "ProblemSpec",
    "laplace1d",
    "laplace2d",
    "multiscale2d",
    "helmholtz2d",
    "make_problem",
    "source",
    "exact",
    "exact_jet",
    "residual",
]

PROBLEM_IDS = ("laplace1d", "laplace2d", "multiscale2d", "helmholtz2d")


@dataclass(frozen=True)
class ProblemSpec:
    """One of the supported problems on a box domain.

    For ``helmholtz2d`` the residual is ``lap(u) + wave_sign * k**2 * u - f``;
    the default ``wave_sign=-1`` gives ``lap(u) - k**2 u = f``.
    """

    id: str
    domain: np.ndarray
    constraint: ConstraintOp
    omegas: tuple[float, ...] = ()
    k: float = 0.0
    sigma_g: float = 0.0
    wave_sign: int = -1
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.id not in PROBLEM_IDS:
            raise ValueError(f"unknown problem {self.id!r}")
        if self.id == "multiscale2d":
            if len(self.omegas) < 1 or any(w <= 0 for w in self.omegas):
                raise ValueError("multiscale problem needs n >= 1 positive frequencies")
        if self.id == "helmholtz2d":
            if self.k <= 0 or self.sigma_g <= 0:
                raise ValueError("helmholtz problem needs k > 0 and sigma > 0")
            if self.wave_sign not in (-1, 1):
                raise ValueError("wave_sign must be -1 or +1")

    @property
    def dim(self) -> int:
        return self.domain.shape[0]

    @property
    def n(self) -> int:
        return len(self.omegas)

    @property
    def has_exact(self) -> bool:
        return self.id != "helmholtz2d"

    def params_text(self) -> str:
        if self.id == "multiscale2d":
            return f"n={self.n} omegas={','.join(repr(float(w)) for w in self.omegas)}"
        if self.id == "helmholtz2d":
            return f"k={self.k!r} sigma={self.sigma_g!r} wave_sign={self.wave_sign:+d}"
        return ""


def _unit(d):
    return np.array([[0.0, 1.0]] * d)


def laplace1d(sharpness: float = 0.2) -> ProblemSpec:
    """``-u'' = 8`` on [0, 1]; solution ``4x(1-x)``."""
    dom = _unit(1)
    return ProblemSpec("laplace1d", dom, dirichlet_box(dom, sharpness))


def laplace2d(sharpness: float = 0.2) -> ProblemSpec:
    dom = _unit(2)
    return ProblemSpec("laplace2d", dom, dirichlet_box(dom, sharpness))


def multiscale2d(n: int = 1, omegas=None, sharpness: float | None = None) -> ProblemSpec:
    """Sum of ``n`` sine modes; default frequencies ``2**i`` and sharpness ``1/omega_n``."""
    if omegas is None:
        omegas = [2.0 ** i for i in range(1, int(n) + 1)]
    omegas = tuple(float(w) for w in omegas)
    if sharpness is None:
        sharpness = 1.0 / omegas[-1]
    dom = _unit(2)
    return ProblemSpec("multiscale2d", dom, dirichlet_box(dom, sharpness), omegas=omegas)


def helmholtz2d(k: float, sigma_g: float, sharpness: float | None = None, wave_sign: int = -1) -> ProblemSpec:
    """Gaussian point source at the centre; sharpness defaults to ``1/k``."""
    if not (k > 0 and sigma_g > 0):
        raise ValueError("helmholtz problem needs k > 0 and sigma > 0")
    if sharpness is None:
        sharpness = 1.0 / k
    dom = _unit(2)
    return ProblemSpec("helmholtz2d", dom, dirichlet_box(dom, sharpness), k=float(k), sigma_g=float(sigma_g),
                       wave_sign=int(wave_sign))


def make_problem(pid: str, **kw) -> ProblemSpec:
    if pid == "laplace1d":
        return laplace1d(kw.get("sharpness", 0.2))
    if pid == "laplace2d":
        return laplace2d(kw.get("sharpness", 0.2))
    if pid == "multiscale2d":
        return multiscale2d(kw.get("n", 1), kw.get("omegas"), kw.get("sharpness"))
    if pid == "helmholtz2d":
        return helmholtz2d(kw["k"], kw["sigma_g"], kw.get("sharpness"), kw.get("wave_sign", -1))
    raise ValueError(f"unknown problem {pid!r}")


def source(p: ProblemSpec, x) -> float | np.ndarray:
    """Right-hand side ``f`` at a point ``(d,)`` or points ``(..., d)``."""
    x = np.asarray(x, dtype=np.float64)
    if p.id == "laplace1d":
        out = np.full(x.shape[:-1], 8.0)
    elif p.id == "laplace2d":
        x1, x2 = x[..., 0], x[..., 1]
        out = 32.0 * (x1 * (1.0 - x1) + x2 * (1.0 - x2))
    elif p.id == "multiscale2d":
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1])
        for w in p.omegas:
            out = out + (w * np.pi) ** 2 * np.sin(w * np.pi * x1) * np.sin(w * np.pi * x2)
        out = out * (2.0 / p.n)
    else:
        r2 = np.sum((x - 0.5) ** 2, axis=-1)
        out = np.exp(-0.5 * r2 / p.sigma_g ** 2)
    return float(out) if out.ndim == 0 else out


def exact(p: ProblemSpec, x):
    """Closed-form solution, or ``None`` when none is known (Helmholtz)."""
    if not p.has_exact:
        return None
    x = np.asarray(x, dtype=np.float64)
    if p.id == "laplace1d":
        x1 = x[..., 0]
        out = 4.0 * x1 * (1.0 - x1)
    elif p.id == "laplace2d":
        x1, x2 = x[..., 0], x[..., 1]
        out = 16.0 * (x1 * (1.0 - x1) * x2 * (1.0 - x2))
    else:
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1])
        for w in p.omegas:
            out = out + np.sin(w * np.pi * x1) * np.sin(w * np.pi * x2)
        out = out / p.n
    return float(out) if out.ndim == 0 else out


def exact_jet(p: ProblemSpec, x: ad.Jet) -> ad.Jet:
    """Closed-form solution traced through the jet engine (input derivatives included)."""
    if not p.has_exact:
        raise ValueError(f"{p.id} has no closed-form solution")
    if p.id == "laplace1d":
        x1 = x[:, 0]
        return x1 * (1.0 - x1) * 4.0
    x1, x2 = x[:, 0], x[:, 1]
    if p.id == "laplace2d":
        return x1 * (1.0 - x1) * (x2 * (1.0 - x2)) * 16.0
    out = None
    for w in p.omegas:
        term = ad.sin(x1 * (w * np.pi)) * ad.sin(x2 * (w * np.pi))
        out = term if out is None else out + term
    return out * (1.0 / p.n)


def residual(p: ProblemSpec, u: ad.Jet, x):
    """PDE residual ``N[u] - f`` given the jet of ``u`` at points ``x``.

    Laplace family: ``-lap(u) - f``.  Helmholtz: ``lap(u) + wave_sign k^2 u - f``.
    Returns an array, or a tape variable when ``u`` depends on one.
    """
    f = source(p, np.asarray(x, dtype=np.float64))
    lap = u.laplacian()
    if p.id == "helmholtz2d":
        return lap + u.value * (p.wave_sign * p.k ** 2) - f
    return -lap - f
