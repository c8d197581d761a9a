"""Finite-difference reference solutions for the 2D Helmholtz problem.

The operator ``lap(u) + s k^2 u`` (``s`` is the problem's ``wave_sign``) is
discretised with the 5-point stencil on a uniform ``n x n`` node grid of the
unit square.  Boundary nodes carry the homogeneous Dirichlet value and are
eliminated, so only the ``(n-2)**2`` interior unknowns enter the sparse
system, which is factorized directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problems import ProblemSpec, source

__all__ = [
    "GridField",
    "NearSingularSystemError",
    "laplacian_matrix",
    "helmholtz_matrix",
    "solve_helmholtz_fd",
    "solve_dirichlet",
    "apply_stencil",
    "min_relative_eigenvalue",
    "sample_grid_nodes",
    "grid_nodes",
]


class NearSingularSystemError(np.linalg.LinAlgError):
    """The discrete operator is (numerically) singular, e.g. at a resonant ``k``."""


@dataclass(frozen=True)
class GridField:
    """Nodal values on a uniform ``n x n`` grid of the unit square.

    ``values[i, j]`` sits at ``(i h, j h)``; boundary rows and columns are 0.
    """

    n: int
    h: float
    values: np.ndarray
    sign: int = -1
    k: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.values.shape != (self.n, self.n):
            raise ValueError(f"values must be {self.n}x{self.n}, got {self.values.shape}")

    def save(self, path) -> None:
        """Text format: header ``n,h,sign_convention,k,sigma`` then one grid row per line."""
        lines = ["n,h,sign_convention,k,sigma", f"{self.n},{self.h!r},{self.sign:+d},{self.k!r},{self.sigma!r}"]
        lines += [",".join(repr(float(v)) for v in row) for row in self.values]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "GridField":
        lines = Path(path).read_text().strip().splitlines()
        if lines[0].strip() != "n,h,sign_convention,k,sigma":
            raise ValueError(f"{path}: not a grid field file")
        n, h, sign, k, sigma = lines[1].split(",")
        n = int(n)
        values = np.array([[float(v) for v in line.split(",")] for line in lines[2:]])
        if values.shape != (n, n):
            raise ValueError(f"{path}: expected {n} rows of {n} values")
        return cls(n, float(h), values, int(sign), float(k), float(sigma))


def grid_nodes(n: int) -> np.ndarray:
    """Node coordinates ``(n*n, 2)`` in row-major order (second coordinate fastest)."""
    g = np.linspace(0.0, 1.0, n)
    x1, x2 = np.meshgrid(g, g, indexing="ij")
    return np.stack([x1.ravel(), x2.ravel()], axis=1)


def laplacian_matrix(n: int) -> sp.csr_matrix:
    """5-point Laplacian on the ``(n-2)**2`` interior nodes, Dirichlet rows eliminated."""
    if n < 3:
        raise ValueError(f"grid needs n >= 3 nodes per side, got {n}")
    m = n - 2
    h = 1.0 / (n - 1)
    t = sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1])
    eye = sp.identity(m)
    return ((sp.kron(t, eye) + sp.kron(eye, t)) / h**2).tocsr()


def helmholtz_matrix(n: int, k: float, sign: int = -1) -> sp.csr_matrix:
    a = laplacian_matrix(n)
    return (a + sign * k**2 * sp.identity(a.shape[0])).tocsr()


def apply_stencil(u: np.ndarray, k: float = 0.0, sign: int = -1) -> np.ndarray:
    """Discrete operator applied to a full nodal array; returns interior values ``(n-2, n-2)``."""
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    h = 1.0 / (n - 1)
    c = u[1:-1, 1:-1]
    lap = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * c) / h**2
    return lap + sign * k**2 * c


def min_relative_eigenvalue(n: int, k: float, sign: int = -1) -> float:
    """``min |lambda|`` over the discrete operator's eigenvalues, relative to the largest.

    The 5-point Dirichlet Laplacian has the closed-form spectrum
    ``-(4/h^2) (sin^2(a pi h / 2) + sin^2(b pi h / 2))``, ``a, b = 1..n-2``.
    """
    h = 1.0 / (n - 1)
    s = np.sin(np.arange(1, n - 1) * np.pi * h / 2.0) ** 2
    lam = -(4.0 / h**2) * (s[:, None] + s[None, :]) + sign * k**2
    return float(np.min(np.abs(lam)) / np.max(np.abs(lam)))


def solve_dirichlet(n: int, f_interior: np.ndarray, k: float = 0.0, sign: int = -1,
                    rtol: float = 1e-8) -> np.ndarray:
    """Solve ``(lap + sign k^2) u = f`` with zero boundary values.

    ``f_interior`` has shape ``(n-2, n-2)``.  Returns the full ``(n, n)``
    nodal array.  Raises :class:`NearSingularSystemError` when the factorization
    fails or the solution does not satisfy the system to ``rtol``.
    """
    a = helmholtz_matrix(n, k, sign)
    f = np.asarray(f_interior, dtype=np.float64).ravel()
    if f.size != a.shape[0]:
        raise ValueError(f"source needs {(n - 2) ** 2} interior values, got {f.size}")
    out = np.zeros((n, n))
    gap = min_relative_eigenvalue(n, k, sign)
    if gap < 1e-12:
        raise NearSingularSystemError(
            f"near-singular discrete operator (k={k}, sign={sign:+d}): relative eigenvalue gap {gap:.3e}"
        )
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return out
    try:
        lu = spla.splu(a.tocsc())
        u = lu.solve(f)
    except RuntimeError as err:  # SuperLU reports an exactly singular factor this way
        raise NearSingularSystemError(f"singular discrete operator (k={k}, sign={sign:+d}): {err}") from err
    res = np.linalg.norm(a @ u - f) / fnorm
    if not np.all(np.isfinite(u)) or res > rtol:
        raise NearSingularSystemError(
            f"near-singular discrete operator (k={k}, sign={sign:+d}): relative residual {res:.3e}"
        )
    out[1:-1, 1:-1] = u.reshape(n - 2, n - 2)
    return out


def solve_helmholtz_fd(p: ProblemSpec, n: int = 320) -> GridField:
    """Reference solution of a ``helmholtz2d`` problem on an ``n x n`` node grid.

    The source is sampled at the nodes.
    """
    if p.id != "helmholtz2d":
        raise ValueError(f"finite-difference reference only for helmholtz2d, got {p.id}")
    if n < 3:
        raise ValueError(f"grid needs n >= 3 nodes per side, got {n}")
    nodes = grid_nodes(n).reshape(n, n, 2)
    f = source(p, nodes[1:-1, 1:-1])
    u = solve_dirichlet(n, f, p.k, p.wave_sign)
    return GridField(n, 1.0 / (n - 1), u, p.wave_sign, p.k, p.sigma_g)


def sample_grid_nodes(g: GridField) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinates and values, row-major, in the same order as ``collocation_grid``."""
    return grid_nodes(g.n), g.values.ravel().copy()
