"""Collocation grids, the hard-constrained residual loss, Adam and the training loop."""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .ansatz import ModelSpec, Plan, predict, solution_jet
from .autodiff import NonFiniteLossError
from .decomposition import ActiveMap, full_active_map
from .problems import ProblemSpec, residual

__all__ = [
    "TrainConfig",
    "HistoryRow",
    "TrainHistory",
    "AdamState",
    "DivergenceError",
    "collocation_grid",
    "make_loss",
    "loss",
    "adam_step",
    "train",
    "normalized_l1",
]


def _counts(counts, d: int) -> tuple[int, ...]:
    counts = (int(counts),) if np.isscalar(counts) else tuple(int(c) for c in counts)
    if len(counts) == 1:
        counts = counts * d
    return counts


@dataclass
class TrainConfig:
    steps: int = 20000
    lr: float = 1e-3
    collocation: tuple[int, ...] = (80,)
    test: tuple[int, ...] = (350,)
    seed: int = 0
    log_interval: int = 500
    use_active_map: bool = True

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        self.collocation = _counts(self.collocation, 1)
        self.test = _counts(self.test, 1)
        if min(self.collocation) < 2 or min(self.test) < 2:
            raise ValueError("point counts per dimension must be >= 2")
        if int(self.log_interval) < 1:
            raise ValueError("log_interval must be >= 1")


@dataclass(frozen=True)
class HistoryRow:
    step: int
    time_s: float
    train_loss: float
    test_l1: float


@dataclass
class TrainHistory:
    rows: list[HistoryRow] = field(default_factory=list)

    def append(self, row: HistoryRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError("history steps must be strictly increasing")
        self.rows.append(row)

    @property
    def final(self) -> HistoryRow:
        return self.rows[-1]

    def to_csv(self, path=None, include_time: bool = True) -> str:
        """``step,time_s,train_loss,test_l1``; floats use ``repr`` so they round-trip."""
        buf = io.StringIO()
        buf.write("step,time_s,train_loss,test_l1\n" if include_time else "step,train_loss,test_l1\n")
        for r in self.rows:
            if include_time:
                buf.write(f"{r.step},{r.time_s:.6f},{r.train_loss!r},{r.test_l1!r}\n")
            else:
                buf.write(f"{r.step},{r.train_loss!r},{r.test_l1!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        lines = Path(path).read_text().strip().splitlines()
        hist = cls()
        for line in lines[1:]:
            s, t, a, b = line.split(",")
            hist.rows.append(HistoryRow(int(s), float(t), float(a), float(b)))
        return hist


class DivergenceError(NonFiniteLossError):
    """Training stopped on a non-finite loss; carries what was logged so far."""

    def __init__(self, message, history: TrainHistory, model: ModelSpec, index=None):
        super().__init__(message, index)
        self.history = history
        self.model = model


def collocation_grid(domain, counts) -> np.ndarray:
    """Tensor grid including the endpoints, row-major (last dimension fastest)."""
    dom = np.asarray(domain, dtype=np.float64).reshape(-1, 2)
    d = dom.shape[0]
    counts = _counts(counts, d)
    if len(counts) != d or min(counts) < 2:
        raise ValueError(f"need {d} counts >= 2, got {counts}")
    axes = [np.linspace(a, b, n) for (a, b), n in zip(dom, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def make_loss(m: ModelSpec, p: ProblemSpec, points, active_map: ActiveMap | None = None):
    """Build ``theta -> loss`` for fixed collocation points.

    Everything independent of the parameters (active subdomains, windows,
    constraint factor, source values) is computed once here.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, m.decomposition.dim)
    plan = Plan(m.decomposition, pts, active_map)
    cjet = p.constraint.jet(pts)

    def fn(theta):
        u = solution_jet(m, plan, theta) * cjet
        r = residual(p, u, pts)
        rv = np.asarray(ad._val(r))
        if not np.all(np.isfinite(rv)):
            bad = int(np.flatnonzero(~np.isfinite(rv))[0])
            raise NonFiniteLossError(f"non-finite residual at collocation point {bad}", index=bad)
        return ad.mean(r * r)

    fn.plan = plan
    return fn


def loss(m: ModelSpec, p: ProblemSpec, points, active_map: ActiveMap | None = None) -> float:
    """Mean squared residual of the constrained solution over ``points``."""
    return float(np.asarray(ad._val(make_loss(m, p, points, active_map)(m.theta))))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params, grad, lr: float = 1e-3):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != grad.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    mhat = m / (1.0 - state.beta1 ** t)
    vhat = v / (1.0 - state.beta2 ** t)
    new = params - lr * mhat / (np.sqrt(vhat) + state.eps)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


def normalized_l1(pred, truth) -> float:
    """Mean absolute error divided by the population standard deviation of ``truth``."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape or truth.size < 2:
        raise ValueError("pred and truth need equal lengths >= 2")
    sd = truth.std()
    if not sd > 0:
        raise ValueError("degenerate truth set: standard deviation is zero")
    return float(np.mean(np.abs(pred - truth)) / sd)


class _TestSet:
    def __init__(self, m: ModelSpec, p: ProblemSpec, points, truth, chunk=16384):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, m.decomposition.dim)
        self.truth = np.asarray(truth, dtype=np.float64).ravel()
        self.cons = p.constraint(self.points)
        self.plans = [
            (s, Plan(m.decomposition, self.points[s : s + chunk], derivatives=False))
            for s in range(0, self.points.shape[0], chunk)
        ]

    def score(self, m: ModelSpec, theta) -> float:
        pred = np.empty(self.points.shape[0])
        for s, plan in self.plans:
            u = np.asarray(solution_jet(m, plan, theta).value)
            pred[s : s + u.size] = u
        return normalized_l1(self.cons * pred, self.truth)


def train(m: ModelSpec, p: ProblemSpec, cfg: TrainConfig, *, points=None, test_points=None, test_truth=None,
          progress=None) -> tuple[ModelSpec, TrainHistory]:
    """Full-batch Adam on the hard-constrained residual loss.

    Collocation and test points default to uniform grids from ``cfg``; the
    test truth defaults to the closed-form solution.  A row is logged at step
    0, every ``cfg.log_interval`` steps and at the final step.  Raises
    :class:`DivergenceError` (with the partial history) on a non-finite loss.
    """
    from .problems import exact

    dom = m.decomposition.domain
    if points is None:
        points = collocation_grid(dom, cfg.collocation)
    if test_points is None:
        test_points = collocation_grid(dom, cfg.test)
    if test_truth is None:
        test_truth = exact(p, test_points)
        if test_truth is None:
            raise ValueError(f"{p.id} has no closed-form solution; pass test_truth")
    amap = None if cfg.use_active_map else full_active_map(m.decomposition, points)
    fn = make_loss(m, p, points, amap)
    tests = _TestSet(m, p, test_points, test_truth)

    theta = m.theta.copy()
    state = AdamState.zeros(theta.size)
    hist = TrainHistory()
    t0 = time.perf_counter()
    for step in range(cfg.steps + 1):
        try:
            value, grad = ad.loss_gradient(fn, theta)
        except NonFiniteLossError as err:
            raise DivergenceError(f"training diverged at step {step}: {err}", hist, m.with_theta(theta),
                                  err.index) from err
        if step % cfg.log_interval == 0 or step == cfg.steps:
            row = HistoryRow(step, time.perf_counter() - t0, value, tests.score(m, theta))
            hist.append(row)
            if progress is not None:
                progress(row)
        if step < cfg.steps:
            theta, state = adam_step(state, theta, grad, cfg.lr)
    return m.with_theta(theta), hist
