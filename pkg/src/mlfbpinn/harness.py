"""Experiment presets, batch runs, result summaries and the command line.

Presets are flat ``key = value`` text files.  Top-level keys give the
experiment defaults; ``variant.<name> = key=value ...`` lines add variants
that override any default; ``scaled.<key> = value`` lines replace defaults
when a run is scaled down (``scaled.variants`` picks a subset of variants).

Recognized keys::

    name          experiment name (defaults to the file stem)
    problem       laplace1d | laplace2d | multiscale2d | helmholtz2d
    sharpness     constraint sharpness (problem default when absent)
    n, omegas     multi-scale components (count, or explicit list)
    k, sigma      Helmholtz wave number and source width
    wave_sign     -1 (default) or +1
    kind          multilevel-fbpinn | one-level-fbpinn | pinn
    levels        L, or per-dimension subdomain counts per level ("1,8,64")
    subdomains    per-dimension count for a one-level model
    delta         overlap ratio
    hidden        hidden layer widths ("16" or "64,64,64")
    collocation   points per dimension
    test          test points per dimension (ignored for helmholtz2d)
    fd_n          finite-difference reference grid for helmholtz2d
    steps, lr, seed, log_interval

Numeric values may be written as ``2^3*pi/1.6`` style products/quotients.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .ansatz import KINDS, ModelSpec, make_model, predict, save_checkpoint
from .decomposition import build_decomposition, build_levels, global_decomposition
from .fdsolver import GridField, sample_grid_nodes, solve_helmholtz_fd
from .problems import ProblemSpec, exact, make_problem
from .training import DivergenceError, TrainConfig, collocation_grid, normalized_l1, train

__all__ = [
    "ExperimentSpec",
    "VariantSpec",
    "SummaryRow",
    "list_presets",
    "load_preset",
    "parse_config",
    "run_experiment",
    "summarize",
    "run_checks",
    "main",
]

SUMMARY_HEADER = "rank,variant,status,final_train_loss,final_test_l1,wall_s,n_params"
_TOP_ONLY = {"name"}


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _number(text: str) -> float:
    """Evaluate a small arithmetic expression: numbers, ``pi``, ``^``, ``*``, ``/``."""
    expr = text.strip().replace("^", "**")
    if not re.fullmatch(r"[0-9eE+\-*/.() pi]+", expr):
        raise ValueError(f"not a number: {text!r}")
    return float(eval(expr, {"__builtins__": {}}, {"pi": math.pi}))  # noqa: S307 - charset checked above


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _split_pairs(text: str) -> dict[str, str]:
    out = {}
    for tok in text.split():
        if "=" not in tok:
            raise ValueError(f"variant override {tok!r} is not key=value")
        k, v = tok.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_config(text: str, default_name: str = "experiment") -> tuple[dict, list[tuple[str, dict]], dict]:
    """Split config text into ``(defaults, [(variant, overrides)], scaled)``."""
    base, variants, scaled = {}, [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("variant."):
            variants.append((key[len("variant."):], _split_pairs(value)))
        elif key.startswith("scaled."):
            scaled[key[len("scaled."):]] = value
        else:
            base[key] = value
    base.setdefault("name", default_name)
    if not variants:
        variants = [("baseline", {})]
    return base, variants, scaled


@dataclass
class VariantSpec:
    name: str
    settings: dict

    def get(self, key, default=None):
        return self.settings.get(key, default)

    def problem(self) -> ProblemSpec:
        s = self.settings
        pid = s["problem"]
        kw = {}
        if "sharpness" in s:
            kw["sharpness"] = _number(s["sharpness"])
        if pid == "multiscale2d":
            if "omegas" in s:
                kw["omegas"] = [_number(w) for w in s["omegas"].split(",")]
            kw["n"] = int(s.get("n", len(kw.get("omegas", [0]))))
        if pid == "helmholtz2d":
            kw["k"] = _number(s["k"])
            kw["sigma_g"] = _number(s["sigma"])
            kw["wave_sign"] = int(s.get("wave_sign", -1))
        return make_problem(pid, **kw)

    def model(self, p: ProblemSpec) -> ModelSpec:
        s = self.settings
        kind = s.get("kind", "multilevel-fbpinn")
        if kind not in KINDS:
            raise ValueError(f"variant {self.name}: unknown model kind {kind!r}")
        delta = _number(s.get("delta", "1.9"))
        hidden = _ints(s.get("hidden", "16"))
        if kind == "pinn":
            dec = global_decomposition(p.domain)
        elif kind == "one-level-fbpinn":
            dec = build_decomposition(p.domain, [int(s.get("subdomains", 2))], delta)
        else:
            levels = _ints(s.get("levels", "3"))
            dec = build_levels(p.domain, levels[0], delta) if len(levels) == 1 else build_decomposition(
                p.domain, levels, delta)
        sizes = [p.dim] + hidden + [1]
        return make_model(kind, dec, sizes, int(s.get("seed", 0)), p.constraint)

    def train_config(self) -> TrainConfig:
        s = self.settings
        if "steps" not in s:
            raise ValueError(f"variant {self.name}: 'steps' is required")
        return TrainConfig(
            steps=int(s["steps"]),
            lr=_number(s.get("lr", "1e-3")),
            collocation=tuple(_ints(s.get("collocation", "80"))),
            test=tuple(_ints(s.get("test", "350"))),
            seed=int(s.get("seed", 0)),
            log_interval=int(s.get("log_interval", 500)),
        )


@dataclass
class ExperimentSpec:
    name: str
    variants: list[VariantSpec]
    out_dir: Path = field(default_factory=lambda: Path("runs"))

    @classmethod
    def from_text(cls, text: str, default_name="experiment", *, scale_down=False, steps=None, seed=None,
                  out_dir=None) -> "ExperimentSpec":
        base, variants, scaled = parse_config(text, default_name)
        if scale_down:
            keep = scaled.pop("variants", None)
            base.update(scaled)
            if keep is not None:
                names = [v.strip() for v in keep.split(",") if v.strip()]
                known = {n for n, _ in variants}
                missing = [n for n in names if n not in known]
                if missing:
                    raise ValueError(f"scaled.variants names unknown variants {missing}")
                variants = [(n, o) for n, o in variants if n in names]
        name = base.pop("name")
        specs = []
        for vname, over in variants:
            settings = dict(base)
            settings.update({k: v for k, v in over.items() if k not in _TOP_ONLY})
            if steps is not None:
                settings["steps"] = str(int(steps))
            if seed is not None:
                settings["seed"] = str(int(seed))
            if "problem" not in settings:
                raise ValueError(f"variant {vname}: 'problem' is required")
            specs.append(VariantSpec(vname, settings))
        if len({v.name for v in specs}) != len(specs):
            raise ValueError("variant names must be unique")
        out = Path(out_dir) if out_dir is not None else Path("runs") / name
        return cls(name, specs, out)


def list_presets() -> list[str]:
    files = resources.files("mlfbpinn").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in files.iterdir() if p.name.endswith(".cfg"))


def load_preset(name_or_path, **kw) -> ExperimentSpec:
    """Load a shipped preset by name, or any config file by path."""
    path = Path(name_or_path)
    if path.is_file():
        return ExperimentSpec.from_text(path.read_text(), path.stem, **kw)
    res = resources.files("mlfbpinn").joinpath("presets", f"{name_or_path}.cfg")
    if not res.is_file():
        raise FileNotFoundError(f"no preset or config file {name_or_path!r}; presets: {', '.join(list_presets())}")
    return ExperimentSpec.from_text(res.read_text(), str(name_or_path), **kw)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


@dataclass
class SummaryRow:
    variant: str
    status: str
    final_train_loss: float = math.nan
    final_test_l1: float = math.nan
    wall_s: float = math.nan
    n_params: int = 0


class _PointCache:
    """Point sets and reference solutions built once per experiment and shared."""

    def __init__(self):
        self._grids = {}
        self._fd = {}

    def grid(self, domain, counts):
        key = (np.asarray(domain).tobytes(), tuple(counts))
        if key not in self._grids:
            pts = collocation_grid(domain, counts)
            pts.setflags(write=False)
            self._grids[key] = pts
        return self._grids[key]

    def fd(self, p: ProblemSpec, n: int) -> GridField:
        key = (p.k, p.sigma_g, p.wave_sign, n)
        if key not in self._fd:
            self._fd[key] = solve_helmholtz_fd(p, n)
        return self._fd[key]


def _test_set(v: VariantSpec, p: ProblemSpec, cfg: TrainConfig, cache: _PointCache):
    """Test points, truth values and the square grid size (for solution files)."""
    if p.id == "helmholtz2d":
        ref = cache.fd(p, int(v.get("fd_n", 320)))
        pts, truth = sample_grid_nodes(ref)
        return pts, truth, ref.n
    counts = cfg.test * p.dim if len(cfg.test) == 1 else cfg.test
    pts = cache.grid(p.domain, counts)
    side = counts[0] if p.dim == 2 and counts[0] == counts[-1] else None
    return pts, exact(p, pts), side


def _write_meta(path: Path, items: dict) -> None:
    path.write_text("".join(f"{k}={v}\n" for k, v in items.items()))


def _read_meta(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def run_variant(v: VariantSpec, out_dir: Path, cache: _PointCache | None = None, progress=None) -> SummaryRow:
    cache = cache or _PointCache()
    out_dir.mkdir(parents=True, exist_ok=True)
    p = v.problem()
    m = v.model(p)
    cfg = v.train_config()
    counts = cfg.collocation * p.dim if len(cfg.collocation) == 1 else cfg.collocation
    points = cache.grid(p.domain, counts)
    test_pts, truth, side = _test_set(v, p, cfg, cache)
    meta = {
        "variant": v.name,
        "status": "running",
        "kind": m.kind,
        "problem": p.id,
        "problem_params": p.params_text(),
        "levels": ",".join(str(c) for c in m.decomposition.per_dim_counts),
        "delta": repr(m.decomposition.delta),
        "layer_sizes": ",".join(str(s) for s in m.layer_sizes),
        "n_params": m.n_params,
        "steps": cfg.steps,
        "seed": cfg.seed,
    }
    _write_meta(out_dir / "meta.txt", meta)
    t0 = time.perf_counter()
    try:
        m, hist = train(m, p, cfg, points=points, test_points=test_pts, test_truth=truth, progress=progress)
        status = "ok"
    except DivergenceError as err:
        m, hist, status = err.model, err.history, "diverged"
        meta["error"] = str(err)
    wall = time.perf_counter() - t0
    hist.to_csv(out_dir / "convergence.csv")
    save_checkpoint(m, out_dir / "checkpoint.txt")
    if side is not None and status == "ok":
        pred = predict(m, test_pts, constraint=p.constraint)
        GridField(side, 1.0 / (side - 1), pred.reshape(side, side), p.wave_sign, p.k, p.sigma_g).save(
            out_dir / "solution.txt")
    last = hist.final if hist.rows else None
    meta.update(status=status, wall_s=f"{wall:.3f}")
    if last is not None:
        meta.update(final_step=last.step, final_train_loss=repr(last.train_loss), final_test_l1=repr(last.test_l1))
    _write_meta(out_dir / "meta.txt", meta)
    return SummaryRow(v.name, status, last.train_loss if last else math.nan, last.test_l1 if last else math.nan,
                      wall, m.n_params)


def run_experiment(spec: ExperimentSpec, progress=None, log=None) -> list[SummaryRow]:
    """Train every variant; write per-variant outputs and ``summary.csv``.

    A diverging variant is recorded and the remaining variants still run.
    """
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    cache = _PointCache()
    rows = []
    for v in spec.variants:
        if log:
            log(f"[{spec.name}] {v.name} ...")
        row = run_variant(v, spec.out_dir / v.name, cache, progress)
        if log:
            log(f"[{spec.name}] {v.name}: {row.status} test_l1={row.final_test_l1:.4g} ({row.wall_s:.1f}s)")
        rows.append(row)
    summarize(spec.out_dir)
    return rows


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def summarize(out_dir, write: bool = True) -> tuple[list[SummaryRow], str]:
    """Rank the variants under ``out_dir`` by final normalized L1.

    Completed runs come first (best first), then diverged runs, then
    incomplete directories (missing or unreadable outputs).  Returns the rows
    and the CSV text, which is also written to ``out_dir/summary.csv``.
    """
    out_dir = Path(out_dir)
    ok, diverged, incomplete = [], [], []
    for sub in sorted(p for p in out_dir.iterdir() if p.is_dir()) if out_dir.is_dir() else []:
        meta_path, conv = sub / "meta.txt", sub / "convergence.csv"
        if not meta_path.is_file() and not conv.is_file():
            continue
        try:
            meta = _read_meta(meta_path)
            status = meta["status"]
            row = SummaryRow(sub.name, status, float(meta.get("final_train_loss", "nan")),
                             float(meta.get("final_test_l1", "nan")), float(meta.get("wall_s", "nan")),
                             int(meta.get("n_params", 0)))
        except (OSError, KeyError, ValueError):
            incomplete.append(SummaryRow(sub.name, "incomplete"))
            continue
        if status == "ok" and conv.is_file() and (sub / "checkpoint.txt").is_file() and np.isfinite(
                row.final_test_l1):
            ok.append(row)
        elif status == "diverged":
            diverged.append(row)
        else:
            row.status = "incomplete"
            incomplete.append(row)
    ok.sort(key=lambda r: (r.final_test_l1, r.variant))
    rows = ok + diverged + incomplete
    lines = [SUMMARY_HEADER]
    for i, r in enumerate(rows, start=1):
        rank = str(i) if r.status == "ok" else ""
        lines.append(",".join([rank, r.variant, r.status, _fmt_float(r.final_train_loss),
                               _fmt_float(r.final_test_l1), _fmt_float(r.wall_s), str(r.n_params)]))
    text = "\n".join(lines) + "\n"
    if write and out_dir.is_dir():
        (out_dir / "summary.csv").write_text(text)
    return rows, text


def format_table(rows: list[SummaryRow]) -> str:
    head = f"{'rank':>4}  {'variant':<24} {'status':<10} {'train_loss':>12} {'test_l1':>12} {'wall_s':>9} {'params':>8}"
    out = [head]
    for i, r in enumerate(rows, start=1):
        rank = str(i) if r.status == "ok" else "-"
        out.append(f"{rank:>4}  {r.variant:<24} {r.status:<10} {r.final_train_loss:>12.4e} "
                   f"{r.final_test_l1:>12.4e} {r.wall_s:>9.1f} {r.n_params:>8d}")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# invariant checks
# ---------------------------------------------------------------------------


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Fast invariant suite: partition of unity, derivative oracles,
    manufactured residuals, finite-difference order and active-map neutrality."""
    from . import autodiff as ad
    from .ansatz import multilevel_model
    from .decomposition import full_active_map, pou_windows
    from .fdsolver import grid_nodes, solve_dirichlet
    from .network import fcn_jet, init_fcn
    from .problems import exact_jet, laplace1d, multiscale2d, residual
    from .training import make_loss

    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    for d in (1, 2):
        dom = [[0.0, 1.0]] * d
        for L in (1, 3, 5):
            for delta in (1.1, 1.9, 2.7):
                dec = build_levels(dom, L, delta)
                x = rng.uniform(0, 1, (2000, d))
                for lvl in range(1, L + 1):
                    s = pou_windows(dec, lvl, x).sum(axis=0)
                    worst = max(worst, float(np.max(np.abs(s - 1.0))))
    results.append(("partition of unity", worst < 1e-9, f"max |sum - 1| = {worst:.2e}"))

    worst = 0.0
    for _ in range(5):
        net = init_fcn([2, 8, 8, 1], rng=rng)
        x = rng.uniform(-1, 1, 2)
        dv = ad.eval_with_input_derivatives(lambda prm, xj: fcn_jet(prm.weights, prm.biases, xj)[..., 0], net, x)
        d1, d2 = central_differences(lambda z: forward_longdouble(net, z), x, 1e-4)
        worst = max(worst, float(np.max(np.abs(dv.input_partials - d1) / np.abs(d1))),
                    float(np.max(np.abs(dv.input_second_partials - d2) / np.abs(d2))))
    results.append(("input derivatives vs finite differences", worst < 1e-6, f"max rel err = {worst:.2e}"))

    worst = 0.0
    for p in (laplace1d(), multiscale2d(3)):
        x = rng.uniform(0, 1, (200, p.dim))
        u = exact_jet(p, ad.seed_input(x))
        worst = max(worst, float(np.max(np.abs(residual(p, u, x)))))
    results.append(("manufactured residuals", worst < 1e-9, f"max |r| = {worst:.2e}"))

    errs = []
    for n in (41, 81):
        g = grid_nodes(n).reshape(n, n, 2)
        us = np.sin(np.pi * g[..., 0]) * np.sin(np.pi * g[..., 1])
        f = (-2 * np.pi**2 - 9.0) * us
        errs.append(float(np.max(np.abs(solve_dirichlet(n, f[1:-1, 1:-1], 3.0, -1) - us))))
    ratio = errs[0] / errs[1]
    results.append(("finite-difference order", 3.2 <= ratio <= 4.8, f"error ratio = {ratio:.3f}"))

    p = laplace1d()
    m = multilevel_model(p.domain, 3, 1.9, 16, seed=seed, constraint=p.constraint)
    pts = collocation_grid(p.domain, 40)
    la = make_loss(m, p, pts)
    lb = make_loss(m, p, pts, full_active_map(m.decomposition, pts))
    va, ga = ad.loss_gradient(la, m.theta)
    vb, gb = ad.loss_gradient(lb, m.theta)
    same = va == vb and np.array_equal(ga, gb)
    results.append(("active map neutrality", bool(same), "loss and gradient bit-identical" if same else "mismatch"))
    return results


def forward_longdouble(params, x) -> np.longdouble:
    """Network value at a single point in extended precision (finite-difference oracle)."""
    h = np.asarray(x, dtype=np.longdouble)
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = w.astype(np.longdouble) @ h + b.astype(np.longdouble)
        if i < n - 1:
            h = np.tanh(h)
    return h[0]


def central_differences(f, x, h: float):
    """First and diagonal second central differences of a scalar function at ``x``."""
    x = np.asarray(x, dtype=np.longdouble)
    f0 = f(x)
    d1, d2 = np.empty(x.size), np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size, dtype=np.longdouble)
        e[i] = h
        fp, fm = f(x + e), f(x - e)
        d1[i] = (fp - fm) / (2 * e[i])
        d2[i] = (fp - 2 * f0 + fm) / (e[i] * e[i])
    return d1, d2


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    spec = load_preset(args.preset, scale_down=args.scale_down, steps=args.steps, seed=args.seed, out_dir=args.out)
    rows = run_experiment(spec, log=print)
    table, _ = summarize(spec.out_dir)
    print(format_table(table))
    return 1 if any(r.status != "ok" for r in rows) else 0


def _cmd_summarize(args) -> int:
    rows, _ = summarize(args.dir)
    print(format_table(rows))
    return 1 if any(r.status == "diverged" for r in rows) else 0


def _cmd_fd(args) -> int:
    p = make_problem("helmholtz2d", k=_number(args.k), sigma_g=_number(args.sigma), wave_sign=args.wave_sign)
    g = solve_helmholtz_fd(p, args.n)
    g.save(args.out)
    print(f"wrote {args.out}: n={g.n} k={p.k:.6g} sigma={p.sigma_g:.6g} max|u|={np.max(np.abs(g.values)):.4e}")
    return 0


def _cmd_check(args) -> int:
    failed = 0
    for name, ok, detail in run_checks():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return 1 if failed else 0


def _cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlfbpinn", description="Multilevel finite basis PINN experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every variant of a preset or config file")
    r.add_argument("preset", help="preset name or path to a config file")
    r.add_argument("--steps", type=int, help="override the step budget")
    r.add_argument("--seed", type=int, help="override the seed")
    r.add_argument("--out", help="output directory (default runs/<name>)")
    r.add_argument("--scale-down", action="store_true", help="apply the preset's scaled.* settings")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="rank the variants in an output directory")
    s.add_argument("dir")
    s.set_defaults(func=_cmd_summarize)

    f = sub.add_parser("fd-solve", help="finite-difference Helmholtz reference")
    f.add_argument("--k", required=True)
    f.add_argument("--sigma", required=True)
    f.add_argument("--n", type=int, default=320)
    f.add_argument("--wave-sign", type=int, default=-1, choices=(-1, 1))
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_fd)

    c = sub.add_parser("check", help="run the fast invariant suite")
    c.set_defaults(func=_cmd_check)

    pr = sub.add_parser("presets", help="list shipped presets")
    pr.set_defaults(func=_cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
