"""Shared oracles for the test suite.

Everything here is written independently of the package internals: plain
loops, closed-form derivatives and extended precision (``np.longdouble``)
so that finite differences taken through these functions are accurate far
below the tolerances being tested.
"""

import numpy as np
import pytest

LD = np.longdouble


def net_forward_ld(weights, biases, z):
    """Scalar FCN output (tanh hidden layers) at one point, in extended precision."""
    h = np.asarray(z, dtype=LD)
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = np.asarray(w, dtype=LD) @ h + np.asarray(b, dtype=LD)
        if i < len(weights) - 1:
            h = np.tanh(h)
    return h[0]


def central_diff(f, x, h):
    """First and diagonal second central differences of ``f`` at ``x`` (extended precision)."""
    x = np.asarray(x, dtype=LD)
    f0 = f(x)
    d1 = np.empty(x.size)
    d2 = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size, dtype=LD)
        e[i] = h
        fp, fm = f(x + e), f(x - e)
        d1[i] = (fp - fm) / (2 * e[i])
        d2[i] = (fp - 2 * f0 + fm) / (e[i] * e[i])
    return d1, d2


def unpack_net(flat, sizes, dtype=np.float64):
    """Split one flat parameter vector into per-layer weights (out, in) and biases."""
    flat = np.asarray(flat, dtype=dtype)
    ws, bs, k = [], [], 0
    for i, o in zip(sizes[:-1], sizes[1:]):
        ws.append(flat[k : k + o * i].reshape(o, i))
        k += o * i
        bs.append(flat[k : k + o])
        k += o
    return ws, bs


def _window_1d(x, mu, sig, dtype):
    """Raw cosine window and its first two derivatives (zero outside the open box)."""
    if abs(x - mu) >= sig:
        return dtype(0), dtype(0), dtype(0)
    a = dtype(np.pi) / sig
    c = np.cos(a * (x - mu))
    s = np.sin(a * (x - mu))
    w = (1 + c) ** 2
    w1 = -2 * a * s * (1 + c)
    w2 = 2 * a * a * (s * s - c - c * c)
    return w, w1, w2


def naive_solution_1d(centers, half_widths, sizes, theta, x, dtype=LD):
    """Value, first and second derivative of the 1D multilevel ansatz at ``x``.

    ``centers[l]``/``half_widths[l]`` list the subdomains of level ``l``
    (0-based); level 0 has window 1.  Networks have one tanh hidden layer.
    Plain loops over levels and subdomains, closed-form derivatives.
    """
    theta = np.asarray(theta, dtype=dtype)
    x = dtype(x)
    k = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
    L = len(centers)
    u = u1 = u2 = dtype(0)
    base = 0
    for l in range(L):
        J = len(centers[l])
        wins = [_window_1d(x, dtype(centers[l][j]), dtype(half_widths[l][j]), dtype) for j in range(J)]
        if l == 0:
            wins = [(dtype(1), dtype(0), dtype(0))]
        S = sum(w[0] for w in wins)
        S1 = sum(w[1] for w in wins)
        S2 = sum(w[2] for w in wins)
        for j in range(J):
            w, w1, w2 = wins[j]
            om = w / S
            om1 = (w1 * S - w * S1) / S**2
            om2 = w2 / S - 2 * w1 * S1 / S**2 - w * S2 / S**2 + 2 * w * S1**2 / S**3
            ws, bs = unpack_net(theta[base : base + k], sizes, dtype)
            base += k
            sig = dtype(half_widths[l][j])
            z = (x - dtype(centers[l][j])) / sig
            a = ws[0][:, 0] * z + bs[0]
            t = np.tanh(a)
            v = ws[1][0] @ t + bs[1][0]
            v1 = ws[1][0] @ ((1 - t * t) * ws[0][:, 0]) / sig
            v2 = ws[1][0] @ (-2 * t * (1 - t * t) * ws[0][:, 0] ** 2) / sig**2
            u += om * v
            u1 += om1 * v + om * v1
            u2 += om2 * v + 2 * om1 * v1 + om * v2
    return u / L, u1 / L, u2 / L


def naive_laplace1d_loss(centers, half_widths, sizes, theta, points, sharpness=0.2, dtype=LD):
    """Hard-constrained ``-u'' = 8`` loss on [0, 1], double loop over points and subdomains."""
    s = dtype(sharpness)
    total = dtype(0)
    for x in points:
        x = dtype(x)
        u, u1, u2 = naive_solution_1d(centers, half_widths, sizes, theta, x, dtype)
        f = np.tanh(x / s)
        g = np.tanh((1 - x) / s)
        f1 = (1 - f * f) / s
        g1 = -(1 - g * g) / s
        f2 = -2 * f * (1 - f * f) / s**2
        g2 = -2 * g * (1 - g * g) / s**2
        c, c1, c2 = f * g, f1 * g + f * g1, f2 * g + 2 * f1 * g1 + f * g2
        lap = c2 * u + 2 * c1 * u1 + c * u2
        r = -lap - 8
        total += r * r
    return total / len(points)


def level_geometry_1d(dec):
    """Per-level lists of 1D centers and half-widths from a decomposition."""
    centers, widths = [], []
    for l in range(1, dec.n_levels + 1):
        subs = dec.subdomains(l)
        centers.append([float(s.center[0]) for s in subs])
        widths.append([float(s.half_width[0]) for s in subs])
    return centers, widths


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# acceptance report: one PASS/FAIL line per criterion at the end of the run
# ---------------------------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"C{number:<2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
