"""Compiled kernels for the stacked affine map of many small networks.

Each output entry is accumulated sequentially in a fixed order that depends
only on the feature dimensions, never on how many rows a batch holds or
where a row sits in it.  Reductions over rows (weight and bias gradients)
run in increasing row order and skip exact zeros, so padding rows and
inactive (zero-gradient) rows leave the result bit-for-bit unchanged.
BLAS offers neither guarantee.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def affine_forward(x, w, b, has_bias):
    # x (C, J, P, I), w (J, O, I), b (J, O) -> (C, J, P, O)
    C, J, P, I = x.shape
    O = w.shape[1]
    wt = np.empty((J, I, O))
    for j in range(J):
        for o in range(O):
            for i in range(I):
                wt[j, i, o] = w[j, o, i]
    out = np.zeros((C, J, P, O))
    for c in range(C):
        for j in range(J):
            for p in range(P):
                row = out[c, j, p]
                for i in range(I):
                    xi = x[c, j, p, i]
                    for o in range(O):
                        row[o] += xi * wt[j, i, o]
                if has_bias:
                    for o in range(O):
                        row[o] += b[j, o]
    return out


@njit(cache=True)
def affine_input_grad(g, w):
    # g (C, J, P, O), w (J, O, I) -> (C, J, P, I)
    C, J, P, O = g.shape
    I = w.shape[2]
    out = np.zeros((C, J, P, I))
    for c in range(C):
        for j in range(J):
            for p in range(P):
                row = out[c, j, p]
                for o in range(O):
                    go = g[c, j, p, o]
                    for i in range(I):
                        row[i] += go * w[j, o, i]
    return out


@njit(cache=True)
def affine_weight_grad(g, x):
    # g (C, J, P, O), x (C, J, P, I) -> (J, O, I), summed over c then p
    C, J, P, O = g.shape
    I = x.shape[3]
    out = np.zeros((J, O, I))
    for j in range(J):
        for c in range(C):
            for p in range(P):
                for o in range(O):
                    go = g[c, j, p, o]
                    if go != 0.0:
                        for i in range(I):
                            out[j, o, i] += go * x[c, j, p, i]
    return out


@njit(cache=True)
def affine_bias_grad(g):
    # g (C, J, P, O) -> (J, O)
    C, J, P, O = g.shape
    out = np.zeros((J, O))
    for j in range(J):
        for c in range(C):
            for p in range(P):
                for o in range(O):
                    go = g[c, j, p, o]
                    if go != 0.0:
                        out[j, o] += go
    return out


# ---------------------------------------------------------------------------
# fused tanh networks with input jets
# ---------------------------------------------------------------------------
#
# One call evaluates J stacked networks (flat parameters, one row per network,
# layer by layer: weight row-major then bias) at P points each, together with
# the first and diagonal second derivatives with respect to the d inputs.  The
# input jet of point (j, p) is x[j, p] with first derivative diag(scale[j]) and
# zero second derivative.  Channels: 0 = value, 1..d = first, d+1..2d = second.


@njit(cache=True)
def _layer_offsets(sizes):
    n = sizes.shape[0] - 1
    offs = np.empty(n, dtype=np.int64)
    k = 0
    for l in range(n):
        offs[l] = k
        k += sizes[l + 1] * sizes[l] + sizes[l + 1]
    return offs


BLOCK = 64


@njit(cache=True)
def _width(sizes):
    width = 0
    for s in sizes:
        width = max(width, s)
    return width


@njit(cache=True)
def _load_block(x, scale, rows, nb, nch, U):
    """Input channels of a block of points: value, first (diag(scale)), second (zero)."""
    d = x.shape[1]
    for c in range(nch):
        for i in range(d):
            for b in range(nb):
                U[0, c, i, b] = 0.0
    for i in range(d):
        for b in range(nb):
            U[0, 0, i, b] = x[rows[b], i]
    if nch > 1:
        for k in range(d):
            for b in range(nb):
                U[0, 1 + k, k, b] = scale[k]


@njit(cache=True)
def _forward_block(params, sizes, offs, nb, nch, d, U, A, T, have_t):
    """Forward pass over a block: per-layer inputs ``U``, pre-activations ``A``;
    hidden tanh values go to ``T`` (or are read from it when ``have_t``)."""
    nl = sizes.shape[0] - 1
    for l in range(nl):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        woff = offs[l]
        boff = woff + n_out * n_in
        for c in range(nch):
            for o in range(n_out):
                for b in range(nb):
                    A[l, c, o, b] = 0.0
                for i in range(n_in):
                    w = params[woff + o * n_in + i]
                    for b in range(nb):
                        A[l, c, o, b] += w * U[l, c, i, b]
        for o in range(n_out):
            bias = params[boff + o]
            for b in range(nb):
                A[l, 0, o, b] += bias
        if l < nl - 1:
            for o in range(n_out):
                if not have_t:
                    for b in range(nb):
                        T[l, o, b] = np.tanh(A[l, 0, o, b])
                for b in range(nb):
                    U[l + 1, 0, o, b] = T[l, o, b]
                if nch > 1:
                    for b in range(nb):
                        t = T[l, o, b]
                        t1 = 1.0 - t * t
                        t2 = -2.0 * t * t1
                        for k in range(d):
                            a1 = A[l, 1 + k, o, b]
                            U[l + 1, 1 + k, o, b] = t1 * a1
                            U[l + 1, 1 + d + k, o, b] = t1 * A[l, 1 + d + k, o, b] + t2 * a1 * a1


@njit(cache=True)
def mlp_jet_forward(params, sizes, x, scale, counts, derivatives):
    """params (J, Np), sizes (n_layers + 1,), x (J, P, d), scale (J, d), counts (J,).

    Rows ``p >= counts[j]`` are padding and get zeros.  Returns the output
    channels ``(nch, J, P)`` and the hidden tanh values ``(n_layers - 1, J, width, P)``.
    """
    J, P, d = x.shape
    nl = sizes.shape[0] - 1
    nch = 1 + 2 * d if derivatives else 1
    width = _width(sizes)
    offs = _layer_offsets(sizes)
    U = np.zeros((nl + 1, nch, width, BLOCK))
    A = np.zeros((nl, nch, width, BLOCK))
    T = np.zeros((max(nl - 1, 1), width, BLOCK))
    rows = np.arange(BLOCK)
    out = np.zeros((nch, J, P))
    tcache = np.zeros((max(nl - 1, 1), J, width, P))
    for j in range(J):
        for s in range(0, counts[j], BLOCK):
            nb = min(BLOCK, counts[j] - s)
            _load_block(x[j], scale[j], rows + s, nb, nch, U)
            _forward_block(params[j], sizes, offs, nb, nch, d, U, A, T, False)
            for c in range(nch):
                for b in range(nb):
                    out[c, j, s + b] = A[nl - 1, c, 0, b]
            for l in range(nl - 1):
                for o in range(sizes[l + 1]):
                    for b in range(nb):
                        tcache[l, j, o, s + b] = T[l, o, b]
    return out, tcache


@njit(cache=True)
def mlp_jet_backward(params, sizes, x, scale, tcache, gout):
    """Vector-Jacobian product of :func:`mlp_jet_forward`: ``gout (nch, J, P)`` -> ``(J, Np)``.

    Only points with a nonzero ``gout`` take part; they are gathered in
    increasing ``p`` and processed in fixed-size blocks, so the result does
    not depend on padding or on interleaved zero-gradient points.
    """
    nch, J, P = gout.shape
    d = x.shape[2]
    nl = sizes.shape[0] - 1
    width = _width(sizes)
    offs = _layer_offsets(sizes)
    U = np.zeros((nl + 1, nch, width, BLOCK))
    A = np.zeros((nl, nch, width, BLOCK))
    T = np.zeros((max(nl - 1, 1), width, BLOCK))
    GA = np.zeros((nch, width, BLOCK))
    GU = np.zeros((nch, width, BLOCK))
    live = np.empty(P, dtype=np.int64)
    grad = np.zeros(params.shape)
    for j in range(J):
        n_live = 0
        for p in range(P):
            for c in range(nch):
                if gout[c, j, p] != 0.0:
                    live[n_live] = p
                    n_live += 1
                    break
        pj = params[j]
        gj = grad[j]
        for s in range(0, n_live, BLOCK):
            nb = min(BLOCK, n_live - s)
            rows = live[s : s + nb]
            _load_block(x[j], scale[j], rows, nb, nch, U)
            for l in range(nl - 1):
                for o in range(sizes[l + 1]):
                    for b in range(nb):
                        T[l, o, b] = tcache[l, j, o, rows[b]]
            _forward_block(pj, sizes, offs, nb, nch, d, U, A, T, True)
            for c in range(nch):
                for b in range(nb):
                    GA[c, 0, b] = gout[c, j, rows[b]]
            for l in range(nl - 1, -1, -1):
                n_in = sizes[l]
                n_out = sizes[l + 1]
                woff = offs[l]
                boff = woff + n_out * n_in
                for o in range(n_out):
                    acc = 0.0
                    for b in range(nb):
                        acc += GA[0, o, b]
                    gj[boff + o] += acc
                    for i in range(n_in):
                        acc = 0.0
                        for c in range(nch):
                            for b in range(nb):
                                acc += GA[c, o, b] * U[l, c, i, b]
                        gj[woff + o * n_in + i] += acc
                if l == 0:
                    break
                for c in range(nch):
                    for i in range(n_in):
                        for b in range(nb):
                            GU[c, i, b] = 0.0
                    for o in range(n_out):
                        for i in range(n_in):
                            w = pj[woff + o * n_in + i]
                            for b in range(nb):
                                GU[c, i, b] += w * GA[c, o, b]
                m = l - 1
                for i in range(n_in):
                    for b in range(nb):
                        t = T[m, i, b]
                        t1 = 1.0 - t * t
                        t2 = -2.0 * t * t1
                        t3 = -2.0 * (t1 * t1 + t * t2)
                        ga = t1 * GU[0, i, b]
                        if nch > 1:
                            for k in range(d):
                                a1 = A[m, 1 + k, i, b]
                                a2 = A[m, 1 + d + k, i, b]
                                g1 = GU[1 + k, i, b]
                                g2 = GU[1 + d + k, i, b]
                                ga += t2 * a1 * g1 + g2 * (t2 * a2 + t3 * a1 * a1)
                                GA[1 + k, i, b] = t1 * g1 + 2.0 * t2 * a1 * g2
                                GA[1 + d + k, i, b] = t1 * g2
                        GA[0, i, b] = ga
    return grad
