"""Oracles shared by the unit and acceptance tests."""

import math
from collections import deque
from itertools import product

import numpy as np

from hmer import tensor as T
from hmer.tensor import Tensor


def numerical_grad(f, arr, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every element of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_grads(build_loss, leaves, h=1e-5):
    """Max relative error between backprop and central differences over all leaves.

    ``build_loss`` rebuilds the graph from the current leaf values.
    """
    for t in leaves:
        t.zero_grad()
    build_loss().backward()
    worst = 0.0
    for t in leaves:
        analytic = t.grad.copy()
        numeric = numerical_grad(lambda: build_loss().item(), t.data, h)
        worst = max(worst, max_rel_err(analytic, numeric))
    return worst


def conv_loop(x, k, stride, pad):
    """Direct nested-loop cross-correlation."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    sh, sw = stride
    ph, pw = pad
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin):
                        for di in range(kh):
                            for dj in range(kw):
                                r, s = i * sh + di - ph, j * sw + dj - pw
                                if 0 <= r < h and 0 <= s < w:
                                    acc += x[b, c, r, s] * k[o, c, di, dj]
                    out[b, o, i, j] = acc
    return out


def _leaf(rng, *shape, scale=1.0):
    return Tensor(scale * rng.normal(size=shape), requires_grad=True)


# one closure per differentiable op; each returns (loss builder, leaves)
def _cases():
    def conv(rng):
        x, k, b = _leaf(rng, 2, 2, 5, 4), _leaf(rng, 3, 2, 3, 2), _leaf(rng, 3)
        w = rng.normal(size=(2, 3, 3, 3))
        return (lambda: T.tsum(T.mul(T.conv2d(x, k, b, stride=(2, 1), padding=(1, 0)), w))), [x, k, b]

    def pad_edge(rng):
        x = _leaf(rng, 1, 2, 3, 4)
        w = rng.normal(size=(1, 2, 7, 6))
        return (lambda: T.tsum(T.mul(T.pad_edge(x, (2, 1)), w))), [x]

    def maxpool(rng):
        x = _leaf(rng, 1, 2, 6, 5)
        w = rng.normal(size=(1, 2, 3, 2))
        return (lambda: T.tsum(T.mul(T.max_pool2d(x, 2, 2), w))), [x]

    def avgpool(rng):
        x = _leaf(rng, 1, 2, 5, 6)
        w = rng.normal(size=(1, 2, 4, 5))
        return (lambda: T.tsum(T.mul(T.avg_pool2d(x, 2, 1), w))), [x]

    def upsample(rng):
        x = _leaf(rng, 1, 2, 2, 3)
        w = rng.normal(size=(1, 2, 4, 6))
        return (lambda: T.tsum(T.mul(T.upsample2x_nearest(x), w))), [x]

    def matmul(rng):
        a, b, v = _leaf(rng, 3, 4), _leaf(rng, 4, 2), _leaf(rng, 3)
        return (lambda: T.tsum(T.tanh(T.add(T.matmul(v, T.matmul(a, b)), T.matmul(T.transpose(b), T.matmul(T.transpose(a), v)))))), [a, b, v]

    def add_sub_mul(rng):
        a, b, c = _leaf(rng, 3, 4), _leaf(rng, 4), _leaf(rng, 3, 1)
        return (lambda: T.tsum(T.mul(T.sub(T.add(a, b), c), T.add(a, 0.5)))), [a, b, c]

    def nonlinear(rng):
        x = _leaf(rng, 5)
        return (lambda: T.tsum(T.mul(T.exp(T.mul(x, 0.3)), T.add(T.sigmoid(x), T.tanh(x))))), [x]

    def softmax(rng):
        x = _leaf(rng, 3, 4)
        w = rng.normal(size=(3, 4))
        return (lambda: T.tsum(T.mul(T.softmax(x, axis=0), w))), [x]

    def concat_reshape(rng):
        a, b = _leaf(rng, 2, 3), _leaf(rng, 2, 2)
        w = rng.normal(size=(5, 2))
        return (lambda: T.tsum(T.mul(T.reshape(T.concat([a, b], axis=1), (5, 2)), w))), [a, b]

    def reductions(rng):
        x = _leaf(rng, 3, 4)
        return (lambda: T.tsum(T.tanh(T.mean(x, axis=0))) + T.mean(T.mul(x, x))), [x]

    def embedding_ce(rng):
        table, w = _leaf(rng, 5, 3), _leaf(rng, 4, 3)
        return (lambda: T.cross_entropy(T.matmul(w, T.embedding_lookup(table, 2)), 1)), [table, w]

    return {f.__name__: f for f in (conv, pad_edge, maxpool, avgpool, upsample, matmul, add_sub_mul,
                                     nonlinear, softmax, concat_reshape, reductions, embedding_ce)}


GRAD_CASES = _cases()


def all_strings(alphabet, max_len):
    return [s for n in range(max_len + 1) for s in product(alphabet, repeat=n)]


def bfs_distances(start, alphabet, max_len):
    """Shortest edit script by breadth-first search over single edits.

    Intermediate strings are capped at ``max_len``; some optimal script
    (deletions first, insertions last) never exceeds the longer endpoint.
    """
    dist = {start: 0}
    q = deque([start])
    while q:
        s = q.popleft()
        nbrs = []
        for i in range(len(s)):
            nbrs.append(s[:i] + s[i + 1:])
            nbrs += [s[:i] + (c,) + s[i + 1:] for c in alphabet if c != s[i]]
        if len(s) < max_len:
            nbrs += [s[:i] + (c,) + s[i:] for i in range(len(s) + 1) for c in alphabet]
        for t in nbrs:
            if t not in dist:
                dist[t] = dist[s] + 1
                q.append(t)
    return dist


def scalar_attention(a, grid, h_prev, W_a, U_a, U_f, v_a, Q, beta, coverage=True):
    """Energies and weights evaluated one scalar at a time."""
    hh, ww = grid
    L, c = a.shape
    na, q = U_f.shape
    k = Q.shape[2]
    p = k // 2
    energies = []
    for i in range(L):
        r, s = divmod(i, ww)
        f = []
        for ch in range(q):
            acc = 0.0
            for di in range(k):
                for dj in range(k):
                    rr, ss = r + di - p, s + dj - p
                    if 0 <= rr < hh and 0 <= ss < ww:
                        acc += Q[ch, 0, di, dj] * beta[rr * ww + ss]
            f.append(acc)
        e = 0.0
        for j in range(na):
            pre = sum(W_a[j, m] * h_prev[m] for m in range(len(h_prev)))
            pre += sum(U_a[j, m] * a[i, m] for m in range(c))
            if coverage:
                pre += sum(U_f[j, m] * f[m] for m in range(q))
            e += v_a[j] * math.tanh(pre)
        energies.append(e)
    mx = max(energies)
    z = sum(math.exp(e - mx) for e in energies)
    return energies, [math.exp(e - mx) / z for e in energies]


def annotations_for(a, grid, params, prefix="dec.att1"):
    from hmer.decoder import Annotations

    at = Tensor(a)
    proj = T.matmul(at, T.transpose(params[f"{prefix}.U_a"]))
    return Annotations(at, proj, *grid)


# acceptance verdicts, printed in the terminal summary by conftest
ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line
