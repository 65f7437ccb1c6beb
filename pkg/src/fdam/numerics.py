"""Dense numerics shared by every other module.

Tensors are plain ``numpy`` arrays: ``float64`` for real data and ``complex128``
for spectra. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

# one-sided Jacobi settings
JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine hits its iteration cap."""


def _as_grid(x) -> np.ndarray:
    a = np.asarray(x)
    if a.ndim < 2 or a.shape[-1] < 1 or a.shape[-2] < 1:
        raise ValueError(f"expected an array with trailing H x W axes, got shape {a.shape}")
    if np.iscomplexobj(a):
        return a.astype(np.complex128, copy=False)
    return a.astype(np.float64, copy=False)


def dft2(x) -> np.ndarray:
    """Unnormalized forward 2D DFT over the last two axes.

    ``F(u, v) = sum_{m,n} x(m, n) exp(-2 pi i (u m / H + v n / W))`` so the DC bin
    equals the sum of the input. Leading axes are treated as a batch.
    """
    return np.fft.fft2(_as_grid(x), axes=(-2, -1))


def idft2(f) -> np.ndarray:
    """Inverse of :func:`dft2`, carrying the ``1 / (H W)`` factor."""
    return np.fft.ifft2(np.asarray(f, dtype=np.complex128), axes=(-2, -1))


def fftshift2(f) -> np.ndarray:
    """Cyclic shift by ``(H // 2, W // 2)`` so DC lands at the grid center."""
    return np.fft.fftshift(np.asarray(f), axes=(-2, -1))


def ifftshift2(f) -> np.ndarray:
    """Exact inverse of :func:`fftshift2` (differs from it only for odd extents)."""
    return np.fft.ifftshift(np.asarray(f), axes=(-2, -1))


def signed_frequencies(n: int) -> np.ndarray:
    """Signed integer frequency of each standard-layout DFT bin, e.g. n=4 -> [0, 1, -2, -1]."""
    return np.rint(np.fft.fftfreq(n) * n).astype(np.int64)


def softmax_rows(m) -> np.ndarray:
    """Softmax along the last axis, stabilized by subtracting the row max."""
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _round_robin(n: int) -> list[list[tuple[int, int]]]:
    """Tournament schedule: n-1 rounds (n even) of disjoint column pairs covering all pairs."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a >= 0 and b >= 0:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def singular_values(m) -> np.ndarray:
    """Singular values of a real matrix, descending, by one-sided (Hestenes) Jacobi.

    Columns are orthogonalized pairwise with plane rotations until every pair
    satisfies ``|a_i . a_j| <= 1e-12 * |a_i| |a_j|``; the singular values are then
    the column norms. Columns whose norm has dropped to roundoff level relative to
    the whole matrix count as zero and are not rotated further (otherwise rank
    deficient input would chase noise forever). Pairs are visited in a fixed round-robin order, with each
    round's disjoint rotations applied together, so the result is deterministic.
    Raises :class:`ConvergenceError` after 100 sweeps.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ValueError(f"expected a non-empty 2D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if a.shape[1] > a.shape[0]:
        a = a.T.copy()
    n = a.shape[1]
    if n == 1:
        return np.array([np.linalg.norm(a[:, 0])])
    rounds = [(np.array([p[0] for p in r]), np.array([p[1] for p in r])) for r in _round_robin(n)]
    negligible = (n * np.finfo(np.float64).eps) ** 2 * np.einsum("rk,rk->", a, a)

    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for i, j in rounds:
            ai, aj = a[:, i], a[:, j]
            alpha = np.einsum("rk,rk->k", ai, ai)
            beta = np.einsum("rk,rk->k", aj, aj)
            gamma = np.einsum("rk,rk->k", ai, aj)
            active = (np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta)) & (alpha > negligible) & (beta > negligible)
            if not active.any():
                continue
            rotated = True
            i, j = i[active], j[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ai, aj = a[:, i].copy(), a[:, j]
            a[:, i] = c * ai - s * aj
            a[:, j] = s * ai + c * aj
        if not rotated:
            return np.sort(np.linalg.norm(a, axis=0))[::-1]
    raise ConvergenceError(f"one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")


def conv2d(x, kernel, bias) -> np.ndarray:
    """Same-size 2D cross-correlation with zero padding.

    Shapes: ``x`` is ``C_in x H x W``, ``kernel`` is ``C_out x C_in x k x k`` with
    ``k`` odd, ``bias`` is ``C_out``.
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects x (C,H,W) and kernel (O,C,k,k); got {x.shape}, {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if c_in != x.shape[0]:
        raise ValueError(f"kernel expects {c_in} input channels, input has {x.shape[0]}")
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {kh}x{kw}")
    if bias.shape != (c_out,):
        raise ValueError(f"bias must have shape ({c_out},), got {bias.shape}")
    r = kh // 2
    h, w = x.shape[1:]
    xp = np.pad(x, ((0, 0), (r, r), (r, r)))
    out = np.broadcast_to(bias[:, None, None], (c_out, h, w)).copy()
    for di in range(kh):
        for dj in range(kw):
            out += np.einsum("oc,chw->ohw", kernel[:, :, di, dj], xp[:, di : di + h, dj : dj + w])
    return out


ACTIVATIONS = {"tanh": np.tanh, "identity": lambda z: z}

Layer = tuple  # (weight [D_out x D_in], bias [D_out], activation name)


def mlp_forward(x, layers: Sequence[Layer]) -> np.ndarray:
    """Chain of ``activation(W @ x + b)`` layers."""
    h = np.asarray(x, dtype=np.float64)
    for k, (weight, bias, act) in enumerate(layers):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.ndim != 2 or weight.shape[1] != h.shape[0]:
            raise ValueError(f"layer {k}: weight shape {weight.shape} does not accept input of size {h.shape[0]}")
        if np.shape(bias) != (weight.shape[0],):
            raise ValueError(f"layer {k}: bias shape {np.shape(bias)} != ({weight.shape[0]},)")
        if act not in ACTIVATIONS:
            raise ValueError(f"layer {k}: unknown activation {act!r}")
        h = ACTIVATIONS[act](weight @ h + bias)
    return h


class Rng:
    """Seeded random stream used everywhere in the package.

    Raw values come from the PCG64 bit generator (its 64-bit output stream is
    stable across numpy releases). Derived variates are computed here rather than
    through ``numpy.random.Generator`` methods, whose algorithms may change:

    * uniform in [0, 1): top 53 bits of a raw draw times 2**-53
    * standard normal: Box-Muller on pairs of uniforms, ``u1`` mapped to (0, 1]
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._bits = np.random.PCG64(self.seed)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n).astype(np.uint64)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        n = int(np.prod(size)) if size is not None else 1
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = low + (high - low) * u
        return u.reshape(size) if size is not None else float(u[0])

    def normal(self, size=None, scale: float = 1.0):
        n = int(np.prod(size)) if size is not None else 1
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n] * scale
        return z.reshape(size) if size is not None else float(z[0])

    def spawn(self, key: int) -> "Rng":
        """Independent child stream, a fixed function of (seed, key)."""
        mixed = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32, int(key)])
        return Rng(int(mixed.generate_state(1, np.uint64)[0]))
