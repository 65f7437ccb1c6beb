"""Attention inversion (AttInv) and frequency dynamic scaling (FreqScale).

AttInv turns every low-pass attention filter into its complementary high-pass
filter and mixes the two with per-location weights predicted from the input.
FreqScale multiplies each channel's spectrum by a band-wise weight grid that is
assembled from static bases and input-dependent coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Rng, conv2d, dft2, fftshift2, idft2, ifftshift2, mlp_forward, sigmoid


@dataclass
class CombinationField:
    """Per-head, per-location mixing weights, each ``heads x H x W`` in (0, 1)."""

    low: np.ndarray
    high: np.ndarray


@dataclass
class AttInvParams:
    """Convolution ``C -> 2 * heads`` channels; the first ``heads`` feed the low-pass weight."""

    kernel: np.ndarray
    bias: np.ndarray

    @property
    def heads(self) -> int:
        return self.kernel.shape[0] // 2

    @classmethod
    def init(cls, channels: int, heads: int, rng: Rng, kernel_size: int = 3,
             kernel_std: float = 0.02, low_bias: float = 2.0, high_bias: float = -2.0) -> "AttInvParams":
        if kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        kernel = rng.normal((2 * heads, channels, kernel_size, kernel_size), kernel_std)
        bias = np.concatenate([np.full(heads, low_bias), np.full(heads, high_bias)])
        return cls(kernel, bias)


@dataclass
class FreqScaleParams:
    """``static`` is ``n x (C/g) x b x b``; ``mlp`` maps the pooled C-vector to ``g * n`` values."""

    static: np.ndarray
    mlp: list
    groups: int

    @property
    def bases(self) -> int:
        return self.static.shape[0]

    @property
    def band_grid(self) -> int:
        return self.static.shape[-1]

    @classmethod
    def init(cls, channels: int, rng: Rng, groups: int = 4, bases: int = 4, band_grid: int = 4,
             static_std: float = 0.0) -> "FreqScaleParams":
        """Zero static bases (identity scaling) unless ``static_std`` > 0; MLP is ``C -> C/4 -> g*n``."""
        if channels % groups:
            raise ValueError(f"channels ({channels}) must be divisible by groups ({groups})")
        hidden = max(1, channels // 4)
        static = rng.normal((bases, channels // groups, band_grid, band_grid), static_std) if static_std > 0 \
            else np.zeros((bases, channels // groups, band_grid, band_grid))
        mlp = [
            (rng.normal((hidden, channels), 1.0 / np.sqrt(channels)), np.zeros(hidden), "tanh"),
            (rng.normal((groups * bases, hidden), 1.0 / np.sqrt(hidden)), np.zeros(groups * bases), "tanh"),
        ]
        return cls(static, mlp, groups)


def invert_attention(maps) -> np.ndarray:
    """High-pass complement ``I - A`` of every head's map.

    Per filter this is ``e_{p,q} - A_{p,q}``: the all-pass response is taken to be
    the spectrum of the impulse at the query location, so the two spectra add up
    to a unit-magnitude response at every frequency. Rows sum to zero.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
        raise ValueError(f"expected heads x N x N maps, got {maps.shape}")
    return np.eye(maps.shape[1])[None] - maps


def predict_combination(x, params: AttInvParams) -> CombinationField:
    s = sigmoid(conv2d(x, params.kernel, params.bias))
    h = params.heads
    return CombinationField(low=s[:h], high=s[h:])


def attinv_combine(maps, inverted, field: CombinationField) -> np.ndarray:
    """Row ``(p, q)`` of head ``h`` becomes ``low[h,p,q] * A_row + high[h,p,q] * Ahat_row``."""
    maps = np.asarray(maps, dtype=np.float64)
    inverted = np.asarray(inverted, dtype=np.float64)
    if maps.shape != inverted.shape:
        raise ValueError(f"maps {maps.shape} and inverted {inverted.shape} differ")
    heads, n, _ = maps.shape
    if np.size(field.low) != heads * n or np.size(field.high) != heads * n:
        raise ValueError(f"combination field does not match {heads} heads x {n} locations")
    low = np.reshape(field.low, (heads, n, 1))
    high = np.reshape(field.high, (heads, n, 1))
    return low * maps + high * inverted


def freqscale_coefficients(x, params: FreqScaleParams) -> np.ndarray:
    """Dynamic coefficients ``g x n`` from the spatially pooled input."""
    pooled = np.asarray(x, dtype=np.float64).mean(axis=(1, 2))
    d = mlp_forward(pooled, params.mlp)
    if d.shape != (params.groups * params.bases,):
        raise ValueError(f"MLP produced {d.shape}, expected ({params.groups * params.bases},)")
    return d.reshape(params.groups, params.bases)


def freqscale_weights(x, params: FreqScaleParams) -> np.ndarray:
    """Band weights ``C x b x b``: channel block ``j`` is ``1 + sum_i D[j, i] * W_i``."""
    x = np.asarray(x, dtype=np.float64)
    c = x.shape[0]
    if c % params.groups or c // params.groups != params.static.shape[1]:
        raise ValueError(f"{c} channels incompatible with {params.groups} groups of {params.static.shape[1]}")
    d = freqscale_coefficients(x, params)
    blocks = 1.0 + np.einsum("gn,ncij->gcij", d, params.static)
    return blocks.reshape(c, params.band_grid, params.band_grid)


def upsample_band_weights(weights, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour upsampling of ``C x b x b`` band weights onto the centered
    ``H x W`` spectrum, then symmetrized so ``w(u, v) = w(-u, -v)`` about DC."""
    weights = np.asarray(weights, dtype=np.float64)
    b = weights.shape[-1]
    if weights.shape[-2] != b:
        raise ValueError("band grid must be square")
    if b > min(height, width):
        raise ValueError(f"band grid {b} larger than feature grid {height}x{width}")
    rows = (np.arange(height) * b) // height
    cols = (np.arange(width) * b) // width
    up = weights[..., rows[:, None], cols[None, :]]
    # centered index k holds frequency k - H//2; its mirror sits at 2*(H//2) - k
    mr = (2 * (height // 2) - np.arange(height)) % height
    mc = (2 * (width // 2) - np.arange(width)) % width
    return 0.5 * (up + up[..., mr[:, None], mc[None, :]])


def freqscale_apply(x, weights, return_imag: bool = False):
    """Scale each channel's spectrum by its upsampled band weights.

    With ``return_imag`` the largest imaginary magnitude discarded when taking
    the real part is returned as well.
    """
    x = np.asarray(x, dtype=np.float64)
    _, h, w = x.shape
    scale = upsample_band_weights(weights, h, w)
    spec = fftshift2(dft2(x)) * scale
    out = idft2(ifftshift2(spec))
    if return_imag:
        return out.real.copy(), float(np.max(np.abs(out.imag)))
    return out.real.copy()
