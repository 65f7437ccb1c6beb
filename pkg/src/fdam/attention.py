"""Multi-head self-attention with materialized attention maps.

Features are ``C x H x W``; tokens are flattened row-major, so spatial location
``(p, q)`` is token ``p * W + q``. Each row of an attention map, reshaped to
``H x W``, is the spatial filter that produces one output location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Rng, softmax_rows


@dataclass(frozen=True)
class AttentionConfig:
    heads: int
    channels: int
    height: int
    width: int

    def __post_init__(self):
        if self.heads < 1 or self.channels % self.heads:
            raise ValueError(f"channels ({self.channels}) must be divisible by heads ({self.heads})")
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be positive")

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def tokens(self) -> int:
        return self.height * self.width


@dataclass
class MhsaParams:
    """Projection weights (``C x C``, applied as ``W @ x``) and biases (``C``)."""

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray

    def check(self, cfg: AttentionConfig) -> None:
        c = cfg.channels
        for name in ("wq", "wk", "wv", "wo"):
            if getattr(self, name).shape != (c, c):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected ({c}, {c})")
        for name in ("bq", "bk", "bv", "bo"):
            if getattr(self, name).shape != (c,):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected ({c},)")

    @classmethod
    def random(cls, cfg: AttentionConfig, rng: Rng, qk_scale: float = 1.0, shared_qk: bool = False) -> "MhsaParams":
        """Gaussian weights with std ``1/sqrt(C)``, zero biases.

        ``qk_scale`` multiplies the query and key weights (so logits scale by its
        square); ``shared_qk`` reuses the query projection for keys.
        """
        c = cfg.channels
        std = 1.0 / np.sqrt(c)
        wq = rng.normal((c, c), std * qk_scale)
        wk = wq.copy() if shared_qk else rng.normal((c, c), std * qk_scale)
        wv = rng.normal((c, c), std)
        wo = rng.normal((c, c), std)
        z = np.zeros(c)
        return cls(wq, z.copy(), wk, z.copy(), wv, z.copy(), wo, z.copy())


def _tokens(x: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.channels, cfg.height, cfg.width):
        raise ValueError(f"input shape {x.shape} does not match config {(cfg.channels, cfg.height, cfg.width)}")
    return x.reshape(cfg.channels, cfg.tokens)


def project(x, w, b, cfg: AttentionConfig) -> np.ndarray:
    """Linear projection split into heads: ``heads x head_dim x HW``."""
    t = _tokens(x, cfg)
    y = w @ t + b[:, None]
    return y.reshape(cfg.heads, cfg.head_dim, cfg.tokens)


def compute_attention(x, params: MhsaParams, cfg: AttentionConfig) -> np.ndarray:
    """Row-stochastic maps ``heads x HW x HW`` = softmax(Q^T K / sqrt(C / heads))."""
    params.check(cfg)
    q = project(x, params.wq, params.bq, cfg)
    k = project(x, params.wk, params.bk, cfg)
    logits = np.einsum("hdp,hdj->hpj", q, k) / np.sqrt(cfg.head_dim)
    return softmax_rows(logits)


def apply_attention(maps, v) -> np.ndarray:
    """``out[h, :, p] = sum_j maps[h, p, j] * v[h, :, j]``."""
    maps = np.asarray(maps, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if maps.ndim != 3 or v.ndim != 3 or maps.shape[0] != v.shape[0] or maps.shape[2] != v.shape[2]:
        raise ValueError(f"incompatible maps {maps.shape} and values {v.shape}")
    return np.einsum("hpj,hdj->hdp", maps, v)


def extract_query_filter(maps, head: int, p: int, q: int, height: int, width: int) -> np.ndarray:
    """The filter ``A_{p,q}`` of one head as an ``H x W`` grid."""
    maps = np.asarray(maps)
    if not 0 <= head < maps.shape[0]:
        raise IndexError(f"head {head} out of range [0, {maps.shape[0]})")
    if not (0 <= p < height and 0 <= q < width):
        raise IndexError(f"query location ({p}, {q}) outside {height}x{width} grid")
    if maps.shape[1:] != (height * width, height * width):
        raise ValueError(f"maps shape {maps.shape} does not match a {height}x{width} grid")
    return maps[head, p * width + q].reshape(height, width)


def output_projection(heads_out, params: MhsaParams, cfg: AttentionConfig) -> np.ndarray:
    y = params.wo @ np.asarray(heads_out).reshape(cfg.channels, cfg.tokens) + params.bo[:, None]
    return y.reshape(cfg.channels, cfg.height, cfg.width)


def mhsa_forward(x, params: MhsaParams, cfg: AttentionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head attention output ``C x H x W`` and the maps used (no residual, no norm)."""
    maps = compute_attention(x, params, cfg)
    v = project(x, params.wv, params.bv, cfg)
    return output_projection(apply_attention(maps, v), params, cfg), maps


def positional_embedding(channels: int, height: int, width: int) -> np.ndarray:
    """Fixed 2D sine-cosine embedding ``C x H x W`` (C divisible by 4).

    A quarter of the channels carries sin/cos of the row index and a quarter
    each of the column index, over geometrically spaced frequencies.
    """
    if channels % 4:
        raise ValueError("positional embedding needs channels divisible by 4")
    d = channels // 4
    omega = 1.0 / 10000.0 ** (np.arange(d) / d)
    rows = np.arange(height)[:, None] * omega  # H x d
    cols = np.arange(width)[:, None] * omega  # W x d
    pe = np.empty((channels, height, width))
    pe[0:d] = np.sin(rows).T[:, :, None]
    pe[d : 2 * d] = np.cos(rows).T[:, :, None]
    pe[2 * d : 3 * d] = np.sin(cols).T[:, None, :]
    pe[3 * d :] = np.cos(cols).T[:, None, :]
    return pe
