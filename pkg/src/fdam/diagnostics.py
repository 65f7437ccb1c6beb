"""Spectral and representation diagnostics for attention filters and features.

Spectra are kept in the standard DFT layout (DC at index 0). Radii are measured
on signed frequencies, which is the same as measuring on the centered layout:
``rho = max(|u| / (H / 2), |v| / (W / 2))`` so DC is 0 and the Nyquist corner is 1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import dft2, signed_frequencies, singular_values

DEFAULT_BANDS = 8
DEFAULT_CUTOFF = 0.5


@dataclass
class RadialProfile:
    band_edges: np.ndarray
    mean_magnitude: np.ndarray
    std_magnitude: np.ndarray
    counts: np.ndarray  # frequency bins per band; 0 marks an empty band

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0


@dataclass
class LayerDiagnostics:
    layer_index: int
    high_freq_ratio: float
    effective_rank: float
    mean_patch_cosine: float
    radial_profile: RadialProfile | None = None


def chebyshev_radius(height: int, width: int) -> np.ndarray:
    """Normalized Chebyshev radius of every bin, standard DFT layout."""
    u = np.abs(signed_frequencies(height)) / (height / 2.0)
    v = np.abs(signed_frequencies(width)) / (width / 2.0)
    return np.maximum(u[:, None], v[None, :])


def band_index(height: int, width: int, bands: int) -> np.ndarray:
    """Band of every bin for ``bands`` equal-width radius shells over [0, 1]; rho = 1 joins the last."""
    return np.minimum((chebyshev_radius(height, width) * bands).astype(np.int64), bands - 1)


def filter_spectrum(filt) -> tuple[np.ndarray, np.ndarray]:
    """Spectrum of a spatial filter (or a batch of them) and its magnitude."""
    spec = dft2(filt)
    return spec, np.abs(spec)


def radial_profile(magnitudes, bands: int = DEFAULT_BANDS) -> RadialProfile:
    """Per-band mean magnitude and its spread across filters.

    ``magnitudes`` is one ``H x W`` grid or a stack ``K x H x W`` (standard layout).
    Each filter is reduced to its per-band mean; the profile reports the mean and
    the standard deviation of those values across the ``K`` filters.
    """
    if bands < 2:
        raise ValueError("bands must be at least 2")
    mags = np.asarray(magnitudes, dtype=np.float64)
    if mags.ndim == 2:
        mags = mags[None]
    h, w = mags.shape[-2:]
    idx = band_index(h, w, bands).ravel()
    counts = np.bincount(idx, minlength=bands)
    flat = mags.reshape(mags.shape[0], -1)
    sums = np.zeros((flat.shape[0], bands))
    for k in range(bands):
        if counts[k]:
            sums[:, k] = flat[:, idx == k].sum(axis=1)
    per_filter = sums / np.maximum(counts, 1)
    return RadialProfile(
        band_edges=np.linspace(0.0, 1.0, bands + 1),
        mean_magnitude=per_filter.mean(axis=0),
        std_magnitude=per_filter.std(axis=0),
        counts=counts,
    )


def high_freq_ratio(x, cutoff: float = DEFAULT_CUTOFF) -> float:
    """Share of spectral energy at Chebyshev radius >= ``cutoff`` (channels pooled, DC included in the total)."""
    if not 0.0 < cutoff < 1.0:
        raise ValueError(f"cutoff must lie in (0, 1), got {cutoff}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    energy = (np.abs(dft2(x)) ** 2).sum(axis=0)
    total = energy.sum()
    if total == 0.0:
        raise ValueError("high-frequency ratio undefined for a zero-energy input")
    mask = chebyshev_radius(*x.shape[-2:]) >= cutoff
    return float(energy[mask].sum() / total)


def effective_rank(m) -> float:
    """``exp`` of the Shannon entropy of the normalized singular values."""
    s = singular_values(m)
    total = s.sum()
    if total == 0.0:
        raise ValueError("effective rank undefined for the zero matrix")
    p = s[s > 0] / total
    return float(np.exp(-np.sum(p * np.log(p))))


def patch_cosine_similarity(tokens) -> float:
    """Mean cosine similarity over all unordered pairs of rows."""
    t = np.asarray(tokens, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] < 2:
        raise ValueError(f"need an N x D matrix with N >= 2, got shape {t.shape}")
    norms = np.linalg.norm(t, axis=1)
    if np.any(norms == 0):
        raise ValueError("cosine similarity undefined for zero rows")
    u = t / norms[:, None]
    g = u @ u.T
    n = t.shape[0]
    iu = np.triu_indices(n, k=1)
    return float(g[iu].mean())


def composed_response(layer_responses: Sequence) -> np.ndarray:
    """Elementwise product of per-layer frequency responses."""
    if len(layer_responses) == 0:
        raise ValueError("need at least one layer response")
    out = np.ones_like(np.asarray(layer_responses[0], dtype=np.complex128))
    for k, r in enumerate(layer_responses):
        r = np.asarray(r)
        if r.shape != out.shape:
            raise ValueError(f"response {k} has shape {r.shape}, expected {out.shape}")
        out = out * r
    return out


def feature_tokens(x) -> np.ndarray:
    """``C x H x W`` features as an ``HW x C`` token matrix."""
    x = np.asarray(x)
    return x.reshape(x.shape[0], -1).T


def feature_diagnostics(x, layer_index: int, cutoff: float = DEFAULT_CUTOFF,
                        profile: RadialProfile | None = None) -> LayerDiagnostics:
    tokens = feature_tokens(x)
    return LayerDiagnostics(
        layer_index=layer_index,
        high_freq_ratio=high_freq_ratio(x, cutoff),
        effective_rank=effective_rank(tokens),
        mean_patch_cosine=patch_cosine_similarity(tokens),
        radial_profile=profile,
    )


def diagnostics_header(bands: int) -> list[str]:
    return (["layer", "high_freq_ratio", "effective_rank", "mean_patch_cosine"]
            + [f"band_{k}_mean" for k in range(bands)] + [f"band_{k}_std" for k in range(bands)])


def diagnostics_row(d: LayerDiagnostics, bands: int) -> list[str]:
    row = [str(d.layer_index), repr(d.high_freq_ratio), repr(d.effective_rank), repr(d.mean_patch_cosine)]
    prof = d.radial_profile
    if prof is None:
        return row + [""] * (2 * bands)
    means = ["" if prof.counts[k] == 0 else repr(float(prof.mean_magnitude[k])) for k in range(bands)]
    stds = ["" if prof.counts[k] == 0 else repr(float(prof.std_magnitude[k])) for k in range(bands)]
    return row + means + stds


def diagnostics_csv(rows: Sequence[LayerDiagnostics], bands: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(diagnostics_header(bands))
    for d in rows:
        writer.writerow(diagnostics_row(d, bands))
    return buf.getvalue()


def matrix_csv(m) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(m, dtype=np.float64):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def profile_csv(prof: RadialProfile) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["band", "rho_low", "rho_high", "bins", "mean_magnitude", "std_magnitude"])
    for k in range(len(prof.counts)):
        if prof.counts[k] == 0:
            continue
        writer.writerow([k, repr(float(prof.band_edges[k])), repr(float(prof.band_edges[k + 1])),
                         int(prof.counts[k]), repr(float(prof.mean_magnitude[k])), repr(float(prof.std_magnitude[k]))])
    return buf.getvalue()


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        return np.array([[float(v) for v in row] for row in csv.reader(f)])
