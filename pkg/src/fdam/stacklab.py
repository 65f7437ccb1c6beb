"""Attention stacks and frequency-response fitting.

Two experiments live here. ``run_forward`` pushes features through a stack of
plain or modulated attention layers and records per-layer diagnostics. ``fit``
takes the attention spectra of a stack at one query location and tunes one
(low, high) scalar pair per layer so that the composed response

    R(u, v) = prod_i [ low_i * F(A_i)(u, v) + high_i * F(Ahat_i)(u, v) ]

matches a target magnitude. The baseline only has a positive gain per layer,
``exp(g_i) * F(A_i)``, and cannot leave the low-pass cone.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import attention as att
from . import diagnostics as diag
from .modulation import (
    AttInvParams,
    CombinationField,
    FreqScaleParams,
    attinv_combine,
    freqscale_apply,
    freqscale_weights,
    invert_attention,
    predict_combination,
)
from .numerics import Rng, dft2, fftshift2, ifftshift2

MODES = ("plain", "attinv", "attinv+freqscale")
FIT_MODES = ("baseline", "attinv")
TARGET_KINDS = ("lowpass", "highpass", "bandpass", "bandstop", "random")
RANDOM_TARGET_SHELLS = 8


class FitAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class StackConfig:
    layers: int = 12
    heads: int = 4
    channels: int = 64
    height: int = 14
    width: int = 14
    mode: str = "plain"
    seed: int = 0
    residual: bool = True
    qk_scale: float = 1.0
    shared_qk: bool = False
    pos_embed: float = 0.0
    low_bias: float = 2.0
    high_bias: float = -2.0
    comb_kernel_std: float = 0.02
    groups: int = 4
    bases: int = 4
    band_grid: int = 4
    freqscale_static_std: float = 0.0

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.attention  # validates heads/channels/extent

    @property
    def attention(self) -> att.AttentionConfig:
        return att.AttentionConfig(self.heads, self.channels, self.height, self.width)


@dataclass
class LayerParams:
    mhsa: att.MhsaParams
    attinv: AttInvParams | None = None
    freqscale: FreqScaleParams | None = None


@dataclass
class Stack:
    cfg: StackConfig
    layers: list[LayerParams]


@dataclass
class LayerRecord:
    maps: np.ndarray  # effective (possibly modulated) maps, heads x HW x HW
    field: CombinationField | None
    band_weights: np.ndarray | None  # C x b x b


@dataclass
class ForwardResult:
    diagnostics: list[diag.LayerDiagnostics]  # entry 0 describes the input
    features: np.ndarray
    records: list[LayerRecord]


def build_stack(cfg: StackConfig) -> Stack:
    """Seeded random parameters for every layer; FDAM parts only where the mode needs them."""
    root = Rng(cfg.seed)
    acfg = cfg.attention
    layers = []
    for i in range(cfg.layers):
        rng = root.spawn(i)
        mhsa = att.MhsaParams.random(acfg, rng.spawn(0), cfg.qk_scale, cfg.shared_qk)
        lp = LayerParams(mhsa)
        if cfg.mode != "plain":
            lp.attinv = AttInvParams.init(cfg.channels, cfg.heads, rng.spawn(1), 3, cfg.comb_kernel_std,
                                          cfg.low_bias, cfg.high_bias)
        if cfg.mode == "attinv+freqscale":
            if cfg.band_grid > min(cfg.height, cfg.width):
                raise ValueError(f"band_grid {cfg.band_grid} exceeds feature grid {cfg.height}x{cfg.width}")
            lp.freqscale = FreqScaleParams.init(cfg.channels, rng.spawn(2), cfg.groups, cfg.bases,
                                                cfg.band_grid, cfg.freqscale_static_std)
        layers.append(lp)
    return Stack(cfg, layers)


def white_noise(cfg: StackConfig, seed: int | None = None) -> np.ndarray:
    """Standard-normal ``C x H x W`` input drawn from its own stream."""
    rng = Rng(cfg.seed if seed is None else seed).spawn(2**32)
    return rng.normal((cfg.channels, cfg.height, cfg.width))


def layer_forward(x, lp: LayerParams, cfg: StackConfig) -> tuple[np.ndarray, LayerRecord]:
    acfg = cfg.attention
    maps = att.compute_attention(x, lp.mhsa, acfg)
    fld = None
    if lp.attinv is not None:
        fld = predict_combination(x, lp.attinv)
        maps = attinv_combine(maps, invert_attention(maps), fld)
    v = att.project(x, lp.mhsa.wv, lp.mhsa.bv, acfg)
    y = att.output_projection(att.apply_attention(maps, v), lp.mhsa, acfg)
    weights = None
    if lp.freqscale is not None:
        weights = freqscale_weights(y, lp.freqscale)
        y = freqscale_apply(y, weights)
    out = x + y if cfg.residual else y
    return out, LayerRecord(maps, fld, weights)


def attention_profile(maps, height: int, width: int, bands: int) -> diag.RadialProfile:
    filters = np.asarray(maps).reshape(-1, height, width)
    return diag.radial_profile(diag.filter_spectrum(filters)[1], bands)


def run_forward(stack: Stack, x0, bands: int = diag.DEFAULT_BANDS, cutoff: float = diag.DEFAULT_CUTOFF,
                keep_records: bool = False) -> ForwardResult:
    """Diagnostics for the input (entry 0) and after every layer (entries 1..L)."""
    cfg = stack.cfg
    x = np.asarray(x0, dtype=np.float64)
    if x.shape != (cfg.channels, cfg.height, cfg.width):
        raise ValueError(f"input shape {x.shape} does not match stack {(cfg.channels, cfg.height, cfg.width)}")
    if cfg.pos_embed:
        x = x + cfg.pos_embed * att.positional_embedding(cfg.channels, cfg.height, cfg.width)
    out = [diag.feature_diagnostics(x, 0, cutoff)]
    records = []
    for i, lp in enumerate(stack.layers, start=1):
        x, rec = layer_forward(x, lp, cfg)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite features after layer {i}")
        prof = attention_profile(rec.maps, cfg.height, cfg.width, bands)
        out.append(diag.feature_diagnostics(x, i, cutoff, prof))
        if keep_records:
            records.append(rec)
    return ForwardResult(out, x, records)


# ---------------------------------------------------------------------------
# response fitting


@dataclass
class FitTarget:
    kind: str
    magnitude: np.ndarray  # centered layout
    cutoffs: tuple
    seed: int | None = None


@dataclass
class FitParams:
    low: np.ndarray
    high: np.ndarray

    def flat(self) -> np.ndarray:
        return np.stack([self.low, self.high], axis=1).ravel()

    @classmethod
    def from_flat(cls, v) -> "FitParams":
        v = np.asarray(v, dtype=np.float64).reshape(-1, 2)
        return cls(v[:, 0].copy(), v[:, 1].copy())


@dataclass
class FitSettings:
    max_iters: int = 2000
    initial_step: float = 0.1
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    min_step: float = 1e-16
    init_low: float = 1.0
    init_high: float = 1.0
    init_log_gain: float = 0.0


@dataclass
class FitReport:
    mode: str
    target: str
    final_loss: float
    loss_trace: list
    params: FitParams
    iterations: int
    stop_reason: str
    grad_check_max_rel_err: float
    wall_seconds: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "mode": self.mode,
            "target": self.target,
            "final_loss": self.final_loss,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "grad_check_max_rel_err": self.grad_check_max_rel_err,
            "params": {"low": self.params.low.tolist(), "high": self.params.high.tolist()},
            "loss_trace": list(self.loss_trace),
        }
        if include_timing:
            d["wall_seconds"] = self.wall_seconds
        return d


def build_target(kind: str, height: int, width: int, cutoffs=None, seed: int = 0) -> FitTarget:
    """Target magnitude on the centered grid.

    Defaults: cutoff 0.5 for low/highpass, (0.25, 0.75) for band kinds. ``random``
    draws one uniform [0, 1) level per Chebyshev shell (8 shells) from ``seed``.
    """
    rho = fftshift2(diag.chebyshev_radius(height, width))
    if kind in ("lowpass", "highpass"):
        c = 0.5 if cutoffs is None else float(np.atleast_1d(cutoffs)[0])
        if not 0 < c < 1:
            raise ValueError(f"cutoff must lie in (0, 1), got {c}")
        mag = (rho >= c) if kind == "highpass" else (rho < c)
        return FitTarget(kind, mag.astype(np.float64), (c,))
    if kind in ("bandpass", "bandstop"):
        lo, hi = (0.25, 0.75) if cutoffs is None else map(float, cutoffs)
        if not 0 < lo < hi < 1:
            raise ValueError(f"band cutoffs must satisfy 0 < low < high < 1, got ({lo}, {hi})")
        band = (rho >= lo) & (rho < hi)
        mag = band if kind == "bandpass" else ~band
        return FitTarget(kind, mag.astype(np.float64), (lo, hi))
    if kind == "random":
        levels = Rng(seed).uniform(RANDOM_TARGET_SHELLS)
        shell = np.minimum((rho * RANDOM_TARGET_SHELLS).astype(np.int64), RANDOM_TARGET_SHELLS - 1)
        return FitTarget(kind, levels[shell], (), seed)
    raise ValueError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")


def query_spectra(layer_maps, height: int, width: int, query=None, head: int = 0) -> list:
    """``(F(A_i), F(Ahat_i))`` at one query location for each layer's maps."""
    p, q = (height // 2, width // 2) if query is None else query
    out = []
    for maps in layer_maps:
        a = att.extract_query_filter(maps, head, p, q, height, width)
        imp = np.zeros((height, width))
        imp[p, q] = 1.0
        fa = dft2(a)
        out.append((fa, dft2(imp) - fa))
    return out


def stack_spectra(stack: Stack, x0, query=None, head: int = 0) -> list:
    """Plain-attention spectra of every layer of ``stack`` driven by ``x0``."""
    cfg = stack.cfg
    x = np.asarray(x0, dtype=np.float64)
    if cfg.pos_embed:
        x = x + cfg.pos_embed * att.positional_embedding(cfg.channels, cfg.height, cfg.width)
    maps = []
    for lp in stack.layers:
        maps.append(att.compute_attention(x, lp.mhsa, cfg.attention))
        x, _ = layer_forward(x, LayerParams(lp.mhsa), cfg)
    return query_spectra(maps, cfg.height, cfg.width, query, head)


def _factors(params: FitParams, spectra, mode: str):
    fa = np.stack([s[0] for s in spectra])
    fh = np.stack([s[1] for s in spectra])
    if len(params.low) != len(spectra):
        raise ValueError(f"{len(params.low)} parameter pairs for {len(spectra)} layers")
    if mode == "baseline":
        gain = np.exp(params.low)[:, None, None]
        return gain * fa, fa, fh
    if mode == "attinv":
        return params.low[:, None, None] * fa + params.high[:, None, None] * fh, fa, fh
    raise ValueError(f"unknown fit mode {mode!r}")


def composed_fit_response(params: FitParams, spectra, mode: str = "attinv") -> np.ndarray:
    f, _, _ = _factors(params, spectra, mode)
    return np.prod(f, axis=0)


def fit_loss(params: FitParams, spectra, target: FitTarget, mode: str = "attinv") -> float:
    """Mean squared error between ``|R|`` and the target magnitude."""
    r = composed_fit_response(params, spectra, mode)
    t = ifftshift2(target.magnitude)
    if t.shape != r.shape:
        raise ValueError(f"target shape {t.shape} does not match spectra {r.shape}")
    return float(np.mean((np.abs(r) - t) ** 2))


def fit_grad(params: FitParams, spectra, target: FitTarget, mode: str = "attinv") -> np.ndarray:
    """Analytic gradient, shape ``L x 2`` (low, high); the baseline's high column is zero.

    Uses prefix/suffix products so no factor is ever divided out. Bins with
    ``|R| < 1e-12`` contribute nothing (subgradient choice at the kink of ``|.|``).
    """
    f, fa, fh = _factors(params, spectra, mode)
    n_layers = f.shape[0]
    prefix = np.ones_like(f)
    suffix = np.ones_like(f)
    for i in range(1, n_layers):
        prefix[i] = prefix[i - 1] * f[i - 1]
        suffix[n_layers - 1 - i] = suffix[n_layers - i] * f[n_layers - i]
    others = prefix * suffix  # product of all factors except i
    r = prefix[-1] * f[-1]
    mag = np.abs(r)
    t = ifftshift2(target.magnitude)
    safe = mag >= 1e-12
    # d loss / d R (as a complex weight so that d loss = Re(w * dR))
    w = np.where(safe, 2.0 * (mag - t) * np.conj(r) / np.where(safe, mag, 1.0), 0.0) / r.size
    grad = np.zeros((n_layers, 2))
    if mode == "baseline":
        grad[:, 0] = np.real(np.sum(w * others * f, axis=(1, 2)))
    else:
        grad[:, 0] = np.real(np.sum(w * others * fa, axis=(1, 2)))
        grad[:, 1] = np.real(np.sum(w * others * fh, axis=(1, 2)))
    return grad


def _loss_extended(v, spectra, target: FitTarget, mode: str) -> np.longdouble:
    """:func:`fit_loss` evaluated in ``longdouble`` for low-noise differencing."""
    p = np.asarray(v, dtype=np.longdouble).reshape(-1, 2)
    r = np.ones(spectra[0][0].shape, dtype=np.clongdouble)
    for i, (fa, fh) in enumerate(spectra):
        fa = fa.astype(np.clongdouble)
        if mode == "baseline":
            r = r * (np.exp(p[i, 0]) * fa)
        else:
            r = r * (p[i, 0] * fa + p[i, 1] * fh.astype(np.clongdouble))
    t = ifftshift2(target.magnitude).astype(np.longdouble)
    return np.mean((np.abs(r) - t) ** 2)


def finite_difference_grad(params: FitParams, spectra, target: FitTarget, mode: str = "attinv",
                           h: float = 1e-5) -> np.ndarray:
    """Central differences of the fit loss; baseline high entries stay zero.

    The loss is re-evaluated in extended precision so that rounding noise
    (about ``eps * loss / h``) stays well below the truncation error.
    """
    v = params.flat()
    g = np.zeros_like(v)
    for k in range(v.size):
        if mode == "baseline" and k % 2 == 1:
            continue
        vp, vm = v.astype(np.longdouble), v.astype(np.longdouble)
        vp[k] += h
        vm[k] -= h
        g[k] = float((_loss_extended(vp, spectra, target, mode)
                      - _loss_extended(vm, spectra, target, mode)) / (2 * h))
    return g.reshape(-1, 2)


def grad_check(params: FitParams, spectra, target: FitTarget, mode: str = "attinv",
               h: float = 1e-5, floor: float = 1e-8) -> tuple[float, float]:
    """(max relative error over components with ``|analytic| >= floor``,
    max absolute error over the rest)."""
    a = fit_grad(params, spectra, target, mode)
    n = finite_difference_grad(params, spectra, target, mode, h)
    big = np.abs(a) >= floor
    rel = float(np.max(np.abs(a - n)[big] / np.abs(a)[big])) if big.any() else 0.0
    ab = float(np.max(np.abs(a - n)[~big])) if (~big).any() else 0.0
    return rel, ab


def initial_params(n_layers: int, mode: str, settings: FitSettings) -> FitParams:
    if mode == "baseline":
        return FitParams(np.full(n_layers, settings.init_log_gain), np.zeros(n_layers))
    return FitParams(np.full(n_layers, settings.init_low), np.full(n_layers, settings.init_high))


def fit(mode: str, spectra, target: FitTarget, settings: FitSettings | None = None) -> FitReport:
    """Gradient descent with Armijo backtracking (step starts at ``initial_step``, halves on failure)."""
    if mode not in FIT_MODES:
        raise ValueError(f"fit mode must be one of {FIT_MODES}, got {mode!r}")
    settings = settings or FitSettings()
    start = time.perf_counter()
    params = initial_params(len(spectra), mode, settings)
    check_rel, _ = grad_check(params, spectra, target, mode)
    v = params.flat()

    def loss_at(vec):
        return fit_loss(FitParams.from_flat(vec), spectra, target, mode)

    loss = loss_at(v)
    if not np.isfinite(loss):
        raise FitAbort(f"non-finite loss at initialization ({mode}, {target.kind})")
    trace = [loss]
    stop = "max_iters"
    for it in range(settings.max_iters):
        g = fit_grad(FitParams.from_flat(v), spectra, target, mode).ravel()
        gg = float(g @ g)
        if np.sqrt(gg) < settings.grad_tol:
            stop = "grad_tol"
            break
        step = settings.initial_step
        while True:
            cand = v - step * g
            new = loss_at(cand)
            if not np.isfinite(new):
                raise FitAbort(f"non-finite loss at iteration {it} ({mode}, {target.kind})")
            if new <= loss - settings.armijo_c * step * gg:
                break
            step *= 0.5
            if step < settings.min_step:
                break
        if step < settings.min_step:
            stop = "line_search"
            break
        v, loss = cand, new
        trace.append(loss)
    return FitReport(
        mode=mode,
        target=target.kind,
        final_loss=loss,
        loss_trace=trace,
        params=FitParams.from_flat(v),
        iterations=len(trace) - 1,
        stop_reason=stop,
        grad_check_max_rel_err=check_rel,
        wall_seconds=time.perf_counter() - start,
    )


def report_json(report: FitReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)


def config_dict(cfg: StackConfig) -> dict:
    return asdict(cfg)
