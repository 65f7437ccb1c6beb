"""Command-line driver: ``fdam analyze``, ``fdam fit`` and ``fdam spectrum``.

Each command writes plain CSV/JSON plus raw tensor files and a ``manifest.json``
listing every output with its SHA-256. Outputs are built in memory, written,
then re-read and checked against their hashes; the exit code is 0 only if all
of that succeeded.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import stacklab as sl
from .config import ConfigError, ExperimentConfig, load_config
from .modulation import upsample_band_weights
from .numerics import fftshift2
from .tensor_io import TensorFormatError, encode_tensor, load_tensor

log = logging.getLogger("fdam")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class OutputSet:
    """Named output blobs, written and verified together."""

    def __init__(self):
        self.files: dict[str, bytes] = {}

    def add_text(self, name: str, text: str) -> None:
        self.files[name] = text.encode("utf-8")

    def add_tensor(self, name: str, a) -> None:
        self.files[name] = encode_tensor(a)

    def commit(self, out_dir: Path) -> list[dict]:
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for name in sorted(self.files):
            data = self.files[name]
            path = out_dir / name
            path.write_bytes(data)
            digest = hashlib.sha256(data).hexdigest()
            if hashlib.sha256(path.read_bytes()).hexdigest() != digest:
                raise OSError(f"verification failed for {path}")
            entries.append({"path": name, "sha256": digest})
        return entries


def write_manifest(out_dir: Path, command: str, outputs: OutputSet, seed, config_text: str | None,
                   extra: dict | None = None) -> None:
    entries = outputs.commit(out_dir)
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "seed": seed,
        "config": config_text,
        "outputs": entries,
    }
    if extra:
        manifest.update(extra)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text)
    if json.loads((out_dir / "manifest.json").read_text()) != manifest:
        raise OSError("manifest verification failed")


def _stack_config(cfg: ExperimentConfig, seed: int | None) -> sl.StackConfig:
    if seed is None:
        return cfg.stack
    return dataclasses.replace(cfg.stack, seed=seed)


def _input_features(cfg: ExperimentConfig, scfg: sl.StackConfig) -> np.ndarray:
    if cfg.diagnostics.input is None:
        return sl.white_noise(scfg)
    x = load_tensor(cfg.base_dir / cfg.diagnostics.input)
    if np.iscomplexobj(x):
        raise TensorFormatError("input features must be real (dtype f64)")
    if x.shape != (scfg.channels, scfg.height, scfg.width):
        raise TensorFormatError(f"input tensor shape {x.shape} does not match stack "
                                f"{(scfg.channels, scfg.height, scfg.width)}")
    return x


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    scfg = _stack_config(cfg, args.seed)
    bands, cutoff = cfg.diagnostics.bands, cfg.diagnostics.cutoff
    x0 = _input_features(cfg, scfg)
    stack = sl.build_stack(scfg)
    result = sl.run_forward(stack, x0, bands, cutoff, keep_records=True)

    out = OutputSet()
    out.add_text("diagnostics.csv", diag.diagnostics_csv(result.diagnostics[1:], bands))
    out.add_text("input_diagnostics.csv", diag.diagnostics_csv(result.diagnostics[:1], bands))
    out.add_tensor("features_final.fdam", result.features)
    if cfg.diagnostics.exports:
        h, w = scfg.height, scfg.width
        out.add_tensor("features_input.fdam", x0)
        centre = (h // 2) * w + w // 2
        responses = []
        for rec in result.records:
            filters = rec.maps[:, centre].reshape(-1, h, w)
            responses.append(fftshift2(diag.filter_spectrum(filters)[1].mean(axis=0)))
        out.add_tensor("layer_responses.fdam", np.stack(responses))
        if scfg.mode != "plain":
            out.add_tensor("combination_weights.fdam",
                           np.stack([np.stack([r.field.low, r.field.high]) for r in result.records]))
        if scfg.mode == "attinv+freqscale":
            out.add_tensor("freqscale_weights.fdam",
                           np.stack([upsample_band_weights(r.band_weights, h, w) for r in result.records]))
    write_manifest(Path(args.out), "analyze", out, scfg.seed, cfg.text,
                   {"seed_override": args.seed is not None})
    for d in result.diagnostics:
        log.info("layer %2d  hf_ratio=%.4f  erank=%.3f  cos=%.4f", d.layer_index, d.high_freq_ratio,
                 d.effective_rank, d.mean_patch_cosine)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    if cfg.fit is None:
        raise ConfigError("fit: missing required section for the fit command")
    scfg = _stack_config(cfg, args.seed)
    fcfg = cfg.fit
    x0 = _input_features(cfg, scfg)
    spectra = sl.stack_spectra(sl.build_stack(scfg), x0, fcfg.query, fcfg.head)
    settings = sl.FitSettings(max_iters=fcfg.max_iters, initial_step=fcfg.initial_step, grad_tol=fcfg.grad_tol,
                              init_low=fcfg.init_low, init_high=fcfg.init_high)
    target_seed = scfg.seed if fcfg.target_seed is None else fcfg.target_seed

    out = OutputSet()
    reports = []
    trace = io.StringIO()
    tw = csv.writer(trace, lineterminator="\n")
    tw.writerow(["target", "mode", "iteration", "loss"])
    for kind in fcfg.targets:
        cut = fcfg.band_cutoffs if kind in ("bandpass", "bandstop") else [fcfg.cutoff]
        target = sl.build_target(kind, scfg.height, scfg.width, None if kind == "random" else cut, target_seed)
        out.add_text(f"target_{kind}.csv", diag.matrix_csv(target.magnitude))
        for mode in sl.FIT_MODES:
            rep = sl.fit(mode, spectra, target, settings)
            log.info("%-9s %-8s loss=%.6g  iters=%d  (%s)  %.2fs", kind, mode, rep.final_loss, rep.iterations,
                     rep.stop_reason, rep.wall_seconds)
            reports.append(rep.to_dict())
            for i, v in enumerate(rep.loss_trace):
                tw.writerow([kind, mode, i, repr(v)])
            fitted = np.abs(sl.composed_fit_response(rep.params, spectra, mode))
            out.add_text(f"fitted_{kind}_{mode}.csv", diag.matrix_csv(fftshift2(fitted)))
    out.add_text("fit_reports.json", json.dumps(reports, indent=2, sort_keys=True) + "\n")
    out.add_text("loss_traces.csv", trace.getvalue())
    write_manifest(Path(args.out), "fit", out, scfg.seed, cfg.text,
                   {"seed_override": args.seed is not None, "target_seed": target_seed})
    return EXIT_OK


def spectrum_outputs(x, bands: int) -> OutputSet:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise TensorFormatError("spectrum expects a real tensor (dtype f64)")
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise TensorFormatError(f"spectrum expects rank 2 or 3, got rank {x.ndim}")
    mags = diag.filter_spectrum(x)[1]
    centred = fftshift2(mags.mean(axis=0))
    out = OutputSet()
    out.add_text("spectrum.csv", diag.matrix_csv(centred))
    out.add_tensor("spectrum.fdam", centred)
    out.add_text("radial_profile.csv", diag.profile_csv(diag.radial_profile(mags, bands)))
    return out


def cmd_spectrum(args) -> int:
    x = load_tensor(args.input)
    out = spectrum_outputs(x, args.bands)
    write_manifest(Path(args.out), "spectrum", out, None, None, {"input": Path(args.input).name})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON experiment config")
            p.add_argument("--seed", type=int, default=None, help="override stack.seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("analyze", help="per-layer diagnostics of a stack"))
    common(sub.add_parser("fit", help="fit composed responses to target filters"))
    p = sub.add_parser("spectrum", help="centered magnitude spectrum of a raw tensor file")
    p.add_argument("input")
    p.add_argument("--bands", type=int, default=diag.DEFAULT_BANDS)
    common(p, needs_config=False)
    return parser


COMMANDS = {"analyze": cmd_analyze, "fit": cmd_fit, "spectrum": cmd_spectrum}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TensorFormatError as e:
        print(f"tensor file error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except sl.FitAbort as e:
        print(f"fit aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
