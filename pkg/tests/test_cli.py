import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fdam.cli import main
from fdam.config import ConfigError, parse_config
from fdam.diagnostics import read_matrix_csv
from fdam.tensor_io import encode_tensor, load_tensor, save_tensor

ROOT = Path(__file__).resolve().parents[1]

SMALL_STACK = {"layers": 3, "heads": 2, "channels": 16, "height": 8, "width": 8, "seed": 5}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def hashes(out_dir):
    manifest = json.loads((Path(out_dir) / "manifest.json").read_text())
    for entry in manifest["outputs"]:
        data = (Path(out_dir) / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
    return {e["path"]: e["sha256"] for e in manifest["outputs"]}


def diag_rows(out_dir):
    lines = (Path(out_dir) / "diagnostics.csv").read_text().strip().splitlines()
    return [line.split(",") for line in lines[1:]]


# analyze


def test_analyze_writes_one_row_per_layer(tmp_path):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK})
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"]) == 0
    rows = diag_rows(tmp_path / "a")
    assert [r[0] for r in rows] == ["1", "2", "3"]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "analyze"
    assert manifest["seed"] == 5
    assert manifest["config"] == Path(cfg).read_text()
    assert {"diagnostics.csv", "features_final.fdam", "layer_responses.fdam"} <= set(hashes(tmp_path / "a"))


def test_analyze_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {"stack": {**SMALL_STACK, "mode": "attinv+freqscale"}})
    for d in ("a", "b"):
        assert main(["analyze", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    assert hashes(tmp_path / "a") == hashes(tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    assert "freqscale_weights.fdam" in hashes(tmp_path / "a")


def test_analyze_attinv_keeps_more_high_frequency(tmp_path):
    out = {}
    for mode in ("plain", "attinv"):
        cfg = write_config(tmp_path, {"stack": {"mode": mode, "high_bias": 0.0, "seed": 0} if mode == "attinv"
                                      else {"mode": mode, "seed": 0}}, f"{mode}.json")
        assert main(["analyze", "--config", cfg, "--out", str(tmp_path / mode), "--quiet"]) == 0
        out[mode] = diag_rows(tmp_path / mode)
    assert len(out["plain"]) == 12
    assert float(out["attinv"][-1][1]) > float(out["plain"][-1][1])


def test_analyze_imported_input(tmp_path):
    x = np.random.default_rng(0).normal(size=(16, 8, 8))
    save_tensor(tmp_path / "x.fdam", x)
    cfg = write_config(tmp_path, {"stack": SMALL_STACK, "diagnostics": {"input": "x.fdam"}})
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    np.testing.assert_array_equal(load_tensor(tmp_path / "o" / "features_input.fdam"), x)
    save_tensor(tmp_path / "x.fdam", x[:8])
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "p"), "--quiet"]) == 1


def test_analyze_seed_override_recorded(tmp_path):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK})
    assert main(["analyze", "--config", cfg, "--seed", "77", "--out", str(tmp_path / "o"), "--quiet"]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 77 and manifest["seed_override"] is True
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "p"), "--quiet"]) == 0
    assert hashes(tmp_path / "o")["diagnostics.csv"] != hashes(tmp_path / "p")["diagnostics.csv"]


def test_unwritable_output(tmp_path, capsys):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK})
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["analyze", "--config", cfg, "--out", str(blocker / "sub"), "--quiet"]) == 1
    assert "i/o error" in capsys.readouterr().err


# config errors


@pytest.mark.parametrize("data,needle", [
    ({"stack": {"layerz": 3}}, "stack.layerz"),
    ({"stack": {"layers": "3"}}, "stack.layers"),
    ({"stack": {"layers": 0}}, "stack.layers"),
    ({"stack": {"mode": "lowpass"}}, "stack.mode"),
    ({"stack": {}, "plots": {}}, "plots"),
    ({"diagnostics": {}}, "stack"),
    ({"stack": {}, "fit": {"targets": ["highpass", "notch"]}}, "fit.targets[1]"),
    ({"stack": {}, "fit": {"band_cutoffs": [0.7, 0.2]}}, "fit.band_cutoffs"),
    ({"stack": {}, "diagnostics": {"cutoff": 1.5}}, "diagnostics.cutoff"),
])
def test_config_errors_name_the_field(tmp_path, capsys, data, needle):
    cfg = write_config(tmp_path, data)
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 2
    assert needle in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_config_syntax_error_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "stack": {"layers": 3,}\n}')
    assert main(["analyze", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "bad.json:2:" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_parse_config_defaults():
    cfg = parse_config('{"stack": {}, "fit": {}}')
    assert cfg.stack.layers == 12 and cfg.diagnostics.bands == 8
    assert cfg.fit.targets == ["highpass", "bandpass", "bandstop", "random"]
    with pytest.raises(ConfigError):
        parse_config('{"stack": {"heads": 3}}')


# fit


FIT_SMALL = {"stack": {**SMALL_STACK, "layers": 4}, "fit": {"targets": ["highpass"], "max_iters": 300}}


def test_fit_highpass_reports_both_modes(tmp_path):
    cfg = write_config(tmp_path, FIT_SMALL)
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "f"), "--quiet"]) == 0
    reports = json.loads((tmp_path / "f" / "fit_reports.json").read_text())
    by_mode = {r["mode"]: r for r in reports}
    assert set(by_mode) == {"baseline", "attinv"}
    assert by_mode["attinv"]["final_loss"] < by_mode["baseline"]["final_loss"]
    target = read_matrix_csv(tmp_path / "f" / "target_highpass.csv")
    assert target.shape == (8, 8) and target[4, 4] == 0
    fitted = read_matrix_csv(tmp_path / "f" / "fitted_highpass_attinv.csv")
    assert fitted.shape == (8, 8)
    trace = (tmp_path / "f" / "loss_traces.csv").read_text().splitlines()
    assert trace[0] == "target,mode,iteration,loss"
    assert len(trace) == 1 + sum(len(r["loss_trace"]) for r in reports)


def test_fit_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {**FIT_SMALL, "fit": {"targets": ["bandpass", "random"], "max_iters": 100}})
    for d in ("a", "b"):
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    assert hashes(tmp_path / "a") == hashes(tmp_path / "b")


def test_fit_requires_fit_section(tmp_path, capsys):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "f"), "--quiet"]) == 2
    assert "fit" in capsys.readouterr().err


def test_fit_unknown_target_kind(tmp_path, capsys):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK, "fit": {"targets": ["wobble"]}})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "f"), "--quiet"]) == 2
    err = capsys.readouterr().err
    assert "fit.targets[0]" in err and "wobble" in err


def test_fit_seed_override(tmp_path):
    cfg = write_config(tmp_path, {**FIT_SMALL, "fit": {"targets": ["random"], "max_iters": 10}})
    assert main(["fit", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "f"), "--quiet"]) == 0
    manifest = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["seed_override"] is True and manifest["target_seed"] == 9


# spectrum


def test_spectrum_constant_tensor(tmp_path):
    save_tensor(tmp_path / "c.fdam", np.full((3, 6, 6), 2.0))
    assert main(["spectrum", str(tmp_path / "c.fdam"), "--out", str(tmp_path / "s"), "--quiet"]) == 0
    spec = read_matrix_csv(tmp_path / "s" / "spectrum.csv")
    assert spec[3, 3] == pytest.approx(72.0)
    spec[3, 3] = 0
    assert np.all(spec == 0)
    prof = (tmp_path / "s" / "radial_profile.csv").read_text().splitlines()
    assert prof[0] == "band,rho_low,rho_high,bins,mean_magnitude,std_magnitude"


def test_spectrum_truncated_file(tmp_path, capsys):
    (tmp_path / "t.fdam").write_bytes(encode_tensor(np.zeros((4, 4)))[:-5])
    assert main(["spectrum", str(tmp_path / "t.fdam"), "--out", str(tmp_path / "s")]) == 1
    err = capsys.readouterr().err
    assert "expected 128 bytes, got 123" in err


def test_spectrum_bad_magic(tmp_path, capsys):
    (tmp_path / "m.fdam").write_bytes(b"XXXX" + encode_tensor(np.zeros(2))[4:])
    assert main(["spectrum", str(tmp_path / "m.fdam"), "--out", str(tmp_path / "s")]) == 1
    assert "magic" in capsys.readouterr().err


def test_spectrum_round_trip_from_analyze(tmp_path):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK})
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"]) == 0
    feats = load_tensor(tmp_path / "a" / "features_final.fdam")
    assert main(["spectrum", str(tmp_path / "a" / "features_final.fdam"), "--out", str(tmp_path / "s"),
                 "--quiet"]) == 0
    direct = np.fft.fftshift(np.abs(np.fft.fft2(feats)).mean(axis=0))
    np.testing.assert_array_equal(load_tensor(tmp_path / "s" / "spectrum.fdam"),
                                  read_matrix_csv(tmp_path / "s" / "spectrum.csv"))
    assert np.abs(load_tensor(tmp_path / "s" / "spectrum.fdam") - direct).max() < 1e-10
    # a second pass over the same export gives the same bytes
    assert main(["spectrum", str(tmp_path / "a" / "features_final.fdam"), "--out", str(tmp_path / "s2"),
                 "--quiet"]) == 0
    assert hashes(tmp_path / "s") == hashes(tmp_path / "s2")


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"stack": SMALL_STACK})
    proc = subprocess.run([sys.executable, "-m", "fdam", "analyze", "--config", cfg, "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "layer" in proc.stderr


def test_shipped_configs_parse():
    for path in sorted((ROOT / "configs").glob("*.json")):
        parse_config(path.read_text(), str(path))
