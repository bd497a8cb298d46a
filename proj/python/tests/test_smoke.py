import json
import math
import os
import subprocess
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import hetcav

CLI = os.environ.get("HETCAV_CLI")
needs_cli = pytest.mark.skipif(not CLI, reason="hetcav CLI not built")

TINY = """
name: tiny
seed: 3
lattice: {periods_x: 16, periods_z: 13}
profile: {type: step, delta_n: 0.03, m: 4}
solver: {resolution: 12, ringdown_steps: 4096}
"""


def test_fresnel_and_energy():
    r, t = hetcav.transfer_matrix([], 0.3, n_in=1.0, n_out=2.0)
    assert r == pytest.approx(1.0 / 9.0, abs=1e-12)
    assert r + t == pytest.approx(1.0, abs=1e-12)


def test_fabry_perot_peak_near_design():
    layers = hetcav.bragg_cavity(2.5, 1.25, 4, 1.0)
    f, q = hetcav.fabry_perot_q(layers, 0.9, 1.1)
    assert f == pytest.approx(1.0, rel=1e-3)
    assert q > 100


def test_harmonic_inversion_recovers_a_tone():
    dt, f, q = 0.4, 0.33, 5e4
    t = np.arange(16384) * dt
    x = np.exp(-math.pi * f / q * t) * np.cos(2 * math.pi * f * t)
    modes = hetcav.harmonic_inversion(x.astype(complex), dt, 0.3, 0.36)
    assert modes
    assert modes[0]["freq"] == pytest.approx(f, rel=1e-6)
    assert modes[0]["Q"] == pytest.approx(q, rel=1e-3)


def test_bulk_bands_start_at_zero():
    spec = hetcav.LatticeSpec()
    n = hetcav.effective_slab_index(spec, 0.333)
    bands = hetcav.bulk_bands(spec, n, [(0.0, 0.0), (0.5, 0.0)], 121, 4)
    assert len(bands) == 2 and len(bands[0]) == 4
    assert bands[0][0] == pytest.approx(0.0, abs=1e-6)
    assert all(b > 0 for b in bands[1])


def test_rasterize_and_profile():
    spec = hetcav.LatticeSpec()
    spec.periods_x, spec.periods_z = 10, 7
    prof = hetcav.Profile.step(0.02, 4)
    eps, origin, cell = hetcav.rasterize_2d(spec, prof, 10)
    assert eps.ndim == 2
    assert cell == pytest.approx(0.1)
    assert eps.min() >= 1.0 - 1e-12
    assert eps.max() <= 2.4**2 + 1e-12
    assert hetcav.index_at(spec, prof, 0.0) == pytest.approx(2.4)
    assert hetcav.index_at(spec, prof, 3.0) == pytest.approx(2.38)


def test_config_round_trip_and_errors():
    cfg = hetcav.load_config(TINY)
    assert cfg["lattice"]["periods_x"] == 16
    assert cfg["profile"]["m"] == 4
    assert hetcav.load_config(json.dumps(cfg)) == cfg
    with pytest.raises(hetcav.ConfigError):
        hetcav.load_config("sweep: {delta_n: [0.5]}")
    with pytest.raises(ValueError):
        hetcav.load_config("unknown_key: 1")


@needs_cli
def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("sweep: {delta_n: [0.01], cavity_m: [4]}\n")
    assert subprocess.run([CLI, "sweep", "--config", str(bad)], capture_output=True).returncode == 1
    assert subprocess.run([CLI, "simulate", "--config", str(tmp_path / "missing.yaml")],
                          capture_output=True).returncode == 1
    assert subprocess.run([CLI, "bands", "--dim", "3"], capture_output=True).returncode == 1
    assert subprocess.run([CLI, "nonsense"], capture_output=True).returncode == 1


@needs_cli
def test_cli_geometry_dump(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(TINY)
    out = tmp_path / "geo"
    subprocess.run([CLI, "geometry", "dump", "--config", str(cfg), "--out", str(out)], check=True,
                   capture_output=True)
    side = json.loads((out / "epsilon.json").read_text())
    eps = np.fromfile(out / "epsilon.f64", dtype="<f8")
    assert eps.size == side["dims"][0] * side["dims"][1] * side["dims"][2]
    assert side["resolution"] == 12
    assert side["spec"]["profile"]["delta_n"] == 0.03


@needs_cli
def test_cli_sweep_outputs(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(TINY + "sweep: {delta_n: [0.03]}\n")
    out = tmp_path / "run"
    subprocess.run([CLI, "sweep", "--config", str(cfg), "--out", str(out)], check=True, capture_output=True)
    rows = (out / "tiny.csv").read_text().strip().splitlines()
    assert len(rows) == 2
    header = rows[0].split(",")
    assert header[0] == "index" and header[-1] == "runtime_seconds"
    assert dict(zip(header, rows[1].split(",")))["status"] == "ok"
    root = ET.parse(out / "tiny.svg").getroot()
    assert root.tag.endswith("svg")
