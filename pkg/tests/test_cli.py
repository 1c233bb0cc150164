import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from elastocorner import cli
from elastocorner.dtn_farfield import read_farfield
from elastocorner.elastic_core import PlaneWave, plane_wave_eval
from elastocorner.fem_solver import read_field_dump, read_mesh_dump
from elastocorner.materials import LameParameters

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def scene(**over):
    doc = {
        "partition": {"kind": "nest", "polygons": [[[-0.4, -0.4], [0.4, -0.4], [0.4, 0.4], [-0.4, 0.4]]]},
        "material": {"lambda_Pa": 1.0, "mu_Pa": 1.0, "omega_rad_per_s": 1.0, "q": [2.0], "eta_Pa_per_m": [-0.3]},
        "incident": {"kind": "p", "angle_rad": 0.3},
        "solver": {"h_mesh_m": 0.15},
        "output": {"dir": "out", "far_field_M": 72},
    }
    for key, value in over.items():
        section, name = key.split("__")
        if value is None:
            doc[section].pop(name)
        else:
            doc[section][name] = value
    return doc


def write(tmp_path, doc, name="scene.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return str(path)


def test_missing_field_is_named(tmp_path, capsys):
    path = write(tmp_path, scene(material__mu_Pa=None))
    assert cli.main(["simulate", path]) == cli.EXIT_CONFIG
    assert "material.mu_Pa" in capsys.readouterr().err


def test_bad_value_reports_line(tmp_path, capsys):
    path = write(tmp_path, scene(material__mu_Pa="stiff"))
    assert cli.main(["simulate", path]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "material.mu_Pa" in err and "line" in err


@pytest.mark.parametrize(
    "over",
    [
        {"partition__kind": "ring"},
        {"incident__kind": "q"},
        {"material__omega_rad_per_s": -1.0},
        {"material__q": [2.0, 1.0]},
        {"partition__polygons": [[[0, 0], [4, 0], [4, 2], [2, -1], [0, 2]]]},
    ],
)
def test_invalid_scenes_exit_2(tmp_path, over):
    assert cli.main(["simulate", write(tmp_path, scene(**over))]) == cli.EXIT_CONFIG


def test_unparseable_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("partition: [unclosed\n")
    assert cli.main(["simulate", str(path)]) == cli.EXIT_CONFIG


def test_config_hash_ignores_key_order():
    a = scene()
    b = json.loads(json.dumps(a))
    b = {k: dict(reversed(list(v.items()))) for k, v in reversed(list(b.items()))}
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash(scene(material__q=[2.5]))


def test_json_scene_accepted(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene()))
    doc, _ = cli.load_config(path)
    assert doc == scene()


def test_simulate_is_deterministic(tmp_path):
    path = write(tmp_path, scene())
    assert cli.main(["simulate", path, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["simulate", path, "--out", str(tmp_path / "b")]) == 0
    for name in ("field.csv", "mesh.node", "mesh.ele"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"] and ma["config_hash"] == mb["config_hash"]


def test_trivial_scene_dump_is_incident(tmp_path):
    out = tmp_path / "t"
    assert cli.main(["simulate", str(CONFIGS / "trivial.yaml"), "--out", str(out)]) == 0
    x, u = read_field_dump(out / "field.csv")
    wave = PlaneWave.of("s", 1.0, LameParameters(2.0, 1.0), 1.0)
    assert np.abs(u - plane_wave_eval(wave, x).value).max() <= 1e-10
    v, tri, reg = read_mesh_dump(out / "mesh")
    assert np.array_equal(v, x) and tri.shape[1] == 3 and set(np.unique(reg)) == {-1, 0, 1}


def test_farfield_components_and_compare(tmp_path, capsys):
    path = write(tmp_path, scene())
    out = tmp_path / "ff"
    assert cli.main(["farfield", path, "--out", str(out), "--beta", "t", "p", "s"]) == 0
    pattern = read_farfield(out / "farfield.csv")
    t = np.loadtxt(out / "farfield_t.csv", delimiter=",", comments="#", skiprows=3)
    p = np.loadtxt(out / "farfield_p.csv", delimiter=",", comments="#", skiprows=3)
    s = np.loadtxt(out / "farfield_s.csv", delimiter=",", comments="#", skiprows=3)
    th = t[:, 0]
    xhat = np.stack([np.cos(th), np.sin(th)], -1)
    perp = np.stack([-np.sin(th), np.cos(th)], -1)
    ut = np.stack([t[:, 1] + 1j * t[:, 2], t[:, 3] + 1j * t[:, 4]], -1)
    rebuilt = (p[:, 1] + 1j * p[:, 2])[:, None] * xhat + (s[:, 1] + 1j * s[:, 2])[:, None] * perp
    assert np.abs(rebuilt - ut).max() <= 1e-12 * np.abs(ut).max()
    assert np.allclose(ut, pattern.vector(), rtol=0, atol=1e-15 * np.abs(ut).max())
    capsys.readouterr()
    ff = str(out / "farfield.csv")
    assert cli.main(["compare", ff, ff, "--max-distance", "0"]) == 0
    assert float(capsys.readouterr().out) == 0.0


def test_compare_threshold_and_grid_mismatch(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["farfield", write(tmp_path, scene()), "--out", str(a)]) == 0
    assert cli.main(["farfield", write(tmp_path, scene(material__q=[3.0]), "s2.yaml"), "--out", str(b)]) == 0
    capsys.readouterr()
    fa, fb = str(a / "farfield.csv"), str(b / "farfield.csv")
    assert cli.main(["compare", fa, fb]) == 0
    d = float(capsys.readouterr().out)
    assert d > 0
    assert cli.main(["compare", fa, fb, "--max-distance", str(d / 2)]) == cli.EXIT_VERIFY
    c = tmp_path / "c"
    assert cli.main(["farfield", write(tmp_path, scene(output__far_field_M=90), "s3.yaml"), "--out", str(c)]) == 0
    assert cli.main(["compare", fa, str(c / "farfield.csv")]) == cli.EXIT_CONFIG


def test_cgo_verify(tmp_path):
    out = tmp_path / "cgo.csv"
    assert cli.main(["cgo-verify", "--theta-m", "-0.6", "--theta-M", "0.9", "--h", "0.8", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("s, quantity")
    assert all(line.endswith("PASS") for line in lines[1:])


def test_cgo_verify_rejects_reflex_sector():
    assert cli.main(["cgo-verify", "--theta-m", "0", "--theta-M", str(math.pi)]) == cli.EXIT_CONFIG


def test_probe_manufactured(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["probe", str(CONFIGS / "probe_manufactured.yaml"), "--out", str(out)]) == 0
    rep = json.loads((out / "probe.json").read_text())
    assert rep["eta_diff_hat"] == pytest.approx(0.2, rel=0.05)
    assert rep["q_diff_hat"] == pytest.approx(1.0, rel=0.05)
    man = json.loads((out / "manifest.json").read_text())
    assert "probe.json" in man["files"]


def test_probe_missing_block(tmp_path):
    assert cli.main(["probe", write(tmp_path, {"probe": {"mode": "manufactured"}})]) == cli.EXIT_CONFIG


def test_admissibility_commands(tmp_path):
    out = tmp_path / "adm"
    assert cli.main(["admissibility", str(CONFIGS / "trivial.yaml"), "--out", str(out)]) == 0
    rep = json.loads((out / "admissibility.json").read_text())
    assert np.allclose(rep["corner_values"], 1.0)
    assert cli.main(["admissibility", str(CONFIGS / "trivial.yaml"), "--out", str(out), "--tol", "2"]) == cli.EXIT_VERIFY


def test_probe_solver_mode(tmp_path):
    doc = scene(material__omega_rad_per_s=math.sqrt(2.0))
    doc["material_alt"] = {"q": [2.5], "eta_Pa_per_m": [-0.3]}
    doc["probe"] = {"mode": "solver", "corner": 0}
    out = tmp_path / "sp"
    assert cli.main(["probe", write(tmp_path, doc), "--out", str(out)]) == 0
    rep = json.loads((out / "probe.json").read_text())
    assert rep["mode"] == "solver"
    assert math.isfinite(rep["eta_diff_hat"]) and math.isfinite(rep["q_diff_hat"])
    assert len(rep["vanishing"]["radii"]) == 6


def test_solver_probe_needs_second_medium(tmp_path):
    doc = scene()
    doc["probe"] = {"mode": "solver"}
    assert cli.main(["probe", write(tmp_path, doc)]) == cli.EXIT_CONFIG
