import csv
import json

import numpy as np
import pytest

from lpvp.cr3bp import Cr3bpConfig
from lpvp.serialization import (DocumentError, cr3bp_config_from_dict, cr3bp_config_to_dict,
                                plant_from_dict, plant_to_dict, read_csv, read_json, read_result,
                                result_from_dict, result_to_dict, sweep_header, trace_header,
                                write_json, write_result, write_sweep_csv, write_trace_csv)
from lpvp.simulation import NoiseSpec, simulate
from lpvp.synthesis import SynthesisRequest, SynthesisResult, synthesize

from conftest import lpv_toy_plant


def _same(a, b):
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


@pytest.mark.parametrize("norm", ["h2", "hinf"])
def test_result_round_trip_bit_identical(tmp_path, cr3bp_results, cr3bp_plant, norm):
    res = cr3bp_results[norm]
    path = write_result(tmp_path / "r.json", res, cr3bp_plant, Cr3bpConfig())
    back, plant, cfg = read_result(path)
    for f in ("L", "X", "Y", "Q", "beta", "kappa", "noise_scale"):
        assert _same(getattr(res, f), getattr(back, f)), f
    for f in ("norm", "gamma", "p", "eps", "status", "objective_value", "optimal_value",
              "residuals", "active", "kappa_policy", "polished", "channel_names"):
        assert getattr(res, f) == getattr(back, f), f
    assert all(np.array_equal(a, b) for a, b in zip(res.vertex_set, back.vertex_set))
    assert cfg == Cr3bpConfig()
    for k in ("A", "C_y", "b", "d"):
        f0, f1 = getattr(cr3bp_plant, k), getattr(plant, k)
        assert np.array_equal(f0.constant, f1.constant)
        assert [i for i, _ in f0.basis] == [i for i, _ in f1.basis]
        assert all(np.array_equal(m0, m1) for (_, m0), (_, m1) in zip(f0.basis, f1.basis))
    # writing the parsed document again gives the same bytes
    again = write_result(tmp_path / "r2.json", back, plant, cfg)
    assert path.read_bytes() == again.read_bytes()


def test_nonfinite_values(tmp_path):
    res = SynthesisResult("h2", 0.5, "infeasible", 1.0, 1e-8)
    path = write_result(tmp_path / "inf.json", res)
    text = path.read_text()
    assert "NaN" not in text and '"nan"' in text
    back, plant, cfg = read_result(path)
    assert np.isnan(back.objective_value) and plant is None and cfg is None


def test_plant_round_trip():
    plant = lpv_toy_plant()
    doc = json.loads(json.dumps(plant_to_dict(plant)))
    back = plant_from_dict(doc)
    for rho in plant.box.sample(5, 0):
        for k, v in plant.at(rho).items():
            assert np.array_equal(v, back.at(rho)[k])


def test_plant_errors():
    doc = plant_to_dict(lpv_toy_plant())
    del doc["A"]
    with pytest.raises(DocumentError, match="A"):
        plant_from_dict(doc)
    doc = plant_to_dict(lpv_toy_plant())
    doc["S_d"] = [[1.0]]
    with pytest.raises(DocumentError):
        plant_from_dict(doc)


def test_config_round_trip():
    cfg = Cr3bpConfig(dt=2e-3, disturbance_scale=0.25)
    assert cr3bp_config_from_dict(json.loads(json.dumps(cr3bp_config_to_dict(cfg)))) == cfg
    with pytest.raises(DocumentError):
        cr3bp_config_from_dict({"mass": 1.0})


def test_malformed_documents(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "lpvp-result",\n "gamma": }')
    with pytest.raises(DocumentError, match="line 2"):
        read_json(bad)
    with pytest.raises(DocumentError):
        result_from_dict({"format": "something-else"})
    doc = result_to_dict(synthesize(SynthesisRequest(lpv_toy_plant(), "h2", 0.3)))
    doc["L"] = [[1.0, 2.0]]
    with pytest.raises(DocumentError):
        result_from_dict(doc)
    doc["L"] = "oops"
    with pytest.raises(DocumentError):
        result_from_dict(doc)


def test_trace_csv_schema(tmp_path, cr3bp_results):
    tr = simulate(Cr3bpConfig(t_final=0.05), cr3bp_results["h2"].L, NoiseSpec(level=1.0, seed=2))
    path = write_trace_csv(tmp_path / "t.csv", tr)
    header, data = read_csv(path)
    assert header == trace_header() == (
        ["t", "x1", "x2", "x3", "x4", "xhat1", "xhat2", "xhat3", "xhat4"]
        + [f"y{i}" for i in range(1, 7)] + [f"n{i}" for i in range(1, 7)] + ["eps1", "eps2"])
    assert data.shape == (len(tr), 23)
    # 17 significant digits: lossless
    assert np.array_equal(data[:, 0], tr.times)
    assert np.array_equal(data[:, 1:5], tr.true_states)
    assert np.array_equal(data[:, 21:], tr.error_z)


def test_sweep_csv(tmp_path):
    plant = lpv_toy_plant()
    rs = [synthesize(SynthesisRequest(plant, "h2", g)) for g in (1e-6, 0.3)]
    path = write_sweep_csv(tmp_path / "s.csv", rs, plant.n_y)
    rows = list(csv.reader(path.open()))
    assert rows[0] == sweep_header(3)
    assert rows[1][1] == "infeasible" and rows[1][2] == ""
    assert rows[2][1] == "optimal" and float(rows[2][2]) == rs[1].beta[0]


def test_write_json_numpy_types(tmp_path):
    p = write_json(tmp_path / "x.json", {"a": np.float64(1.5), "b": np.int64(2),
                                         "c": np.array([1.0, np.inf]), "d": np.bool_(True)})
    assert json.loads(p.read_text()) == {"a": 1.5, "b": 2, "c": [1.0, "inf"], "d": True}
