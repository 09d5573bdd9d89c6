import numpy as np
import pytest

from ringct.evaluate import (MetricReport, Reconstructor, estimator_scores, evaluate,
                             fov_detectors, parse_methods, profile_rows, read_report_csv)
from ringct.geometry import geometry_preset
from ringct.model import init_model
from ringct.synthesis import generate_corpus

DESK = geometry_preset("desk")


@pytest.fixture(scope="module")
def samples():
    return generate_corpus(DESK, 3, seed=11)


def test_parse_methods():
    assert parse_methods("fbp, norm,,wavefft") == ["fbp", "norm", "wavefft"]
    assert parse_methods(["synthrar:no_ir", "synthrar"]) == ["synthrar:no_ir", "synthrar"]
    for bad in ("fbp,sart", "synthrar:half", " , "):
        with pytest.raises(ValueError):
            parse_methods(bad)


def test_report_rows_ordered_and_thread_invariant(samples):
    a = evaluate(samples, "fbp,norm", DESK, threads=1)
    b = evaluate(samples, "fbp,norm", DESK, threads=3)
    assert a.to_csv() == b.to_csv()
    assert [(r["sample_id"], r["method"]) for r in a.rows][:4] == \
        [("s00000", "fbp"), ("s00000", "norm"), ("s00001", "fbp"), ("s00001", "norm")]
    assert a.geometry_id == "desk" and a.methods() == ["fbp", "norm"]


def test_report_invariants_and_csv_round_trip(samples):
    rep = evaluate(samples, "fbp,wavefft", DESK)
    for r in rep.rows:
        assert r["mae_hu"] >= 0 and -1 <= r["ssim"] <= 1
    back = read_report_csv(rep.to_csv())
    for m in rep.methods():
        for key in ("mae_hu", "psnr_db", "ssim"):
            assert np.allclose(back.values(m, key), rep.values(m, key), rtol=1e-5)
    s = rep.summary()
    assert s["fbp"]["mae_hu"][0] == pytest.approx(rep.values("fbp", "mae_hu").mean())
    assert s["fbp"]["mae_hu"][1] == pytest.approx(rep.values("fbp", "mae_hu").std())


def test_infinite_psnr_is_written_as_inf():
    rep = MetricReport([{"sample_id": "a", "method": "fbp", "mae_hu": 0.0,
                         "psnr_db": float("inf"), "ssim": 1.0}])
    assert rep.to_csv().splitlines()[1] == "a,fbp,0,inf,1"
    assert "inf (" in rep.table()
    assert read_report_csv(rep.to_csv()).rows[0]["psnr_db"] == float("inf")


def test_network_methods_need_matching_checkpoints(samples):
    with pytest.raises(ValueError, match="needs a checkpoint"):
        evaluate(samples, "synthrar", DESK)
    models = [init_model(1, 2, "full", geometry_id="desk"),
              init_model(1, 2, "no_ir", geometry_id="desk")]
    with pytest.raises(ValueError, match="several checkpoints"):
        evaluate(samples, "synthrar", DESK, models)
    with pytest.raises(ValueError, match="no checkpoint with mode 'backbone'"):
        evaluate(samples, "synthrar:backbone", DESK, models)
    with pytest.raises(ValueError, match="two checkpoints"):
        evaluate(samples, "fbp", DESK, models + models[:1])
    rep = evaluate(samples[:1], "synthrar:full,synthrar:no_ir", DESK, models)
    assert rep.methods() == ["synthrar:full", "synthrar:no_ir"]


def test_fov_detectors_desk():
    fov = fov_detectors(DESK)
    assert fov.sum() == 66
    assert np.array_equal(fov, fov[::-1])  # symmetric about the central ray
    assert fov[48] and not fov[0]


def test_estimator_scores_zero_model(samples):
    model = init_model(1, 2, "full", geometry_id="desk")
    for v in model.params.values():
        v[...] = 0.0
    # eta_hat = 1, mask_hat = 0.5 (not below threshold: nothing flagged)
    sc = estimator_scores(samples, model, DESK)
    err = np.mean([np.abs(1.0 - s.response.eta).mean() for s in samples])
    assert sc["ir_mae"] == pytest.approx(err)
    assert sc["im_f1"] == 0.0 and sc["im_counts_fov"][0] == 0
    assert set(estimator_scores(samples, init_model(1, 2, "no_im"), DESK)) == \
        {"ir_mae", "ir_mae_fov"}


def test_profile_rows(samples):
    text = profile_rows(samples[0], "fbp", Reconstructor(DESK), 10)
    lines = text.splitlines()
    assert lines[0] == "col,truth,fbp" and len(lines) == 65
    assert lines[1].startswith("0,-1000")  # image corner is air
    with pytest.raises(ValueError, match="outside"):
        profile_rows(samples[0], "fbp", Reconstructor(DESK), 64)
