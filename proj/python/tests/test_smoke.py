import json
import math

import numpy as np
import pytest

import darsvs

TINY = {
    "seed": 7,
    "corpus": {"n_songs": 3, "utterances_per_song": 2, "min_notes": 2, "max_notes": 3},
    "f0_model": {"trunk": {"width_divisor": 32}, "embed_dim": 4},
    "spectral_model": {
        "trunk": {"width_divisor": 32},
        "prenet": {"fc_units": 8, "conv_channels": 8, "pos_dim": 8, "proj_dim": 8, "attn_layers": 1},
    },
    "baseline_model": {"n_layers": 1, "units": 8},
    "training": {
        "f0": {"epochs": 2, "base_lr": 0.005},
        "spectral": {"epochs": 1, "base_lr": 0.002},
        "baseline": {"epochs": 1, "base_lr": 0.005},
    },
}


def test_mel_scale_round_trip():
    for hz in (69.0, 220.0, 763.0):
        assert darsvs.mel_to_hz(darsvs.hz_to_mel(hz)) == pytest.approx(hz, rel=1e-12)


def test_quantize_keeps_voicing_and_half_bin_error():
    rng = np.random.default_rng(0)
    f0 = rng.uniform(69, 763, 500)
    f0[rng.random(500) < 0.2] = 0.0
    classes = darsvs.quantize(f0)
    assert np.all((classes == 0) == (f0 == 0))
    back = darsvs.dequantize(classes.tolist())
    voiced = f0 > 0
    mel = lambda x: 1127.0 * np.log1p(x / 700.0)
    assert np.max(np.abs(mel(back[voiced]) - mel(f0[voiced]))) <= (831.0 - 106.0) / 255 / 2 + 1e-9


def test_postprocess_swaps_melody_for_notes():
    f0 = 200 + 10 * np.sin(np.arange(60) * 0.8)
    notes = np.full(60, 261.63)
    out = darsvs.postprocess_f0(f0, notes, 3)
    smooth = darsvs.moving_average(f0, 3)
    np.testing.assert_allclose(out - f0, notes - smooth, atol=1e-9)


def test_metrics_against_numpy():
    rng = np.random.default_rng(1)
    a = rng.uniform(100, 400, 80)
    b = rng.uniform(100, 400, 80)
    assert darsvs.f0_rmse(a, b) == pytest.approx(np.sqrt(np.mean((a - b) ** 2)), abs=1e-10)
    assert darsvs.f0_corr(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-10)
    b[:8] = 0.0
    assert darsvs.vuv_error(a, b) == pytest.approx(10.0)
    x = np.zeros((1, 41))
    y = x.copy()
    y[0, 3] = math.log(10) / (10 * math.sqrt(2))
    assert darsvs.mcd(x, y) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(darsvs.DimensionError):
        darsvs.mcd(np.zeros((2, 40)), np.zeros((2, 40)))


def test_mlpg_matches_dense_solve():
    rng = np.random.default_rng(2)
    T = 9
    m = [rng.normal(size=T) for _ in range(3)]
    var = (0.5, 2.0, 3.0)
    c = lambda t: min(max(t, 0), T - 1)
    W = np.zeros((3 * T, T))
    for t in range(T):
        W[t, t] = 1
        W[T + t, c(t - 1)] -= 0.5
        W[T + t, c(t + 1)] += 0.5
        W[2 * T + t, c(t - 1)] += 1
        W[2 * T + t, t] -= 2
        W[2 * T + t, c(t + 1)] += 1
    p = np.repeat(1 / np.array(var), T)
    ref = np.linalg.solve(W.T @ (p[:, None] * W), W.T @ (p * np.concatenate(m)))
    np.testing.assert_allclose(darsvs.mlpg(*m, var), ref, atol=1e-8)


def test_config_errors_surface():
    assert json.loads(darsvs.default_config())["seed"] == 2019
    with pytest.raises(darsvs.DimensionError):
        darsvs.quantize(np.zeros((2, 2)))


def test_corpus_train_synthesize_evaluate(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    data = tmp_path / "data"
    counts = darsvs.build_corpus(data, cfg)
    assert counts == {"train": 2, "validation": 2, "test": 2}

    res = darsvs.train("dar-f0", data, tmp_path / "f0.ckpt", cfg)
    assert [r["epoch"] for r in res["log"]] == [0, 1, 2]
    assert all(math.isfinite(r["valid_loss"]) for r in res["log"])

    darsvs.train("dar-spectral", data, tmp_path / "spec.ckpt", cfg)
    n = darsvs.synthesize(data, tmp_path / "pred", f0=tmp_path / "f0.ckpt", spectral=tmp_path / "spec.ckpt",
                          postprocess=True)
    assert n == 2
    report = darsvs.evaluate(tmp_path / "pred", data)
    assert report["frames"] > 0
    assert math.isfinite(report["mcd"]) and report["mcd"] > 0
    assert 0 <= report["vuv_error"] <= 100

    with pytest.raises(darsvs.ConfigError):
        darsvs.train("wavenet", data, tmp_path / "x.ckpt", cfg)
    with pytest.raises(darsvs.DataError):
        darsvs.train("baseline", data, tmp_path / "x.ckpt", cfg, resume=tmp_path / "f0.ckpt")
