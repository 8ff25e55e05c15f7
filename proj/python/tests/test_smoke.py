import json
import math

import numpy as np
import pytest

import sfocda


def test_adain_transfers_channel_statistics():
    rng = np.random.default_rng(0)
    content = rng.normal(0.0, 1.0, size=(2, 3, 16, 16)).astype(np.float32)
    style = rng.normal(2.0, 0.5, size=(2, 3, 16, 16)).astype(np.float32)
    out = sfocda.adain(content, style)
    assert out.shape == content.shape
    for n in range(2):
        for c in range(3):
            assert out[n, c].mean() == pytest.approx(style[n, c].mean(), abs=1e-3)
            assert out[n, c].std() == pytest.approx(style[n, c].std(), abs=1e-3)


def test_cpss_permutes_patch_styles():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 4, 16, 16)).astype(np.float32)
    y = sfocda.cpss(x, patches=4, variant="inter", seed=3)
    assert y.shape == x.shape
    assert not np.allclose(y, x)
    again = sfocda.cpss(x, patches=4, variant="inter", seed=3)
    assert np.array_equal(y, again)

    mean_x, std_x = sfocda.patch_style(x, patches=4)
    mean_y, std_y = sfocda.patch_style(y, patches=4)
    assert mean_x.shape == (2, 4, 4)
    # the swapped style multiset is exactly the original one
    flat_pre = sorted(np.round(mean_x.reshape(-1, 4).sum(axis=1), 4))
    flat_post = sorted(np.round(mean_y.reshape(-1, 4).sum(axis=1), 4))
    assert flat_pre == pytest.approx(flat_post, abs=1e-3)

    with pytest.raises(sfocda.ConfigError):
        sfocda.cpss(x, variant="mixstyle")
    with pytest.raises(sfocda.ShapeError):
        sfocda.adain(x[0], x[0])


def test_mpt_labels_confident_pixels():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(2, 5, 8, 8)).astype(np.float64)
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels, thresholds, coverage = sfocda.mpt(probs.astype(np.float32), tau=0.9, q=50.0)
    assert labels.shape == (2, 8, 8)
    assert labels.dtype == np.uint8
    assert len(thresholds) == 5
    assert 0.0 < coverage <= 1.0
    kept = labels != sfocda.IGNORE_LABEL
    assert coverage == pytest.approx(kept.mean())
    maxp = probs.max(axis=1)
    argmax = probs.argmax(axis=1)
    assert np.array_equal(labels[kept], argmax[kept].astype(np.uint8))
    for c in range(5):
        sel = kept & (argmax == c)
        if sel.any():
            assert maxp[sel].min() >= thresholds[c] - 1e-6


def test_miou_hand_case():
    gt = np.array([[[0, 0], [1, 1]]], dtype=np.uint8)
    pred = np.array([[[0, 1], [1, 1]]], dtype=np.uint8)
    score, per_class = sfocda.miou(gt, pred, 2)
    assert per_class[0] == 0.5
    assert per_class[1] == pytest.approx(2 / 3)
    assert score == pytest.approx(7 / 12)

    ignored = np.full((1, 2, 2), sfocda.IGNORE_LABEL, dtype=np.uint8)
    score, per_class = sfocda.miou(ignored, pred, 2)
    assert math.isnan(score)
    assert per_class == {}


def test_config_hash_ignores_data_dir():
    a = sfocda.config_hash("data.dir = /tmp/a\n")
    b = sfocda.config_hash("data.dir = /tmp/b\n")
    assert a == b
    assert sfocda.config_hash("seed = 1\n") != a
    with pytest.raises(sfocda.ConfigError):
        sfocda.config_hash("bogus = 1\n")


def test_tiny_pipeline(tmp_path):
    data = tmp_path / "data"
    n = sfocda.gen_data(data, seed=11, train=3, test=2, size=32)
    assert n == 5 * (3 + 2)

    cfg = tmp_path / "cfg.txt"
    cfg.write_text(
        "data.dir = %s\n" % data
        + "model.widths = 8,12\n"
        + "stage1.iters = 6\nstage1.batch = 2\n"
        + "stage2.iters = 4\nstage2.batch = 2\n"
    )
    run1 = tmp_path / "run1"
    rep = sfocda.train_source(cfg, run1)
    assert set(rep["splits"]) == {
        "source_test",
        "rainy_test",
        "snowy_test",
        "cloudy_test",
        "overcast_test",
    }
    assert 0.0 <= rep["compound_miou"] <= 1.0
    assert rep["pl_coverage"] is None

    run2 = tmp_path / "run2"
    rep2 = sfocda.adapt_target(cfg, rep["checkpoint"], run2)
    assert "source_test" not in rep2["splits"]
    assert rep2["pl_coverage"] > 0.0
    audit = (run2 / "audit.log").read_text()
    assert "/source/" not in audit

    rep3 = sfocda.evaluate(rep2["checkpoint"], data, ["rainy_test"])
    assert rep3["splits"]["rainy_test"]["miou"] == pytest.approx(
        rep2["splits"]["rainy_test"]["miou"]
    )

    metrics = json.loads((run1 / "metrics.json").read_text())
    assert metrics["config_hash"] == rep["config_hash"]

    outs = sfocda.stylize(
        [data / "source" / "test" / "0000_img.sfot",
         data / "source" / "test" / "0001_img.sfot"],
        tmp_path / "sty",
        grid=(2, 2),
        seed=1,
        png=False,
    )
    assert len(outs) == 2
    emb = tmp_path / "emb.csv"
    sfocda.style_embed(rep["checkpoint"], data, emb, k=3, seed=0)
    assert emb.read_text().startswith("index,image,domain,cluster,e0")
