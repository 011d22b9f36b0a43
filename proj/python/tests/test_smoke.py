import math

import numpy as np
import pytest

import haaseg

TINY = {
    "net": {
        "stem_channels": [4],
        "stem_strides": [1],
        "encoder_channels": [4],
        "encoder_strides": [1],
        "decoder_channels": [4, 4, 4, 4, 4],
        "image_size": 16,
    },
    "train": {"epochs": 2},
    "data": {"image_size": 16, "n_samples": 6},
}


def test_encodings_and_macs():
    assert haaseg.encodings() == ["None", "LPE", "APE", "RPE", "APE+RPE", "LPE+RPE", "LPE+APE"]
    m = haaseg.mac_count(64, 64, 16)
    assert 32 * (m["height_axis_macs"] + m["width_axis_macs"]) == m["full_attention_macs"]


def test_default_network_budget():
    net = haaseg.Network()
    assert net.param_count < 2_000_000
    assert net.config["net"]["position_encoding"] == "LPE+APE"


def test_generate_dataset_is_deterministic():
    ids, images, masks = haaseg.generate_dataset(TINY)
    _, again, _ = haaseg.generate_dataset(TINY)
    assert len(ids) == 6
    assert images.shape == (6, 1, 16, 16)
    assert np.array_equal(images, again)
    assert set(np.unique(masks)) <= {0.0, 1.0}


def test_forward_fit_evaluate_checkpoint():
    _, images, masks = haaseg.generate_dataset(TINY)
    net = haaseg.Network(TINY)
    y = net(images[0])
    assert y.shape == (1, 16, 16)
    assert np.all((y > 0) & (y < 1))

    log = net.fit(images, masks)
    assert [e["epoch"] for e in log] == [1, 2]
    report = net.evaluate(images, masks)
    assert 0 <= report["dice"] <= 100

    other = haaseg.Network(TINY)
    other.load_state_bytes(net.state_bytes())
    assert np.array_equal(other(images[1]), net(images[1]))
    assert other.state_bytes() == net.state_bytes()


def test_incompatible_checkpoint():
    small = haaseg.Network(TINY)
    with pytest.raises(haaseg.IncompatibleCheckpoint):
        haaseg.Network().load_state_bytes(small.state_bytes())


def test_metrics_and_loss():
    gt = np.zeros((1, 4, 4))
    gt[0, :2] = 1
    report = haaseg.evaluate([gt], [gt])
    assert report["dice"] == 100 and report["auc"] == 100
    assert haaseg.evaluate([np.ones((1, 4, 4))], [np.ones((1, 4, 4))])["auc"] is None
    assert math.isclose(haaseg.bce(np.full((1, 4, 4), 0.5), gt), math.log(2), rel_tol=1e-12)


def test_pgm_round_trip():
    mask = (np.random.default_rng(0).random((1, 5, 7)) > 0.5).astype(float)
    data = haaseg.encode_pgm(mask)
    assert data.startswith(b"P5\n7 5\n255\n")
    assert np.array_equal(haaseg.decode_pgm(data), mask)
    with pytest.raises(haaseg.ParseError):
        haaseg.decode_pgm(b"P2\n1 1\n255\n0")


def test_config_errors():
    with pytest.raises(haaseg.ConfigError):
        haaseg.Network({"train": {"lr": -1}})
    with pytest.raises(haaseg.ConfigError):
        haaseg.default_config({"bogus": 1})


def test_gradcheck_passes():
    rows = haaseg.gradcheck({"gradcheck": {"seeds": 1}})
    assert len(rows) >= 10
    assert all(r["passed"] for r in rows)
