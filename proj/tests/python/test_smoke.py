"""Python smoke tests for the bdcnet extension module."""

import numpy as np
import pytest

import bdcnet as bdc


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(1, 300))
        x = rng.choice([-1.0, 1.0], size=n)
        packed = bdc.bit_pack(x)
        assert packed.n_valid_tail == (n % 64 or 64)
        np.testing.assert_array_equal(packed.unpack(), x)


def test_bit_pack_rejects_non_binary():
    with pytest.raises(bdc.BdcError):
        bdc.bit_pack(np.array([1.0, 0.5]))


def test_popcount_dot_matches_numpy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 512))
        a = rng.choice([-1.0, 1.0], size=n)
        b = rng.choice([-1.0, 1.0], size=n)
        assert bdc.popcount_dot(a, b) == int(a @ b)


def test_conv2d_bit_matches_fp_oracle():
    rng = np.random.default_rng(2)
    x = rng.choice([-1.0, 1.0], size=(5, 6, 6))
    latent = rng.normal(size=(3, 5, 3, 3))
    scale, signs = bdc.binarize_weights(latent)
    fast = bdc.conv2d_bit(x, latent, stride=1, pad=1)
    ref = scale * bdc.conv2d_fp(x, signs.reshape(3, 5, 3, 3), stride=1, pad=1, pad_value=-1.0)
    np.testing.assert_array_equal(fast, ref)


def test_check_equivalence_is_exact():
    dev, checked = bdc.check_equivalence(65, 3, 3, 1, 1, 6, 6, seed=5)
    assert dev == 0.0
    assert checked > 0


def test_analytic_constant():
    c = bdc.analytic_abs_error_constant()
    assert abs(c - 0.5354) < 5e-5
    mean, stderr = bdc.monte_carlo_abs_error(200000, seed=3)
    assert abs(mean - c) <= 3 * stderr


def test_gradient_error_experiment():
    r1 = bdc.gradient_error_experiment(1, channels=4, trials=60, seed=7)
    assert r1["relative_deviation"] < 0.1
    r3 = bdc.gradient_error_experiment(3, channels=4, trials=60, seed=7)
    assert 5.0 <= r3["empirical_eae"] / r1["empirical_eae"] <= 13.0


def test_cost_of_layer_identities():
    r = bdc.cost_of_layer(64, 64, 3, 1, 1, 32, 32, binarized=True)
    assert r["ops_b_x64"] == 75497472
    assert r["ops_b"] * 64 == r["ops_b_x64"]
    assert r["params_b"] * 32 == r["params_b_x32"]


def test_miou_hand_case():
    gt = np.array([1, 1, 2, 0], dtype=np.int32).reshape(4, 1, 1)
    pred = np.array([1, 2, 2, 0], dtype=np.int32).reshape(4, 1, 1)
    per_class, present, mean = bdc.miou(pred, gt, 4)
    assert per_class[0] == 1.0
    assert per_class[1] == 0.5
    assert per_class[2] == 0.5
    assert not present[3]
    assert mean == pytest.approx(2.0 / 3.0)


def test_scene_determinism():
    a = bdc.generate_scene(11)
    b = bdc.generate_scene(11)
    np.testing.assert_array_equal(a["labels"], b["labels"])
    np.testing.assert_array_equal(a["views"], b["views"])
    assert a["labels"].shape == (16, 16, 4)
    assert a["views"].shape == (2, 2, 32, 32)
