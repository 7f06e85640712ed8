import math

import numpy as np
import pytest

from treelets.data import DataMatrix
from treelets.errors import InvalidSpec, NonPositiveEntry
from treelets.simgen import (
    Block,
    BlockModelSpec,
    DriverModulatorSpec,
    GlobalFactorSpec,
    block_covariance,
    gen_block,
    gen_driver_modulator,
    gen_global_factor,
    log_transform,
    spec_from_json,
)


def blocks(*pairs):
    return tuple(Block(size, rho) for size, rho in pairs)


def mean_offdiag(R, labels, same):
    labels = np.asarray(labels)
    mask = (labels[:, None] == labels[None, :]) == same
    np.fill_diagonal(mask, False)
    return R[mask].mean()


def test_single_variable_block_is_standard_normal():
    X, labels = gen_block(BlockModelSpec(1, 20000, blocks((1, 0.0))))
    assert X.p == 1 and labels == [0]
    col = X.values[:, 0]
    assert abs(col.mean()) < 4 / math.sqrt(20000)
    assert abs(col.var() - 1) < 0.05


def test_independent_blocks_have_vanishing_correlation():
    n = 400
    X, _ = gen_block(BlockModelSpec(3, n, blocks(*[(1, 0.0)] * 20)))
    R = np.corrcoef(X.values, rowvar=False)
    r = R[np.triu_indices(20, 1)]
    assert np.mean(np.abs(r) < 3 / math.sqrt(n)) >= 0.95


def test_two_blocks_within_and_between_correlation():
    # The between-block mean in one draw is ~0.9 * corr(z1, z2), sd about 0.04 at
    # n = 500, so that band is checked on the average over seeds.
    between = []
    for seed in range(100):
        X, labels = gen_block(BlockModelSpec(seed, 500, blocks((10, 0.9), (10, 0.9))))
        R = np.corrcoef(X.values, rowvar=False)
        assert 0.85 <= mean_offdiag(R, labels, True) <= 0.95
        between.append(mean_offdiag(R, labels, False))
    assert -0.05 <= np.mean(between) <= 0.05
    assert np.std(between) < 0.06


def test_block_determinism():
    spec = BlockModelSpec(7, 50, blocks((3, 0.5), (4, 0.2)), noise_sd=0.3)
    a, _ = gen_block(spec)
    b, _ = gen_block(spec)
    assert a.values.tobytes() == b.values.tobytes()
    c, _ = gen_block(BlockModelSpec(8, 50, spec.blocks, noise_sd=0.3))
    assert a.values.tobytes() != c.values.tobytes()


def test_global_factor_zero_is_bit_identical():
    spec = BlockModelSpec(11, 80, blocks((5, 0.7), (2, 0.0)), noise_sd=0.2)
    a, la = gen_block(spec)
    b, lb = gen_global_factor(GlobalFactorSpec(spec, 0.0))
    assert a.values.tobytes() == b.values.tobytes()
    assert la == lb


@pytest.mark.parametrize("g, target", [(1.0, 0.5), (3.0, 0.9)])
def test_global_factor_between_block_correlation(g, target):
    assert g * g / (1 + g * g) == pytest.approx(target)
    spec = GlobalFactorSpec(BlockModelSpec(5, 40000, blocks((2, 0.0), (2, 0.0))), g)
    X, labels = gen_global_factor(spec)
    R = np.corrcoef(X.values, rowvar=False)
    assert mean_offdiag(R, labels, False) == pytest.approx(target, abs=0.02)


def test_block_covariance_converges_at_root_n():
    # ||S - Sigma||_F * sqrt(n) should stay roughly constant as n grows.
    spec_of = lambda seed, n: BlockModelSpec(seed, n, blocks((4, 0.6), (3, 0.3)), noise_sd=0.5)
    sigma = block_covariance(spec_of(0, 10))
    scaled = []
    for n in (100, 400, 1600, 6400):
        dist = []
        for seed in range(30):
            X, _ = gen_block(spec_of(seed, n))
            dist.append(np.linalg.norm(np.cov(X.values, rowvar=False) - sigma))
        scaled.append(np.mean(dist) * math.sqrt(n))
    assert max(scaled) / min(scaled) < 1.3


def test_block_covariance_global():
    spec = GlobalFactorSpec(BlockModelSpec(0, 10, blocks((2, 0.5), (1, 0.0)), noise_sd=0.1), 2.0)
    C = block_covariance(spec)
    np.testing.assert_allclose(np.diag(C), 1 + 0.01 + 4)
    assert C[0, 1] == pytest.approx(4.5) and C[0, 2] == pytest.approx(4.0)


# -- driver / modulator ------------------------------------------------------------


def population_log_corr(d, m, sd_d, sd_u):
    """Closed form for log values: driver D_k, modulator D_k + U."""
    p = d * (m + 1)
    var = np.array([sd_d ** 2 if j == 0 else sd_d ** 2 + sd_u ** 2 for _ in range(d) for j in range(m + 1)])
    C = np.zeros((p, p))
    for k in range(d):
        sl = slice(k * (m + 1), (k + 1) * (m + 1))
        C[sl, sl] = sd_d ** 2
    C[np.diag_indices(p)] = var
    s = np.sqrt(var)
    return C / np.outer(s, s)


def test_driver_modulator_shape_and_scale():
    X, labels = gen_driver_modulator(DriverModulatorSpec(1, 30, 3, 4))
    assert X.p == 15 and X.scale == "raw"
    assert labels == [k for k in range(3) for _ in range(5)]
    assert np.all(X.values > 0)


def test_driver_modulator_degenerate_factor():
    X, _ = gen_driver_modulator(DriverModulatorSpec(2, 200, 2, 3, 1.0, 1e-12))
    L = log_transform(X).values
    for k in range(2):
        drv = L[:, 4 * k]
        for j in range(1, 4):
            np.testing.assert_allclose(L[:, 4 * k + j], drv, atol=1e-10)
            assert np.corrcoef(drv, L[:, 4 * k + j])[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_driver_modulator_matches_closed_form():
    spec = DriverModulatorSpec(9, 20000, 3, 3, 1.0, 1.0)
    X, _ = gen_driver_modulator(spec)
    R = np.corrcoef(log_transform(X).values, rowvar=False)
    want = population_log_corr(3, 3, 1.0, 1.0)
    assert want[1, 2] == pytest.approx(0.5, abs=1e-15)
    assert np.abs(R - want).max() < 0.04


def test_driver_modulator_determinism():
    spec = DriverModulatorSpec(4, 20, 2, 2, 0.5, 0.3)
    assert gen_driver_modulator(spec)[0].values.tobytes() == gen_driver_modulator(spec)[0].values.tobytes()


# -- log_transform ------------------------------------------------------------------


def test_log_transform_values():
    X = DataMatrix.from_array([[math.e, 1.0]], scale="raw")
    out = log_transform(X)
    assert out.values[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert out.values[0, 1] == 0.0
    assert out.scale == "log"


@pytest.mark.parametrize("bad", [0.0, -2.0])
def test_log_transform_rejects_non_positive(bad):
    with pytest.raises(NonPositiveEntry) as err:
        log_transform(DataMatrix.from_array([[1.0, 2.0], [3.0, bad]], scale="raw"))
    assert (err.value.row, err.value.col) == (1, 1)


# -- spec validation ------------------------------------------------------------------


@pytest.mark.parametrize(
    "obj, field",
    [
        ({"model": "block", "seed": 1, "n": 10, "blocks": [{"size": 2, "rho": 0.5}], "p": 3}, "p"),
        ({"model": "block", "seed": 1, "n": 10, "blocks": [{"size": 2, "rho": 1.0}]}, "blocks[0].rho"),
        ({"model": "block", "seed": 1, "n": 0, "blocks": [{"size": 2, "rho": 0.5}]}, "n"),
        ({"model": "block", "seed": 1, "n": 5, "blocks": []}, "blocks"),
        ({"model": "block", "seed": 1, "n": 5, "blocks": [{"size": 2, "rho": 0.1}], "noise_sd": -1}, "noise_sd"),
        ({"model": "block", "n": 5, "blocks": [{"size": 2, "rho": 0.1}]}, "seed"),
        ({"model": "global_factor", "seed": 1, "n": 5, "blocks": [{"size": 1, "rho": 0}], "global_loading": -1}, "global_loading"),
        ({"model": "driver_modulator", "seed": 1, "n": 5, "drivers": 0, "modulators_per_driver": 1}, "drivers"),
        ({"model": "driver_modulator", "seed": 1, "n": 5, "drivers": 1, "modulators_per_driver": 1, "log_factor_sd": 0}, "log_factor_sd"),
        ({"model": "mystery", "seed": 1}, "model"),
    ],
)
def test_invalid_specs_name_the_field(obj, field):
    with pytest.raises(InvalidSpec) as err:
        spec_from_json(obj)
    assert err.value.field == field
    assert field in str(err.value)


def test_spec_from_json_round_trip():
    spec = spec_from_json(
        {"model": "global_factor", "seed": 3, "n": 10, "blocks": [{"size": 2, "rho": 0.4}], "p": 2, "global_loading": 1.5}
    )
    assert isinstance(spec, GlobalFactorSpec)
    assert spec.global_loading == 1.5 and spec.block.total_p == 2
