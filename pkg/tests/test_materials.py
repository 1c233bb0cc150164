import math
import warnings

import numpy as np
import pytest

from elastocorner.geometry import InterfaceId
from elastocorner.materials import (
    ConvexityViolation,
    LameParameters,
    MaterialError,
    MediumConfig,
    OnInterface,
    PositiveImpedanceWarning,
    UnknownInterface,
    elastic_tensor,
    sample_eta,
    sample_q,
    wavenumbers,
)


def test_wavenumbers():
    k = wavenumbers(LameParameters(1.0, 1.0), 3.0)
    assert k.k_p == pytest.approx(3.0 / math.sqrt(3.0))
    assert k.k_s == pytest.approx(3.0)


@pytest.mark.parametrize("lam,mu", [(1.0, 0.0), (-2.0, 1.0), (0.0, -1.0)])
def test_convexity_violation(lam, mu):
    with pytest.raises(ConvexityViolation):
        LameParameters(lam, mu)


def test_elastic_tensor_symmetries():
    C = elastic_tensor(LameParameters(2.0, 0.7))
    assert np.allclose(C, C.transpose(1, 0, 2, 3))
    assert np.allclose(C, C.transpose(2, 3, 0, 1))
    assert C[0, 0, 0, 0] == pytest.approx(2.0 + 2 * 0.7)
    assert C[0, 1, 0, 1] == pytest.approx(0.7)


def test_nest_sampling(two_layer_nest):
    cfg = MediumConfig.build(two_layer_nest, [2.0, 3.0], [-0.1, -0.2])
    assert sample_q(cfg, (0.0, 0.0)) == 3.0
    assert sample_q(cfg, (0.75, 0.0)) == 2.0
    assert sample_q(cfg, (5.0, 0.0)) == 1.0
    assert sample_eta(cfg, 1) == -0.2
    assert sample_eta(cfg, InterfaceId(0, 2)) == -0.1
    with pytest.raises(OnInterface):
        sample_q(cfg, (0.5, 0.0))


def test_cell_shares_one_eta(split_square):
    cfg = MediumConfig.build(split_square, [2.0, 1.5], -0.4)
    assert {sample_eta(cfg, i) for i in split_square.interfaces()} == {-0.4}
    with pytest.raises(UnknownInterface):
        sample_eta(cfg, InterfaceId(5, 0))


def test_counts_and_values_validated(unit_square):
    with pytest.raises(MaterialError):
        MediumConfig.build(unit_square, [2.0, 3.0], [0.0])
    with pytest.raises(MaterialError):
        MediumConfig.build(unit_square, [0.0], [0.0])
    with pytest.raises(MaterialError):
        MediumConfig.build(unit_square, [1.0], [math.nan])


def test_positive_eta_warns(unit_square):
    with pytest.warns(PositiveImpedanceWarning):
        MediumConfig.build(unit_square, [2.0], [0.3])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        MediumConfig.build(unit_square, [2.0], [-0.3])
