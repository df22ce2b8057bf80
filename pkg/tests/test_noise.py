import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stpulse.noise import (
    ExchangeModel,
    InsufficientData,
    NoiseGrid,
    SweepTable,
    gaussian_factor_check,
    gaussian_samples,
    infidelity_sweep,
    scaling_exponent,
)
from stpulse.su2 import PulseSequence, compose, infidelity_single, rotation

PI = math.pi


def test_exponential_model_slope():
    m = ExchangeModel(J0=0.1, J1=2.0, eps0=0.5)
    eps = np.linspace(-1, 1, 5)
    J = m.J(eps)
    # g = dJ/deps
    num = (m.J(eps + 1e-6) - m.J(eps - 1e-6)) / 2e-6
    assert np.allclose(m.g(J), num, rtol=1e-7)
    assert m.Jmin == 0.1


def test_model_round_trip_and_key():
    m = ExchangeModel(J0=0.0, J1=1.0, eps0=0.3, Jmax=40)
    assert ExchangeModel.from_dict(m.to_dict()) == m
    assert m.key() != ExchangeModel().key()
    c = ExchangeModel(kind="custom", g_coeffs=(1.0, 0.0), Jmin_custom=0.0)
    assert ExchangeModel.from_dict(c.to_dict()) == c


@pytest.mark.parametrize("kw", [dict(eps0=0), dict(kind="bogus"), dict(kind="custom"), dict(Jmax=0.0)])
def test_model_validation(kw):
    with pytest.raises(ValueError):
        ExchangeModel(**kw)


def test_grid_constructors():
    g = NoiseGrid.axis("eps", [1e-3, 1e-2])
    assert g.points.tolist() == [[0, 1e-3], [0, 1e-2]]
    assert NoiseGrid.product([0, 1], [2, 3, 4]).points.shape == (6, 2)
    with pytest.raises(ValueError):
        NoiseGrid.axis("z", [1])
    with pytest.raises(ValueError):
        NoiseGrid(np.empty((0, 2)))
    with pytest.raises(ValueError):
        NoiseGrid.gaussian_widths([(-1, 0)])


def test_sweep_matches_direct_composition():
    m = ExchangeModel()
    seq = PulseSequence.from_pairs([(1.0, PI / 2)])
    target = rotation((1, 0, 1), PI / 2)
    t = infidelity_sweep(seq, target, NoiseGrid.product([0.0, 0.01], [0.0, -0.02]), m)
    for h, e, f in zip(t.delta_h, t.delta_eps, t.infidelity):
        assert f == pytest.approx(infidelity_single(compose(seq, h, e, m), target), abs=1e-18)


def test_csv_round_trip_is_exact():
    t = SweepTable(np.array([1e-3, 2e-3]), np.zeros(2), np.array([1.2345678901234567e-9, 3e-7]), "x")
    back = SweepTable.from_csv(t.to_csv())
    assert np.array_equal(back.infidelity, t.infidelity) and back.label == "x"


def test_gaussian_point_mass_matches_point():
    m = ExchangeModel()
    seq = PulseSequence.from_pairs([(1.0, PI / 2)])
    target = rotation((1, 0, 1), PI / 2)
    g = infidelity_sweep(seq, target, NoiseGrid.gaussian_widths([(0.0, 0.0)], 1000), m)
    assert g.infidelity[0] == pytest.approx(0.0, abs=1e-30)


def test_philox_keyed_by_point():
    a = gaussian_samples(7, 3, 100, 1.0, 1.0)
    b = gaussian_samples(7, 3, 100, 1.0, 1.0)
    c = gaussian_samples(7, 4, 100, 1.0, 1.0)
    assert np.array_equal(a[0], b[0]) and not np.array_equal(a[0], c[0])


def test_gaussian_sweep_order_independent():
    m = ExchangeModel()
    seq = PulseSequence.from_pairs([(1.0, PI / 2)])
    target = rotation((1, 0, 1), PI / 2)
    both = infidelity_sweep(seq, target, NoiseGrid.gaussian_widths([(0.01, 0), (0.02, 0)], 2000, 5), m)
    one = infidelity_sweep(seq, target, NoiseGrid(np.array([(0.02, 0.0)]).reshape(1, 2), True, 2000, 5), m)
    # the second point of 'both' used key (5, 1); a fresh single-point grid uses (5, 0)
    assert both.infidelity[1] != one.infidelity[0]
    again = infidelity_sweep(seq, target, NoiseGrid.gaussian_widths([(0.01, 0), (0.02, 0)], 2000, 5), m)
    assert np.array_equal(both.infidelity, again.infidelity)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(-20, 5))
def test_scaling_exponent_recovers_power_law(p, logc):
    d = np.geomspace(1e-4, 1e-2, 11)
    slope, icpt, r2 = scaling_exponent(d, np.exp(logc) * d ** p, floor=0.0)
    assert slope == pytest.approx(p, abs=1e-9)
    assert r2 == pytest.approx(1.0)


def test_scaling_exponent_guards():
    d = np.geomspace(1e-4, 1e-2, 4)
    with pytest.raises(InsufficientData):
        scaling_exponent(d, d ** 2)
    d = np.geomspace(1e-4, 1e-2, 6)
    with pytest.raises(InsufficientData):
        scaling_exponent(d, np.full(6, 1e-30))
    with pytest.raises(InsufficientData):
        scaling_exponent(d, d ** 2, fit_range=(1e-3, 2e-3))


def test_gaussian_fourth_moment_is_three(monkeypatch):
    import stpulse.su2 as su2

    # 1 - F of exp(-i a sz / 2) against I is a^2 / 6; with a = sqrt(6) d^2 it is d^4
    def fake_compose(seq, dh=0.0, deps=0.0, model=None):
        a = math.sqrt(6) * np.asarray(dh, dtype=float) ** 2
        out = np.zeros(np.shape(a) + (2, 2), dtype=complex)
        out[..., 0, 0] = np.exp(-0.5j * a)
        out[..., 1, 1] = np.exp(0.5j * a)
        return out

    monkeypatch.setattr(su2, "compose", fake_compose)
    sigma = 1e-2
    r = gaussian_factor_check(None, np.eye(2), sigma, ExchangeModel(), samples=400_000, seed=3)
    assert r == pytest.approx(3.0, rel=0.02)
    r_even = gaussian_factor_check(None, np.eye(2), sigma, ExchangeModel(), samples=400_000, seed=3, even=True)
    assert r_even == pytest.approx(r)
