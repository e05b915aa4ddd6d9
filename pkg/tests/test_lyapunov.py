"""Potential-function and drift-factor tests."""

import numpy as np
import pytest

from reline.distributions import erlang, exponential
from reline.lyapunov import (
    drift_bracket_station1,
    drift_bracket_station2,
    drift_report,
    f1_value,
    f2_value,
    moment_sweep,
    station1_bracket_box,
    station1_weights,
    station2_identity_box,
    station2_weights,
)
from reline.mgf_calculus import direction_station1, direction_station2
from reline.model import BaseParams, scale, symmetric_exponential_base
from .test_model import random_valid_base


def test_f1_zero_state():
    base = symmetric_exponential_base()
    assert f1_value(np.zeros(5), 0.1, 3, base) == 0.0


def test_f1_symmetric_coefficients():
    base = symmetric_exponential_base()
    w = station1_weights(base)
    assert np.allclose(w, [1.0, 0.0, 1.0, 0.0, 1.0], atol=1e-12)


def test_f1_hand_value():
    # n=1, r=0.1, z=(2,0,1,0,1), symmetric weights -> (1/2) * 4^2 = 8
    base = symmetric_exponential_base()
    assert f1_value([2, 0, 1, 0, 1], 0.1, 1, base) == pytest.approx(8.0, abs=1e-12)


def test_f1_scaling_in_r_and_n():
    base = symmetric_exponential_base()
    z = [3, 1, 2, 5, 1]
    w = station1_weights(base)
    s = float(w @ np.array(z, dtype=float))
    for n in (1, 2, 3):
        for r in (0.3, 0.1):
            assert f1_value(z, r, n, base) == pytest.approx(
                r ** (n - 1) * s ** (n + 1) / (n + 1), rel=1e-12
            )
    with pytest.raises(ValueError):
        f1_value(z, 0.1, 0, base)


def test_f1_requires_positive_denominator():
    base = BaseParams(
        alpha1=1.0,
        m=(0.05, 0.8, 0.15, 0.2, 0.8),
        dist_e=exponential(),
        dist_s=tuple(exponential() for _ in range(5)),
        heavy_traffic=False,
    )
    with pytest.raises(ValueError):
        f1_value([1, 0, 0, 0, 0], 0.1, 1, base)


def test_f1_weights_match_station1_direction():
    rng = np.random.default_rng(17)
    for _ in range(20):
        base = random_valid_base(rng)
        assert np.allclose(
            station1_weights(base), direction_station1(base), atol=1e-10
        )


def test_f2_zero_and_weights():
    base = symmetric_exponential_base()
    assert f2_value(np.zeros(5), 0.2, 2, base) == 0.0
    v = station2_weights(base)
    assert np.allclose(v, [2.0, 2.0, 1.0, 1.0, 0.0], atol=1e-15)
    # matches the station-2 direction on all coordinates
    assert np.allclose(v, direction_station2(base), atol=1e-15)


def test_f2_hand_value():
    base = symmetric_exponential_base()
    z = [1, 1, 1, 1, 0]
    # weighted sum = 2+2+1+1 = 6; n=2, r=0.2: (1/3) * 0.2^2 * 6^3
    assert f2_value(z, 0.2, 2, base) == pytest.approx(0.04 * 216 / 3, rel=1e-12)


def test_station2_bracket_away_from_idle():
    """Any z with z2 > 0 gives exactly (1/m4) * (-r^2/(1-r^2))."""
    inst = scale(symmetric_exponential_base(), 0.3)
    m4 = inst.base.m[3]
    expected = (1.0 / m4) * (-0.09 / (1 - 0.09))
    for z in ([0, 1, 0, 0, 0], [2, 3, 1, 4, 0], [0, 1, 0, 7, 2]):
        lead, closed, ok = drift_bracket_station2(z, inst)
        assert ok
        assert lead == pytest.approx(expected, abs=1e-12)


def test_station2_bracket_idle_event():
    """On {z2=z4=0} the leading factor equals alpha1/m4 exactly (the idle
    indicator term carries the 1/(1-r^2) factor)."""
    inst = scale(symmetric_exponential_base(), 0.3)
    m4 = inst.base.m[3]
    lead, closed, ok = drift_bracket_station2([3, 0, 2, 0, 1], inst)
    assert ok
    assert lead == pytest.approx(1.0 / m4, abs=1e-12)
    assert closed == pytest.approx(
        (1.0 / m4) * (-0.09 / 0.91 + 1.0 / 0.91), abs=1e-12
    )


def test_station2_identity_exhaustive():
    for r in (0.1, 0.3):
        inst = scale(symmetric_exponential_base(), r)
        holds, dev = station2_identity_box(inst, 6)
        assert holds, f"max deviation {dev}"


def test_station1_bracket_empty_state():
    inst = scale(symmetric_exponential_base(), 0.1)
    bracket, bound, ok = drift_bracket_station1(np.zeros(5), inst)
    assert ok
    assert bracket == pytest.approx(inst.base.alpha1, abs=1e-12)
    # idle allowance makes the bound positive at the origin
    assert bound > bracket


def test_station1_bracket_busy_state():
    inst = scale(symmetric_exponential_base(), 0.1)
    bracket, bound, ok = drift_bracket_station1([0, 1, 0, 0, 1], inst)
    assert ok
    assert bound == pytest.approx(-0.1 / 0.9, abs=1e-12)
    assert bracket <= bound + 1e-12


def test_station1_bracket_exhaustive_small_box():
    for r in (0.1, 0.3):
        inst = scale(symmetric_exponential_base(), r)
        holds, worst = station1_bracket_box(inst, 6)
        assert holds, f"worst margin {worst}"


def test_station1_bracket_random_bases():
    rng = np.random.default_rng(23)
    for _ in range(3):
        base = random_valid_base(rng)
        inst = scale(base, 0.2)
        holds, worst = station1_bracket_box(inst, 5)
        assert holds, f"base {base.m}: worst margin {worst}"


def test_drift_report_bundles_both_stations():
    inst = scale(symmetric_exponential_base(), 0.2)
    rep = drift_report([1, 2, 0, 3, 0], inst)
    assert rep.satisfied1 and rep.satisfied2
    assert rep.z == (1, 2, 0, 3, 0)


def test_drift_requires_exponential_heavy_traffic():
    base = BaseParams(
        alpha1=1.0,
        m=symmetric_exponential_base().m,
        dist_e=exponential(),
        dist_s=(erlang(2),) + tuple(exponential() for _ in range(4)),
    )
    inst = scale(base, 0.2)
    with pytest.raises(ValueError, match="exponential"):
        drift_bracket_station1(np.zeros(5), inst)

    base2 = BaseParams(
        alpha1=1.0,
        m=(0.2, 0.3, 0.2, 0.3, 0.2),
        dist_e=exponential(),
        dist_s=tuple(exponential() for _ in range(5)),
        heavy_traffic=False,
    )
    inst2 = scale(base2, 0.2)
    with pytest.raises(ValueError, match="normalization"):
        drift_bracket_station2(np.zeros(5), inst2)


def test_moment_sweep_smoke():
    base = symmetric_exponential_base()
    sweep = moment_sweep(base, [0.5, 0.4], orders=(1, 2), horizon=2_000_000, seed=7)
    assert len(sweep.rows) == 4
    for row in sweep.rows:
        assert np.isfinite(row.z1_moment) and row.z1_moment >= 0
        assert np.isfinite(row.z4_ci) and row.z4_ci > 0
    assert set(sweep.z1_increasing_trend) == {1, 2}


def test_moment_sweep_validates_inputs():
    base = symmetric_exponential_base()
    with pytest.raises(ValueError, match="decreasing"):
        moment_sweep(base, [0.3, 0.4], horizon=100_000)
    with pytest.raises(ValueError, match="orders"):
        moment_sweep(base, [0.4, 0.3], orders=(4,), horizon=100_000)
