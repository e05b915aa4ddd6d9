"""Network scaling, stability, and limit-constant tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reline.distributions import deterministic, erlang, exponential
from reline.model import (
    BaseParams,
    UnstableError,
    check_stability,
    limit_constants,
    limit_mgf,
    scale,
    stability_report,
    symmetric_exponential_base,
)


def random_valid_base(rng, require_nonneg_a2=False):
    """Random heavy-traffic base: normalized, virtual-station stable, D > 0."""
    while True:
        m1, m3, m5 = rng.dirichlet(np.ones(3))
        if min(m1, m3, m5) < 0.02:
            continue
        lo = max(m5, 0.05)
        if lo >= 0.95:
            continue
        m4 = rng.uniform(lo + 0.02, 0.95)
        m2 = 1.0 - m4
        base = BaseParams(
            alpha1=1.0,
            m=(m1, m2, m3, m4, m5),
            dist_e=exponential(),
            dist_s=tuple(exponential() for _ in range(5)),
        )
        if m1 + m3 - m5 * m2 / m4 <= 0.01:
            continue
        if require_nonneg_a2 and m3 - m5 * m2 / m4 < 0.0:
            continue
        return base


def test_scale_symmetric_example():
    base = symmetric_exponential_base()
    inst = scale(base, 0.1)
    assert inst.rho1 == pytest.approx(0.9, abs=1e-12)
    assert inst.rho2 == pytest.approx(0.99, abs=1e-12)
    assert inst.beta[0] == pytest.approx(0.1, abs=1e-12)
    assert inst.beta[3] == pytest.approx(0.01, abs=1e-12)


def test_scaled_means_formula():
    base = symmetric_exponential_base()
    inst = scale(base, 0.25)
    m = np.array(base.m)
    expected = m * np.array([0.75, 1 - 0.0625, 0.75, 1 - 0.0625, 0.75])
    assert np.allclose(inst.m_r_array(), expected, atol=1e-15)
    assert np.allclose(inst.mu_r_array() * inst.m_r_array(), 1.0, atol=1e-12)


@pytest.mark.parametrize("r", [0.9, 0.5, 0.2, 0.05, 0.011])
def test_multi_scale_identities(r):
    """r^-1 (1-rho1) = 1 and r^-2 (1-rho2) = 1 exactly in heavy mode."""
    inst = scale(symmetric_exponential_base(), r)
    assert (1.0 - inst.rho1) / r == pytest.approx(1.0, abs=1e-12)
    assert (1.0 - inst.rho2) / r**2 == pytest.approx(1.0, abs=1e-12)


def test_critical_limit_loads():
    rep = stability_report(symmetric_exponential_base(), 0.0)
    assert rep.rho1 == pytest.approx(1.0, abs=1e-12)
    assert rep.rho2 == pytest.approx(1.0, abs=1e-12)


def test_scale_rejects_bad_r():
    base = symmetric_exponential_base()
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            scale(base, bad)


def test_heavy_mode_rejects_bad_normalization():
    with pytest.raises(ValueError):
        BaseParams(
            alpha1=1.0,
            m=(0.4, 0.5, 0.4, 0.5, 0.4),
            dist_e=exponential(),
            dist_s=tuple(exponential() for _ in range(5)),
        )


def test_heavy_mode_rejects_virtual_station_violation():
    # m2 + m5 = 1.05 with both normalizations intact
    with pytest.raises(UnstableError):
        BaseParams(
            alpha1=1.0,
            m=(0.4, 0.75, 0.3, 0.25, 0.3),
            dist_e=exponential(),
            dist_s=tuple(exponential() for _ in range(5)),
        )


def test_check_stability_symmetric():
    inst = scale(symmetric_exponential_base(), 0.1)
    rep = check_stability(inst)
    assert rep.stable
    # hand arithmetic: rho_v = (1-r^2)/2 + (1-r)/3
    assert rep.rho_v == pytest.approx((1 - 0.01) / 2 + 0.9 / 3, abs=1e-12)
    assert rep.rho_v == pytest.approx(0.795, abs=1e-12)


def test_far_from_critical_is_stable():
    inst = scale(symmetric_exponential_base(), 0.99)
    assert check_stability(inst).stable


def test_virtual_station_violation_reported_at_base():
    base = BaseParams(
        alpha1=1.0,
        m=(0.05, 0.9, 0.05, 0.1, 0.9),
        dist_e=exponential(),
        dist_s=tuple(exponential() for _ in range(5)),
        heavy_traffic=False,
    )
    rep = stability_report(base, 0.0)
    assert not rep.stable and rep.rho_v > 1.0
    with pytest.raises(UnstableError):
        scale(base, 0.3)


def test_beta_ordering_over_random_bases():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        base = random_valid_base(rng)
        r = rng.uniform(0.05, 0.9)
        inst = scale(base, r)
        b = inst.beta
        assert b[0] <= b[2] + 1e-15 <= b[4] + 2e-15  # beta1 <= beta3 <= beta5
        assert b[3] <= b[1] + 1e-15                  # beta4 <= beta2
        assert all(0.0 < x <= 1.0 for x in b)


def test_limit_constants_symmetric_exponential():
    law = limit_constants(symmetric_exponential_base())
    assert law.d1 == pytest.approx(1.0, abs=1e-12)
    assert law.d4 == pytest.approx(1.5, abs=1e-12)
    assert law.denom == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_limit_constants_deterministic_all_zero():
    base = BaseParams(
        alpha1=1.0,
        m=symmetric_exponential_base().m,
        dist_e=deterministic(),
        dist_s=tuple(deterministic() for _ in range(5)),
    )
    law = limit_constants(base)
    assert law.d1 == 0.0
    assert law.d4 == 0.0


def test_limit_constants_erlang_services():
    base = BaseParams(
        alpha1=1.0,
        m=symmetric_exponential_base().m,
        dist_e=exponential(),
        dist_s=tuple(erlang(2) for _ in range(5)),
    )
    law = limit_constants(base)
    # d4 = (1/(2*0.5)) * (1*1 + 0.25*0.5 + 0.25*0.5) = 1.25
    assert law.d4 == pytest.approx(1.25, abs=1e-12)


def test_limit_constants_rejects_degenerate_denominator():
    base = BaseParams(
        alpha1=1.0,
        m=(0.05, 0.8, 0.15, 0.2, 0.8),
        dist_e=exponential(),
        dist_s=tuple(exponential() for _ in range(5)),
        heavy_traffic=False,
    )
    # D = 0.05 + 0.15 - 0.8*0.8/0.2 = -3.0
    with pytest.raises(ValueError, match="outside validated regime"):
        limit_constants(base)


def test_limit_constants_do_not_depend_on_r():
    base = symmetric_exponential_base()
    law = limit_constants(base)
    for r in (0.5, 0.1):
        inst = scale(base, r)
        law_again = limit_constants(inst.base)
        assert law_again.d1 == law.d1 and law_again.d4 == law.d4


def test_limit_mgf_values():
    law = limit_constants(symmetric_exponential_base())
    assert limit_mgf(law, 0.0, 0.0) == 1.0
    assert limit_mgf(law, -1.0, -2.0) == pytest.approx(1.0 / 8.0, abs=1e-15)
    # marginal of the first coordinate
    assert limit_mgf(law, -0.7, 0.0) == pytest.approx(1.0 / 1.7, abs=1e-15)
    with pytest.raises(ValueError):
        limit_mgf(law, 0.5, 0.0)


@settings(max_examples=60, deadline=None)
@given(
    eta1=st.floats(min_value=-8.0, max_value=0.0),
    eta4=st.floats(min_value=-8.0, max_value=0.0),
)
def test_limit_mgf_factorizes(eta1, eta4):
    law = limit_constants(symmetric_exponential_base())
    joint = limit_mgf(law, eta1, eta4)
    assert joint == pytest.approx(
        limit_mgf(law, eta1, 0.0) * limit_mgf(law, 0.0, eta4), rel=1e-12
    )


def test_base_params_from_config():
    cfg = {
        "alpha1": 1.0,
        "m": [1 / 3, 0.5, 1 / 3, 0.5, 1 / 3],
        "dist_e": {"family": "exponential"},
        "dist_s": [{"family": "erlang", "k": 2}] * 5,
        "heavy_traffic": True,
    }
    base = BaseParams.from_config(cfg)
    assert base.dist_s[0].family == "erlang"
    assert base.heavy_traffic
