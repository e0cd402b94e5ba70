import numpy as np
import pytest
from hypothesis import given, strategies as st

from vdmalab.viscoelastic import (
    ComplexModuli,
    DomainError,
    SlsParams,
    SymTensor2,
    apply_constitutive,
    bulk_shear_to_elastic,
    default_materials,
    elastic_to_bulk_shear,
    load_materials,
    materials_digest,
    save_materials,
    sls_modulus,
)

MATRIX, FIBER = default_materials()


def test_sls_relaxed_limit():
    assert sls_modulus(MATRIX.shear, 0.0) == 0.47 + 0.0j


def test_sls_at_unit_omega_tau():
    # hand expansion of (m_inf + j*m0)/(1 + j) for the matrix shear law
    m0, m_inf = 0.55, 0.47
    expected = complex(m_inf + 1j * m0) * (1 - 1j) / 2.0
    assert expected == pytest.approx(0.51 + 0.04j, rel=1e-14)
    assert sls_modulus(MATRIX.shear, 1.0) == pytest.approx(expected, rel=1e-14)


def test_sls_unrelaxed_limit():
    value = sls_modulus(FIBER.shear, 1e8 / FIBER.shear.tau)
    assert value.real == pytest.approx(30.4167, rel=1e-6)
    assert abs(value.imag) < 1e-5


def test_sls_loss_peak_location_and_height():
    # Im M = (m0 - m_inf) * wt / (1 + wt^2): maximum (m0-m_inf)/2 at wt = 1
    p = FIBER.shear
    wt = np.logspace(-3, 3, 601)
    loss = np.array([sls_modulus(p, w / p.tau).imag for w in wt])
    peak = np.argmax(loss)
    assert wt[peak] == pytest.approx(1.0, rel=1e-2)
    assert loss[peak] == pytest.approx((p.m0 - p.m_inf) / 2.0, rel=1e-4)
    assert sls_modulus(p, 1.0 / p.tau).imag == pytest.approx((p.m0 - p.m_inf) / 2.0, rel=1e-14)


@given(st.floats(1e-3, 1e3), st.floats(1.1, 20.0))
def test_sls_storage_monotone_when_stiffening(tau, ratio):
    p = SlsParams(m0=ratio, m_inf=1.0, tau=tau)
    omegas = np.logspace(-4, 4, 50) / tau
    storage = np.array([sls_modulus(p, w).real for w in omegas])
    assert np.all(np.diff(storage) >= -1e-12)


def test_sls_rejects_negative_omega():
    with pytest.raises(DomainError):
        sls_modulus(MATRIX.shear, -1.0)


def test_elastic_conversion_fiber_row():
    k, g = elastic_to_bulk_shear(73.0, 0.2)
    assert k == pytest.approx(40.5556, abs=5e-5)
    assert g == pytest.approx(30.4167, abs=5e-5)


def test_elastic_conversion_matrix_row():
    k, g = elastic_to_bulk_shear(1.6156, 0.4687)
    assert k == pytest.approx(8.60, rel=3e-3)
    assert g == pytest.approx(0.55, rel=3e-3)


def test_elastic_conversion_zero_poisson():
    assert elastic_to_bulk_shear(1.0, 0.0) == pytest.approx((1.0 / 3.0, 0.5))


def test_elastic_conversion_domain():
    with pytest.raises(DomainError):
        elastic_to_bulk_shear(1.0, 0.5)
    with pytest.raises(DomainError):
        elastic_to_bulk_shear(-1.0, 0.3)


@given(st.floats(0.1, 500.0), st.floats(-0.9, 0.49))
def test_elastic_conversion_round_trip(e, nu):
    k, g = elastic_to_bulk_shear(e, nu)
    e2, nu2 = bulk_shear_to_elastic(k, g)
    assert e2 == pytest.approx(e, rel=1e-12)
    assert nu2 == pytest.approx(nu, abs=1e-12)


def test_constitutive_pure_shear():
    m = ComplexModuli(k=3.0 + 0.2j, g=1.5 + 0.1j)
    sigma = apply_constitutive(m, SymTensor2(xx=0.0, yy=0.0, xy=0.25))
    assert sigma.xy == 2.0 * m.g * 0.25
    assert sigma.xx == 0.0 and sigma.yy == 0.0


def test_constitutive_equibiaxial():
    # eps_xx = eps_yy = e0 gives in-plane sigma = 2 e0 (K + G/3)
    m = ComplexModuli(k=3.0 + 0.2j, g=1.5 + 0.1j)
    e0 = 0.1 - 0.05j
    sigma = apply_constitutive(m, SymTensor2(xx=e0, yy=e0, xy=0.0))
    expected = 2.0 * e0 * (m.k + m.g / 3.0)
    assert sigma.xx == pytest.approx(expected, rel=1e-14)
    assert sigma.yy == pytest.approx(expected, rel=1e-14)
    assert sigma.xy == 0.0


def test_constitutive_zero_strain():
    sigma = apply_constitutive(ComplexModuli(k=2.0, g=1.0), SymTensor2(0.0, 0.0, 0.0))
    assert sigma.xx == sigma.yy == sigma.xy == 0.0


def test_constitutive_linearity():
    rng = np.random.default_rng(3)
    m = ComplexModuli(k=4.0 + 0.3j, g=2.0 + 0.15j)
    for _ in range(5):
        e1 = SymTensor2(*(rng.normal(size=3) + 1j * rng.normal(size=3)))
        e2 = SymTensor2(*(rng.normal(size=3) + 1j * rng.normal(size=3)))
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        combo = SymTensor2(a * e1.xx + b * e2.xx, a * e1.yy + b * e2.yy, a * e1.xy + b * e2.xy)
        s_combo = apply_constitutive(m, combo)
        s1, s2 = apply_constitutive(m, e1), apply_constitutive(m, e2)
        for comp in ("xx", "yy", "xy"):
            lhs = getattr(s_combo, comp)
            rhs = a * getattr(s1, comp) + b * getattr(s2, comp)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_builtin_material_constants():
    assert MATRIX.shear.tau == 1.0
    assert FIBER.bulk.m0 == 40.5556
    assert FIBER.bulk.m0 / FIBER.bulk.m_inf == pytest.approx(10.0, rel=1e-5)
    assert FIBER.shear.m0 / FIBER.shear.m_inf == pytest.approx(10.0, rel=1e-5)
    assert (MATRIX.bulk.m0, MATRIX.bulk.m_inf) == (8.6, 7.33)
    assert (MATRIX.shear.m0, MATRIX.shear.m_inf) == (0.55, 0.47)


def test_builtin_consistent_with_elastic_rows():
    # the K/G constants should match conversion from the E/nu rows
    k0, g0 = elastic_to_bulk_shear(73.0, 0.2)
    assert FIBER.bulk.m0 == pytest.approx(k0, abs=5e-5)
    assert FIBER.shear.m0 == pytest.approx(g0, abs=5e-5)
    k0m, g0m = elastic_to_bulk_shear(1.6156, 0.4687)
    assert MATRIX.bulk.m0 == pytest.approx(k0m, rel=3e-3)
    assert MATRIX.shear.m0 == pytest.approx(g0m, rel=3e-3)


def test_materials_file_round_trip(tmp_path):
    path = tmp_path / "mats.json"
    save_materials(path, (MATRIX, FIBER))
    loaded = load_materials(str(path))
    assert loaded == (MATRIX, FIBER)
    assert materials_digest(loaded) == materials_digest((MATRIX, FIBER))


def test_materials_preset_lookup():
    assert load_materials("pp-glass") == (MATRIX, FIBER)
    with pytest.raises(FileNotFoundError):
        load_materials("no-such-preset")


def test_sls_params_validation():
    with pytest.raises(DomainError):
        SlsParams(m0=-1.0, m_inf=1.0, tau=1.0)
    with pytest.raises(DomainError):
        SlsParams(m0=1.0, m_inf=1.0, tau=0.0)
