import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lsfno.tensors import (
    IsotropicMaterial,
    double_contract,
    in_stiffness_class,
    isotropic_stiffness,
    mandel_pack,
    mandel_to_voigt_stiffness,
    mandel_unpack,
    spectral_bounds,
    spectral_norm,
    voigt_to_mandel_stiffness,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def test_pack_identity_and_shear():
    assert np.array_equal(mandel_pack(np.eye(3)), [1, 1, 1, 0, 0, 0])
    e = np.zeros((3, 3))
    e[0, 1] = e[1, 0] = 1.0
    assert mandel_pack(e)[5] == pytest.approx(np.sqrt(2))
    e2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert mandel_pack(e2)[2] == pytest.approx(np.sqrt(2))


def test_pack_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        mandel_pack(np.array([[0.0, 1.0, 0], [0, 0, 0], [0, 0, 0]]))


def test_norm_preserved_bulk():
    rng = np.random.default_rng(0)
    for d in (2, 3):
        e = sym(rng.normal(size=(10_000, d, d)))
        v = mandel_pack(e)
        assert np.max(np.abs(np.linalg.norm(v, axis=-1) - np.linalg.norm(e, axis=(-2, -1)))) < 1e-13


@given(arrays(float, (3, 3), elements=finite))
def test_roundtrip_exact(a):
    e = sym(a)
    back = mandel_unpack(mandel_pack(e))
    # diagonal slots are copied, shear slots go through one multiply and divide by sqrt 2
    assert np.array_equal(np.diag(back), np.diag(e))
    assert np.allclose(back, e, rtol=1e-15, atol=0)


def test_unpack_complex():
    v = np.array([1 + 1j, 2, 3j])
    t = mandel_unpack(v)
    assert t.dtype.kind == "c" and t[0, 1] == pytest.approx(3j / np.sqrt(2))


def test_isotropic_reference_values():
    mat = IsotropicMaterial(3.0, 0.3)
    lam, mu = mat.lame
    assert mu == pytest.approx(1.15385, abs=1e-5)
    assert lam == pytest.approx(1.73077, abs=1e-5)
    C = isotropic_stiffness(mat)
    assert C[0, 0] == pytest.approx(4.03846, abs=1e-5)
    assert spectral_bounds(C) == pytest.approx((2.30769, 7.5), abs=1e-5)
    sigma = double_contract(C, np.array([1e-3, 0, 0, 0, 0, 0]))
    assert sigma[0] == pytest.approx(4.03846e-3, abs=1e-8)


def test_zero_poisson_decouples():
    C = isotropic_stiffness(IsotropicMaterial(7.0, 0.0))
    assert C[0, 0] == pytest.approx(7.0)
    assert np.allclose(C[:3, :3] - np.diag(np.diag(C[:3, :3])), 0)


def test_isotropic_eigenvalues():
    mat = IsotropicMaterial(36.0, 0.22)
    lam, mu = mat.lame
    ev = np.sort(np.linalg.eigvalsh(isotropic_stiffness(mat)))
    assert np.allclose(ev, sorted([3 * lam + 2 * mu] + [2 * mu] * 5))
    ev2 = np.sort(np.linalg.eigvalsh(isotropic_stiffness(mat, 2)))
    assert np.allclose(ev2, sorted([2 * lam + 2 * mu, 2 * mu, 2 * mu]))


def test_invalid_materials():
    with pytest.raises(ZeroDivisionError):
        IsotropicMaterial(1.0, 0.5)
    with pytest.raises(ValueError):
        IsotropicMaterial(-1.0, 0.2)
    with pytest.raises(ValueError):
        IsotropicMaterial(1.0, 0.7)


def test_inclusion_bounds_dominate_matrix():
    lo_m, hi_m = spectral_bounds(isotropic_stiffness(IsotropicMaterial(3.0, 0.3)))
    lo_i, hi_i = spectral_bounds(isotropic_stiffness(IsotropicMaterial(36.0, 0.22)))
    assert lo_i >= lo_m and hi_i >= hi_m


def test_identity_contract_and_bounds():
    e = np.arange(6.0)
    assert np.array_equal(double_contract(np.eye(6), e), e)
    assert np.array_equal(double_contract(np.eye(6), np.zeros(6)), np.zeros(6))
    assert spectral_bounds(np.eye(6)) == (1.0, 1.0)
    assert in_stiffness_class(np.eye(6), 1.0, 1.0)
    assert not in_stiffness_class(2 * np.eye(6), 0.5, 1.5)


def test_contract_field_shape():
    rng = np.random.default_rng(1)
    T = rng.normal(size=(6, 6))
    e = rng.normal(size=(6, 4, 5))
    out = double_contract(T, e)
    assert out.shape == (6, 4, 5)
    assert np.allclose(out[:, 2, 3], T @ e[:, 2, 3])


def test_mandel_contract_matches_tensor_contract():
    # C:e computed with full 4th-order index sums equals the Mandel product
    mat = IsotropicMaterial(5.0, 0.25)
    lam, mu = mat.lame
    I = np.eye(3)
    C4 = lam * np.einsum("ij,kl->ijkl", I, I) + mu * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))
    e = sym(np.random.default_rng(2).normal(size=(3, 3)))
    s = np.einsum("ijkl,kl->ij", C4, e)
    assert np.allclose(mandel_pack(s), isotropic_stiffness(mat) @ mandel_pack(e))


@settings(max_examples=200)
@given(arrays(float, (6, 6), elements=finite), arrays(float, 6, elements=finite))
def test_spectral_norm_bounds_contraction(T, e):
    assert np.linalg.norm(double_contract(T, e)) <= spectral_norm(T) * np.linalg.norm(e) * (1 + 1e-12) + 1e-9


def test_voigt_mandel_roundtrip():
    C = isotropic_stiffness(IsotropicMaterial(3.0, 0.3))
    V = mandel_to_voigt_stiffness(C)
    assert V[3, 3] == pytest.approx(C[3, 3] / 2)
    assert np.allclose(voigt_to_mandel_stiffness(V), C)


def test_spectral_bounds_rejects_asymmetric():
    T = np.eye(6)
    T[0, 1] = 1.0
    with pytest.raises(ValueError):
        spectral_bounds(T)
