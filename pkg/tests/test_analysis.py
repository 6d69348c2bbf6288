import math

from hypothesis import given, strategies as st
import numpy as np
import pytest

from laplab.analysis import (
    ReferenceVectors,
    align_and_score,
    build_references,
    fit_loglog_slope,
    multiplicity_blocks,
    pointwise_error,
)
from laplab.eigen import SpectralResult, solve_lowest
from laplab.graph import KernelSpec, build_operators, laplacian_apply
from laplab.manifold import CIRCLE, SPHERE, analytic_spectrum, get_density, sample

S1_SYSTEM = analytic_spectrum(CIRCLE, 12)
S2_SYSTEM = analytic_spectrum(SPHERE, 16)


def spectral_from(V, lam):
    return SpectralResult(np.asarray(lam, float), np.asarray(V, float), "unit2norm")


def random_orthogonal(n, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


# ------------------------------------------------------------ references


def test_first_reference_is_constant(s1_uniform, s1_nonuniform):
    refs = build_references(s1_uniform, S1_SYSTEM, 3)
    np.testing.assert_allclose(refs.phi[:, 0], 1 / math.sqrt(s1_uniform.N))
    refs = build_references(s1_nonuniform, S1_SYSTEM, 3, "tilde_phi")
    np.testing.assert_allclose(refs.phi[:, 0], 1 / math.sqrt(s1_nonuniform.N))


def test_sphere_first_reference_is_constant(s2_uniform):
    refs = build_references(s2_uniform, S2_SYSTEM, 1)
    np.testing.assert_allclose(refs.phi[:, 0], 1 / math.sqrt(s2_uniform.N))


def test_reference_argument_errors(s1_uniform, s1_nonuniform):
    with pytest.raises(ValueError):
        build_references(s1_nonuniform, S1_SYSTEM, 3, "phi_scaled")
    with pytest.raises(ValueError):
        build_references(s1_uniform, S1_SYSTEM, 50)
    with pytest.raises(ValueError):
        build_references(s1_uniform, S1_SYSTEM, 3, "raw")


@pytest.mark.parametrize("model,N", [(CIRCLE, 500), (CIRCLE, 2000), (SPHERE, 500)])
def test_reference_norms_near_one(model, N):
    s = sample(model, get_density("uniform", model), N, 9)
    refs = build_references(s, analytic_spectrum(model, 5))
    np.testing.assert_allclose(np.linalg.norm(refs.phi, axis=0), 1.0, atol=0.1)


def test_reference_gram_near_identity():
    N = 2000
    s = sample(CIRCLE, get_density("uniform", CIRCLE), N, 10)
    phi = build_references(s, S1_SYSTEM, 5).phi[:, 1:5]
    band = 2 * math.sqrt(math.log(N) / N)
    assert np.abs(phi.T @ phi - np.eye(4)).max() <= band


# ----------------------------------------------------------------- blocks


def test_blocks_on_circle():
    assert multiplicity_blocks(S1_SYSTEM.eigenvalues[:10]) == [[0], [1, 2], [3, 4], [5, 6], [7, 8], [9]]


def test_blocks_on_sphere():
    assert multiplicity_blocks(S2_SYSTEM.eigenvalues[:10]) == [[0], [1, 2, 3], [4, 5, 6, 7, 8], [9]]


# -------------------------------------------------------------- alignment


def test_self_alignment_is_exact(s1_uniform):
    refs = build_references(s1_uniform, S1_SYSTEM, 10)
    mu = S1_SYSTEM.eigenvalues
    report = align_and_score(spectral_from(refs.phi, mu[:10]), refs, mu, 9)
    assert report.relerr_v == pytest.approx(0.0, abs=1e-12)
    assert report.relerr_lambda == 0.0
    for Q in report.rotations:
        np.testing.assert_allclose(Q, np.eye(len(Q)), atol=1e-10)
    np.testing.assert_allclose(report.alphas, 1.0, atol=1e-12)
    assert report.flagged == []


@given(st.integers(0, 2**32 - 1))
def test_alignment_invariant_to_block_rotations_and_signs(seed):
    rng = np.random.default_rng(seed)
    s = sample(CIRCLE, get_density("uniform", CIRCLE), 300, 4)
    ops = build_operators(s, KernelSpec(5e-4, 1), "rw")
    res = solve_lowest(ops, 9, "dense")
    refs = build_references(s, S1_SYSTEM, 10)
    mu = S1_SYSTEM.eigenvalues
    base = align_and_score(res, refs, mu, 9)

    V = res.eigenvectors.copy()
    for block in base.blocks:
        V[:, block] = V[:, block] @ random_orthogonal(len(block), rng)
    V *= rng.choice([-1.0, 1.0], size=V.shape[1])
    moved = align_and_score(spectral_from(V, res.eigenvalues), refs, mu, 9)
    assert moved.relerr_v == pytest.approx(base.relerr_v, abs=1e-10)
    assert moved.relerr_lambda == base.relerr_lambda
    for Q in moved.rotations:
        np.testing.assert_allclose(Q.T @ Q, np.eye(len(Q)), atol=1e-10)


def test_sphere_alignment_within_three_dimensional_block(s2_uniform):
    rng = np.random.default_rng(0)
    refs = build_references(s2_uniform, S2_SYSTEM, 10)
    mu = S2_SYSTEM.eigenvalues
    V = refs.phi.copy()
    V[:, 1:4] = V[:, 1:4] @ random_orthogonal(3, rng)
    report = align_and_score(spectral_from(V, mu[:10]), refs, mu, 9)
    assert report.relerr_v == pytest.approx(0.0, abs=1e-10)


def test_relerr_lambda_formula(s1_uniform):
    refs = build_references(s1_uniform, S1_SYSTEM, 10)
    mu = S1_SYSTEM.eigenvalues
    lam = mu[:10] * 1.1
    report = align_and_score(spectral_from(refs.phi, lam), refs, mu, 9)
    assert report.relerr_lambda == pytest.approx(0.8)
    np.testing.assert_allclose(report.value_errors, 0.1)


def test_scale_mismatch_is_flagged(s1_uniform):
    refs = build_references(s1_uniform, S1_SYSTEM, 10)
    mu = S1_SYSTEM.eigenvalues
    V = refs.phi.copy()
    V[:, 5:7] *= 3.0
    report = align_and_score(spectral_from(V, mu[:10]), refs, mu, 9)
    assert report.flagged == [5, 6]
    np.testing.assert_allclose(report.vector_errors[5:7], 2.0)


def test_block_straddling_cutoff_is_rejected(s1_uniform):
    refs = build_references(s1_uniform, S1_SYSTEM, 10)
    mu = S1_SYSTEM.eigenvalues
    with pytest.raises(ValueError, match="k_max"):
        align_and_score(spectral_from(refs.phi, mu[:10]), refs, mu, 8)
    with pytest.raises(ValueError):
        align_and_score(spectral_from(refs.phi, mu[:10]), refs, mu[:9], 9)


def test_pilot_band_for_eigenvalue_error():
    s = sample(CIRCLE, get_density("uniform", CIRCLE), 1584, 5)
    ops = build_operators(s, KernelSpec(1.36e-4, 1), "rw")
    report = align_and_score(
        solve_lowest(ops, 9, "iterative"), build_references(s, S1_SYSTEM, 10), S1_SYSTEM.eigenvalues, 9
    )
    assert 0.1 <= report.relerr_lambda <= 1.5
    assert np.all(np.abs(report.alphas[1:]) > 0.5)


# ------------------------------------------------------------- pointwise


def test_pointwise_error_formula(s1_uniform):
    ops = build_operators(s1_uniform, KernelSpec(5e-4, 1), "rw")
    t = s1_uniform.intrinsic_coords
    f = np.sin(2 * np.pi * t)
    lap = -((2 * np.pi) ** 2) * f
    expected = np.sum(np.abs(-laplacian_apply(ops, f) - lap)) / np.sum(np.abs(lap))
    assert pointwise_error(ops, f, lap) == pytest.approx(expected, rel=1e-14)


def test_pointwise_error_rejects_harmonic_input(s1_uniform):
    ops = build_operators(s1_uniform, KernelSpec(5e-4, 1), "rw")
    ones = np.ones(s1_uniform.N)
    with pytest.raises(ValueError):
        pointwise_error(ops, ones, np.zeros(s1_uniform.N))


# ---------------------------------------------------------------- slopes


@given(st.floats(-3, 3), st.floats(0.01, 100))
def test_exact_power_law(a, c):
    xs = np.logspace(0, 3, 7)
    slope, intercept, r2 = fit_loglog_slope(xs, c * xs**a)
    assert slope == pytest.approx(a, abs=1e-12)
    assert intercept == pytest.approx(math.log10(c), abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-12) or a == pytest.approx(0.0, abs=1e-9)


def test_noisy_power_law():
    rng = np.random.default_rng(2)
    xs = np.logspace(2.75, 3.2, 8)
    ys = xs**-0.4 * (1 + 0.01 * rng.standard_normal(8))
    assert -0.42 <= fit_loglog_slope(xs, ys)[0] <= -0.38


def test_two_points_interpolate():
    slope, _, r2 = fit_loglog_slope([10, 1000], [1.0, 0.01])
    assert slope == pytest.approx(-1.0)
    assert r2 == 1.0


def test_slope_input_errors():
    with pytest.raises(ValueError):
        fit_loglog_slope([1, 2, 3], [1, 0, 2])
    with pytest.raises(ValueError):
        fit_loglog_slope([1], [1])


def test_reference_vectors_record_convention(s1_nonuniform):
    refs = build_references(s1_nonuniform, S1_SYSTEM, 4, "tilde_phi")
    assert isinstance(refs, ReferenceVectors) and refs.convention == "tilde_phi"
