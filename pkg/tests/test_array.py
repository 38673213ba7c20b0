import numpy as np
import pytest

from swhybrid._validation import DomainError, check_angle, check_covariance
from swhybrid.array import (ArrayGeometry, SelectionVector, SourceEnsemble, compress_geometry,
                            sample_covariance, steering_matrix, steering_vector,
                            synthesize_snapshots, true_covariance)


def test_ula_steering_phase_progression():
    g = ArrayGeometry.ula(4)
    a = steering_vector(g, np.deg2rad(30))
    # half-wavelength spacing: phase pi * p * sin(theta), p = 1..4
    np.testing.assert_allclose(a, np.exp(1j * np.pi * 0.5 * np.arange(1, 5)), atol=1e-12)


def test_broadside_steering_is_all_ones():
    np.testing.assert_allclose(steering_vector(ArrayGeometry.ula(8), 0.0), np.ones(8))


def test_steering_matrix_columns_match_vectors():
    g = ArrayGeometry((1, 3, 7))
    th = np.deg2rad([-20.0, 10.0])
    a = steering_matrix(g, th)
    for q, t in enumerate(th):
        np.testing.assert_allclose(a[:, q], steering_vector(g, t))


def test_geometry_rejects_unsorted_or_zero_based():
    with pytest.raises(ValueError):
        ArrayGeometry((2, 1))
    with pytest.raises(ValueError):
        ArrayGeometry((0, 1, 2))


@pytest.mark.parametrize("bad", [np.pi / 2, -np.pi / 2, 2.0, np.nan])
def test_angle_domain(bad):
    with pytest.raises(DomainError):
        check_angle(bad)


def test_selection_roundtrip_and_matrix():
    sel = SelectionVector.from_indices((1, 4, 6), 6)
    assert sel.rho == (1, 0, 0, 1, 0, 1)
    assert sel.k == 3 and sel.m == 6
    w = sel.matrix()
    assert w.shape == (6, 3)
    np.testing.assert_array_equal(w.sum(axis=0), 1)
    assert SelectionVector.from_matrix(w) == sel


def test_selection_rejects_non_binary():
    with pytest.raises(ValueError):
        SelectionVector((1, 2, 0))


def test_compress_geometry_keeps_selected_positions():
    sel = SelectionVector.from_indices((1, 2, 7, 8), 8)
    assert compress_geometry(ArrayGeometry.ula(8), sel).indices == (1, 2, 7, 8)


def test_compress_geometry_errors():
    with pytest.raises(ValueError):
        compress_geometry(ArrayGeometry.ula(8), SelectionVector.from_indices((1,), 4))
    with pytest.raises(ValueError):
        compress_geometry(ArrayGeometry.ula(4), SelectionVector((0, 0, 0, 0)))


def test_sources_from_snr():
    src = SourceEnsemble.from_snr(np.deg2rad([10.0, 20.0]), 10.0, noise_power=2.0)
    np.testing.assert_allclose(src.powers, (20.0, 20.0))
    with pytest.raises(ValueError):
        SourceEnsemble((0.1, 0.1))


def test_true_covariance_single_source():
    g = ArrayGeometry.ula(3)
    src = SourceEnsemble((np.deg2rad(25.0),), 2.0, 0.5)
    a = steering_vector(g, src.angles[0])
    np.testing.assert_allclose(true_covariance(g, src),
                               2.0 * np.outer(a, a.conj()) + 0.5 * np.eye(3), atol=1e-12)
    check_covariance(true_covariance(g, src))


def test_snapshots_are_seeded_and_converge():
    g = ArrayGeometry((1, 2, 5))
    src = SourceEnsemble((0.3,), 1.0, 1.0)
    y1 = synthesize_snapshots(g, src, 50, seed=7)
    y2 = synthesize_snapshots(g, src, 50, seed=7)
    np.testing.assert_array_equal(y1, y2)
    r = sample_covariance(synthesize_snapshots(g, src, 40000, seed=1))
    np.testing.assert_allclose(r, true_covariance(g, src), atol=0.05)


def test_sample_covariance_is_hermitian_psd(rng):
    y = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    r = sample_covariance(y)
    np.testing.assert_array_equal(r, r.conj().T)
    assert np.linalg.eigvalsh(r).min() > -1e-12


def test_check_covariance_rejects_non_hermitian():
    with pytest.raises(ValueError):
        check_covariance(np.array([[1.0, 2.0], [0.0, 1.0]]))
