import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swhybrid.array import ArrayGeometry, SourceEnsemble, true_covariance
from swhybrid.swsha import (AngleGrid, NestedSchedule, build_dictionary, build_schedule,
                            difference_coarray, dof, max_slots, nested_split, subarray_indices,
                            synthesize_augmented_covariance, vectorize_virtual)


@pytest.mark.parametrize("m,k,l_max,expected_dof", [(128, 8, 6, 119), (128, 7, 8, 127)])
def test_reference_dof(m, k, l_max, expected_dof):
    assert max_slots(m, k) == l_max
    assert dof(build_schedule(m, k)) == expected_dof


def test_nested_split():
    assert nested_split(8) == (4, 4)
    assert nested_split(7) == (3, 4)


def test_slot_indices_small_example():
    assert subarray_indices(1, 3, 3, 2) == (1, 3, 5, 7, 15, 23)
    assert subarray_indices(2, 3, 3, 2) == (2, 4, 6, 8, 16, 24)


def test_slots_partition_without_overlap():
    sched = build_schedule(128, 8)
    union = [i for s in sched.slot_sets for i in s]
    assert len(union) == len(set(union)) == sched.n_slots * sched.k
    assert sched.augmented.indices == tuple(sorted(union))
    assert max(union) == sched.aperture <= 128


def test_schedule_errors():
    with pytest.raises(ValueError):
        build_schedule(16, 6, 2)
    with pytest.raises(ValueError):
        build_schedule(4, 8)
    with pytest.raises(ValueError):
        build_schedule(128, 1)


def test_schedule_text_roundtrip():
    sched = build_schedule(64, 6)
    text = sched.to_text()
    assert text.splitlines()[0] == ",".join(str(i) for i in sched.slot_sets[0])
    assert NestedSchedule.from_text(text, 64) == sched


@st.composite
def feasible_tuples(draw):
    k1 = draw(st.integers(1, 6))
    k2 = draw(st.integers(1, 6))
    n_slots = draw(st.integers(1, 5))
    aperture = k2 * (k1 + 1) * n_slots
    m = draw(st.integers(aperture, aperture + 10))
    return k1, k2, n_slots, m


@settings(max_examples=60, deadline=None)
@given(feasible_tuples())
def test_coarray_has_no_holes(t):
    k1, k2, n_slots, m = t
    sched = NestedSchedule(m, k1, k2, n_slots)
    ca = difference_coarray(sched.augmented)
    nonneg = ca.unique_lags[ca.unique_lags >= 0]
    np.testing.assert_array_equal(nonneg, np.arange(k2 * (k1 + 1) * n_slots))
    assert ca.dof == k2 * (k1 + 1) * n_slots - 1


def test_ula_dof():
    assert dof(ArrayGeometry.ula(8)) == 7


def test_analytic_augmented_covariance_matches_augmented_array():
    sched = build_schedule(40, 4)
    src = SourceEnsemble((0.2, -0.5), (1.0, 2.0), 0.3)
    np.testing.assert_allclose(synthesize_augmented_covariance(sched, src, None),
                               true_covariance(sched.augmented, src))


def test_virtual_signal_lags_and_dictionary_fit():
    g = ArrayGeometry((1, 2, 4, 7))
    src = SourceEnsemble((np.deg2rad(12.0),), 1.5, 0.0)
    vs = vectorize_virtual(true_covariance(g, src), g)
    p = np.array(g.indices)
    assert vs.lags[1] == p[1] - p[0]
    assert vs.lags[4] == p[0] - p[1]
    d = build_dictionary(vs, AngleGrid(-90, 90, 1.0))
    col = int(np.flatnonzero(d.grid_deg == 12.0)[0])
    np.testing.assert_allclose(vs.values, 1.5 * d.matrix[:, col], atol=1e-12)


def test_angle_grid():
    g = AngleGrid(-90, 90, 1.0)
    assert len(g) == 180 and g.degrees[0] == -90 and g.degrees[-1] == 89
    with pytest.raises(ValueError):
        AngleGrid(0, 0, 1)
    with pytest.raises(ValueError):
        AngleGrid(0, 10, 0)
