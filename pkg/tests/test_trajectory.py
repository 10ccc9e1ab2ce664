import csv

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from finite_ilc.trajectory import (
    BENCHMARK_PROFILES,
    InfeasibleProfileError,
    basis_matrix,
    benchmark_profile,
    fourth_order_reference,
    integrate_snap,
    profile_from_samples,
    snap_pattern,
)

TS = 1e-3


def integrate_loop(snap, ts):
    """Rectangular integration chain, one sample at a time."""
    out = np.zeros((4, len(snap)))
    j = a = v = x = 0.0
    for k, s in enumerate(snap):
        j += s * ts
        a += j * ts
        v += a * ts
        x += v * ts
        out[:, k] = x, v, a, j
    return out


@pytest.mark.parametrize("name", sorted(BENCHMARK_PROFILES))
def test_benchmark_profiles_have_229_samples(name):
    p = benchmark_profile(name)
    assert p.N == 229
    for sig in (p.dr, p.ddr, p.dddr, p.ddddr):
        assert abs(sig[0]) < 1e-12 and abs(sig[-1]) < 1e-12
    assert p.r[0] == 0.0
    assert abs(p.r[-1] - BENCHMARK_PROFILES[name]["displacement"]) < 1e-12


def test_integration_matches_loop():
    snap = snap_pattern(3, 2, 4, 5) * 7.0
    p = integrate_snap(snap, TS)
    x, v, a, j = integrate_loop(snap, TS)
    np.testing.assert_allclose(p.r, x, rtol=1e-12, atol=1e-18)
    np.testing.assert_allclose(p.dr, v, rtol=1e-12, atol=1e-16)
    np.testing.assert_allclose(p.ddr, a, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(p.dddr, j, rtol=1e-12, atol=1e-12)


def test_snap_pattern_length():
    assert len(snap_pattern(8, 3, 24, 103)) == 2 + 8 * 8 + 4 * 3 + 2 * 24 + 103


bounds = st.tuples(
    st.floats(1e-4, 0.05),  # displacement
    st.floats(0.01, 0.5),  # v
    st.floats(0.2, 10.0),  # a
    st.floats(20.0, 2000.0),  # j
    st.floats(1e3, 1e6),  # s
)


@given(bounds)
def test_generated_profile_respects_bounds(b):
    x, v, a, j, s = b
    p = fourth_order_reference(x, v, a, j, s, TS)
    assume(p.N < 5000)
    slack = 1 + 1e-9
    assert np.max(np.abs(p.dr)) <= v * slack
    assert np.max(np.abs(p.ddr)) <= a * slack
    assert np.max(np.abs(p.dddr)) <= j * slack
    assert np.max(np.abs(p.ddddr)) <= s * slack
    assert abs(p.r[-1] - x) <= 1e-12 * max(1.0, x)
    # rest-to-rest and monotone
    assert np.all(np.diff(p.r) >= -1e-15)
    assert abs(p.dr[-1]) < 1e-12 and abs(p.ddr[-1]) < 1e-12 and abs(p.dddr[-1]) < 1e-9


@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 5), st.integers(0, 9))
def test_velocity_profile_is_symmetric(n1, n2, n3, n4):
    p = profile_from_samples(1.0, n1, n2, n3, n4, TS)
    # accelerating and decelerating halves mirror each other over the moving stretch
    moving = np.flatnonzero(np.abs(p.dr) > 1e-9 * np.max(p.dr))
    v = p.dr[moving[0]:moving[-1] + 1]
    np.testing.assert_allclose(v, v[::-1], rtol=1e-9, atol=1e-12 * np.max(v))


def test_zero_displacement():
    p = fourth_order_reference(0.0, 1.0, 1.0, 1.0, 1.0, TS)
    assert p.N == 1 and not np.any(p.r)


@pytest.mark.parametrize("args", [
    (0.01, 0.0, 1.0, 1.0, 1.0),
    (0.01, 1.0, -1.0, 1.0, 1.0),
    (-0.01, 1.0, 1.0, 1.0, 1.0),
    (np.nan, 1.0, 1.0, 1.0, 1.0),
    (0.01, 1.0, 1.0, np.inf, 1.0),
])
def test_infeasible_inputs(args):
    with pytest.raises(InfeasibleProfileError):
        fourth_order_reference(*args, TS)


def test_phase_lengths_validated():
    with pytest.raises(InfeasibleProfileError):
        profile_from_samples(1.0, 0, 1, 1, 1, TS)


def test_basis_matrix_columns():
    p = benchmark_profile("ref1")
    psi = basis_matrix(p)
    assert psi.n_theta == 3 and psi.columns.shape == (229, 3)
    np.testing.assert_array_equal(psi.columns[:, 0], p.ddr)
    np.testing.assert_array_equal(psi.columns[:, 2], p.ddddr)
    assert np.linalg.matrix_rank(psi.columns) == 3


def test_csv_roundtrip(tmp_path):
    p = benchmark_profile("ref2")
    p.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["k", "t", "r", "dr", "ddr", "dddr", "ddddr"]
    np.testing.assert_array_equal([float(r["r"]) for r in rows], p.r)
