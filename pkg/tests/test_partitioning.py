import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from sepmotion import InputError
from sepmotion.errors import ConvergenceError, PoleError
from sepmotion.partitioning import PartitionScheme, effective_operator, random_symmetric, solve_partitioned

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def brute_force_heff(H, p, E):
    q = np.setdiff1d(np.arange(H.shape[0]), p)
    P = H[np.ix_(p, p)]
    B = H[np.ix_(p, q)]
    C = H[np.ix_(q, q)]
    return P + B @ np.linalg.inv(E * np.eye(q.size) - C) @ B.T


def test_two_by_two_effective():
    assert effective_operator(PartitionScheme(SWAP, [0]), 2.0)[0, 0] == pytest.approx(0.5)


def test_full_model_space_is_identity():
    H = random_symmetric(5, 3)
    assert np.array_equal(effective_operator(PartitionScheme(H, range(5)), 1.234), H)


def test_effective_matches_brute_force():
    H = random_symmetric(6, 7)
    E = la.eigvalsh(H)[2] + 0.5
    got = effective_operator(PartitionScheme(H, [0, 1]), E)
    assert np.allclose(got, brute_force_heff(H, [0, 1], E), atol=1e-12)
    assert np.array_equal(got, got.T)


def test_pole_error():
    H = random_symmetric(6, 7)
    sch = PartitionScheme(H, [0, 1])
    pole = la.eigvalsh(sch.blocks()[2])[1]
    with pytest.raises(PoleError):
        effective_operator(sch, pole)
    with pytest.raises(PoleError):
        solve_partitioned(sch, 0, pole)


def test_scheme_validation():
    with pytest.raises(InputError):
        PartitionScheme(np.array([[0.0, 1.0], [2.0, 0.0]]), [0])
    with pytest.raises(InputError):
        PartitionScheme(SWAP, [])
    with pytest.raises(InputError):
        PartitionScheme(SWAP, [2])
    with pytest.raises(InputError):
        solve_partitioned(PartitionScheme(SWAP, [0]), 1, 0.5)


@settings(max_examples=30)
@given(st.integers(2, 12), st.data())
def test_projector_algebra(n, data):
    p = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
    P, Q = PartitionScheme(np.eye(n), p).projectors()
    I = np.eye(n)
    assert np.array_equal(P @ P, P) and np.array_equal(Q @ Q, Q)
    assert np.array_equal(P @ Q, np.zeros((n, n)))
    assert np.array_equal(P + Q, I)


@pytest.mark.parametrize("E0,expected", [(0.5, 1.0), (-0.5, -1.0), (3.0, 1.0), (-7.0, -1.0)])
def test_swap_fixed_point(E0, expected):
    r = solve_partitioned(PartitionScheme(SWAP, [0]), 0, E0)
    assert r.energy == pytest.approx(expected, abs=1e-10)


def test_diagonal_one_step():
    H = np.diag([3.0, -1.0, 2.0])
    r = solve_partitioned(PartitionScheme(H, [0, 2]), 1, 0.0)
    assert r.energy == 3.0
    assert r.iterations == 1


def test_six_by_six_converges_to_full_eigenvalue():
    H = random_symmetric(6, 7)
    sch = PartitionScheme(H, [0, 1])
    start = la.eigvalsh(sch.blocks()[0])
    full = la.eigvalsh(H)
    for b in range(2):
        r = solve_partitioned(sch, b, float(start[b]))
        assert np.min(np.abs(full - r.energy)) < 1e-9
        assert r.trace[0] == start[b] and r.trace[-1] == r.energy


def test_random_matrix_property():
    converged = 0
    for seed in range(100):
        dim = 3 + seed % 10
        H = random_symmetric(dim, seed)
        sch = PartitionScheme(H, [0, 1])
        full = la.eigvalsh(H)
        start = la.eigvalsh(sch.blocks()[0])
        for b in range(2):
            try:
                r = solve_partitioned(sch, b, float(start[b]))
            except (ConvergenceError, PoleError):
                continue
            converged += 1
            assert np.min(np.abs(full - r.energy)) < 1e-9
    assert converged >= 150


def test_non_convergence_reports_trace():
    H = random_symmetric(8, 11)
    sch = PartitionScheme(H, [0, 1])
    with pytest.raises(ConvergenceError) as info:
        solve_partitioned(sch, 1, 0.3, max_iter=2)
    assert len(info.value.trace) == 3


def test_damping_validation():
    with pytest.raises(InputError):
        solve_partitioned(PartitionScheme(SWAP, [0]), 0, 0.5, damping=0.0)
