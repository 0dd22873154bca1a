import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepmotion import Grid1D, Grid2D, InputError, ModelSpec
from sepmotion.errors import PhaseTrackingError
from sepmotion.model import (
    AdiabaticScan,
    DegenerateDiagnosticWarning,
    clamped_fd_levels,
    clamped_solve,
    closed_form_solution,
    continuum_diagnostic,
    default_fast_grid,
    default_grid,
    direct_integral_spectrum,
    exact_solve,
    normal_mode_frequencies,
    scan_clamped,
)
from sepmotion.numerics import trapezoid_weights


def classical_frequencies(kappa, a):
    """Normal modes of c_x p^2 + c_X P^2 + [x X] M [x X]^T by mass-weighting.

    Each coordinate has mass 1/(2c); the force-constant matrix is 2M, so
    omega^2 are the eigenvalues of 4 C^1/2 M C^1/2.
    """
    c = np.array([1.0, kappa**4])
    M = np.array([[1.0, a / 2], [a / 2, 1.0]])
    s = np.sqrt(c)
    w2 = np.linalg.eigvalsh(4 * s[:, None] * M * s[None, :])
    return math.sqrt(w2[1]), math.sqrt(w2[0])


@given(st.floats(0.05, 1.0), st.floats(-1.99, 1.99))
def test_closed_form_matches_classical_oracle(kappa, a):
    wp, wm = normal_mode_frequencies(ModelSpec(kappa, a))
    op, om = classical_frequencies(kappa, a)
    assert wp == pytest.approx(op, rel=1e-10)
    assert wm == pytest.approx(om, rel=1e-9)
    assert wp >= wm > 0
    # characteristic polynomial of the spec
    for w in (wp, wm):
        s = w * w
        assert (s - 4) * (s - 4 * kappa**4) == pytest.approx(4 * a * a * kappa**4, abs=1e-9 * max(1, s * s))


def test_frequencies_near_degeneracy():
    # kappa = 1: omega^2 = 4 +- 2a, so the split must survive a tiny coupling
    wp, wm = normal_mode_frequencies(ModelSpec(1.0, 1e-9))
    assert wp - 2.0 == pytest.approx(5e-10, rel=1e-6)
    assert 2.0 - wm == pytest.approx(5e-10, rel=1e-6)


def test_exact_level_formula():
    sol = closed_form_solution(ModelSpec(0.5, 1.0))
    wp, wm = sol.frequencies
    assert sol.level(1, 2) == pytest.approx(1.5 * wp + 2.5 * wm)
    e, labels = sol.lowest_levels(6)
    assert labels[:5] == [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]
    assert np.allclose(e, [1.22291157, 1.65242078, 2.08192999, 2.5114392, 2.94094841, 3.23922549], atol=1e-7)


@pytest.mark.parametrize(
    "kappa,a,expected",
    [(1.0, 0.0, 2.0), (1.0, 1.0, math.sqrt(1.5) + math.sqrt(0.5)), (0.5, 1.0, 1.22291)],
)
def test_exact_solve_ground(kappa, a, expected):
    spec = ModelSpec(kappa, a)
    es = exact_solve(spec, default_grid(spec, 0.1), 1, extrapolate=True)
    assert abs(es.spectrum.ground - expected) < 1e-3


def test_exact_solve_six_levels_and_labels():
    spec = ModelSpec(0.5, 1.0)
    es = exact_solve(spec, default_grid(spec, 0.1), 6, extrapolate=True)
    ref, labels = closed_form_solution(spec).lowest_levels(6)
    assert np.max(np.abs(es.spectrum.eigenvalues - ref)) < 1e-3
    assert es.spectrum.labels == labels


def test_exact_states_normalized():
    spec = ModelSpec(0.5, 1.0)
    g = default_grid(spec, 0.1)
    es = exact_solve(spec, g, 2)
    for i in range(2):
        assert es.wavefield(i).norm == pytest.approx(1.0, abs=1e-10)


def test_symmetry_a_to_minus_a():
    for a in (0.3, 1.2):
        assert normal_mode_frequencies(ModelSpec(0.6, a)) == normal_mode_frequencies(ModelSpec(0.6, -a))
    g = default_grid(ModelSpec(0.6, 1.0), 0.1)
    e1 = exact_solve(ModelSpec(0.6, 1.0), g, 3).spectrum.eigenvalues
    e2 = exact_solve(ModelSpec(0.6, -1.0), g, 3).spectrum.eigenvalues
    # x -> -x maps the FD operator on a symmetric grid onto itself
    assert np.max(np.abs(e1 - e2)) < 1e-9


@pytest.mark.parametrize("bad", [dict(kappa=0.0, a=0.0), dict(kappa=1.5, a=0.0), dict(kappa=0.5, a=2.0),
                                 dict(kappa=0.5, a=-2.5), dict(kappa=0.5, a=0.0, slow_potential="cubic"),
                                 dict(kappa=0.5, a=0.0, slow_potential="double_well", alpha=-1.0)])
def test_spec_validation(bad):
    with pytest.raises(InputError):
        ModelSpec(**bad)


def test_critical_coupling_allowed_for_double_well():
    ModelSpec(0.5, 2.5, "double_well")


def test_critical_coupling_formula_flat():
    # |a| = 2 is rejected as a spec, but the formula path shows the flat surface
    X = np.linspace(-3, 3, 7)
    E = 2 * (0 + 0.5) + (1 - 2.0**2 / 4) * X**2
    assert np.all(E == 1.0)


# -- clamped problem ------------------------------------------------------------------


def test_clamped_examples():
    s, _ = clamped_solve(ModelSpec(0.5, 0.0), 0.0, 1)
    assert s.ground == 1.0
    s, _ = clamped_solve(ModelSpec(0.5, 1.0), 2.0, 1)
    assert s.ground == pytest.approx(4.0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.floats(-3, 3), st.floats(-1.9, 1.9))
def test_clamped_grid_matches_formula(n, X, a):
    spec = ModelSpec(0.5, a)
    fg = default_fast_grid(spec, abs(X), spacing=0.02)
    e, _ = clamped_fd_levels(spec, X, n + 1, fg, extrapolate=True)
    assert abs(e[n] - float(spec.clamped_energy(n, X))) < 1e-6


def test_clamped_grid_functions_match_analytic():
    spec = ModelSpec(0.5, 1.0)
    fg = default_fast_grid(spec, 2.0, spacing=0.02)
    _, fa = clamped_solve(spec, 1.3, 4, fg, method="analytic")
    _, fn = clamped_solve(spec, 1.3, 4, fg, method="grid")
    w = trapezoid_weights(fg)
    for n in range(4):
        # same sign convention on both paths
        assert np.dot(fa[n] * w, fn[n]) > 1 - 1e-4


def test_fast_center_sign():
    spec = ModelSpec(0.5, 1.0)
    fg = default_fast_grid(spec, 2.0, spacing=0.02)
    _, f = clamped_solve(spec, 2.0, 1, fg)
    assert fg.points[np.argmax(f[0])] == pytest.approx(-1.0, abs=0.02)


# -- scans ----------------------------------------------------------------------------


def test_scan_minimum_and_csv(tmp_path):
    spec = ModelSpec(0.5, 1.0)
    scan = scan_clamped(spec, Grid1D(-3, 3, 61), 3)
    assert scan.energies[0].min() == pytest.approx(1.0, abs=1e-12)
    scan.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "X,E_0,E_1,E_2"
    assert len(lines) == 62


def test_double_well_minima():
    spec = ModelSpec(0.5, 0.0, "double_well")
    r = spec.surface_minima()
    assert np.allclose(r, [-math.sqrt(2), math.sqrt(2)])
    assert spec.surface_minimum_value() == pytest.approx(1 - 2 + 0.25 * 4)
    scan = scan_clamped(spec, Grid1D(-3, 3, 6001), 1, method="analytic")
    E0 = scan.energies[0]
    left, right = E0[:3000].argmin(), 3000 + E0[3000:].argmin()
    assert scan.X[left] == pytest.approx(-math.sqrt(2), abs=1e-3)
    assert scan.X[right] == pytest.approx(math.sqrt(2), abs=1e-3)
    assert E0[left] == pytest.approx(E0[right], abs=1e-12)


def test_double_well_minima_move_with_coupling():
    spec = ModelSpec(0.5, 1.0, "double_well")
    r = spec.surface_minima()[1]
    h = 1e-5
    dE = (spec.clamped_energy(0, r + h) - spec.clamped_energy(0, r - h)) / (2 * h)
    assert abs(dE) < 1e-8


def test_zero_coupling_channels_independent_of_X():
    spec = ModelSpec(0.5, 0.0)
    scan = scan_clamped(spec, Grid1D(0, 1, 11), 2)
    w = trapezoid_weights(scan.fast_grid)
    assert np.dot(scan.channels[0, 0] * w, scan.channels[0, -1]) == pytest.approx(1.0, abs=1e-9)


def test_scan_grid_path_phase_continuous():
    spec = ModelSpec(0.5, 1.0)
    scan = scan_clamped(spec, Grid1D(-2, 2, 41), 3, fast_grid=default_fast_grid(spec, 2.0, 0.05),
                        method="grid")
    assert np.all(scan.overlaps > 0.9)


def test_phase_tracking_error_on_coarse_grid():
    spec = ModelSpec(0.5, 1.9)
    with pytest.raises(PhaseTrackingError):
        scan_clamped(spec, Grid1D(-40, 40, 9), 3)


def test_direct_integral_spectrum():
    spec = ModelSpec(0.5, 1.0)
    spec_, intervals = direct_integral_spectrum(scan_clamped(spec, Grid1D(-3, 3, 61), 2))
    assert spec_.continuum_onset == pytest.approx(1.0)
    assert len(spec_) == 0
    assert intervals[1][0] == pytest.approx(3.0)

    dw = ModelSpec(0.5, 0.0, "double_well")
    onset = direct_integral_spectrum(scan_clamped(dw, Grid1D(-3, 3, 6001), 1))[0].continuum_onset
    assert onset == pytest.approx(dw.surface_minimum_value(), abs=1e-6)


def test_direct_integral_single_point():
    spec = ModelSpec(0.5, 1.0)
    fg = Grid1D(-8, 8, 161)
    scan = AdiabaticScan(spec, Grid1D(0, 1, 8), fg, np.array([[1.7]]), np.zeros((1, 1, 161)), np.ones((1, 1)))
    assert direct_integral_spectrum(scan)[0].continuum_onset == 1.7
    empty = AdiabaticScan(spec, Grid1D(0, 1, 8), fg, np.zeros((0, 0)), np.zeros((0, 0, 161)), np.ones((0, 0)))
    with pytest.raises(InputError):
        direct_integral_spectrum(empty)


@pytest.mark.parametrize("kappa,a", [(1.0, 0.0), (0.5, 1.0), (0.25, 1.5)])
def test_onset_below_ground(kappa, a):
    spec = ModelSpec(kappa, a)
    assert closed_form_solution(spec).level(0, 0) > spec.surface_minimum_value()


# -- continuum diagnostic ---------------------------------------------------------------


def test_continuum_diagnostic_separable():
    d = continuum_diagnostic(ModelSpec(1.0, 0.0), [6, 9, 12], 2.5)
    assert np.all(np.diff(d.counts_clamped) > 0)
    assert list(d.counts_full) == [1, 1, 1]


def test_continuum_diagnostic_below_spectrum():
    with pytest.warns(DegenerateDiagnosticWarning):
        d = continuum_diagnostic(ModelSpec(1.0, 0.0), [6, 9, 12], 0.9)
    assert d.counts_clamped.sum() == 0 and d.counts_full.sum() == 0


def test_continuum_diagnostic_validation():
    with pytest.raises(InputError):
        continuum_diagnostic(ModelSpec(1.0, 0.0), [6, 9], 2.5)
    with pytest.raises(InputError):
        continuum_diagnostic(ModelSpec(1.0, 0.0), [6, 12, 9], 2.5)


def test_continuum_diagnostic_thread_independent():
    spec = ModelSpec(0.5, 1.0)
    a = continuum_diagnostic(spec, [4, 5, 6], 2.5, threads=1)
    b = continuum_diagnostic(spec, [4, 5, 6], 2.5, threads=3)
    assert np.array_equal(a.counts_clamped, b.counts_clamped)
    assert np.array_equal(a.counts_full, b.counts_full)


def test_grid2d_from_default_is_odd():
    g = default_grid(ModelSpec(0.35, 0.5))
    assert isinstance(g, Grid2D)
    assert g.fast.n_points % 2 == 1 and g.slow.n_points % 2 == 1
