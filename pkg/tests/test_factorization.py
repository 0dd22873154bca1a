import math

import numpy as np
import pytest
import scipy.linalg as la

from sepmotion import InputError, ModelSpec, WaveField
from sepmotion.errors import InsufficientDataError
from sepmotion.factorization import (
    detect_spikes,
    energy_identity_residual,
    exact_potential,
    hunter_factorize,
    hunter_grid,
    nodes,
)
from sepmotion.model import exact_solve, scan_clamped


@pytest.fixture(scope="module")
def separable():
    # kappa = 0.5 keeps the slow v = 1 level (1.75) clear of any degeneracy
    spec = ModelSpec(0.5, 0.0)
    g = hunter_grid(spec, 0.05)
    return spec, g, exact_solve(spec, g, 2)


@pytest.fixture(scope="module")
def coupled():
    spec = ModelSpec(0.5, 1.0)
    g = hunter_grid(spec, 0.05)
    return spec, g, exact_solve(spec, g, 3)


def gaussian_marginal(spec, X):
    """chi(X) of the exact ground state from the quadratic form alone.

    psi ~ exp(-v^T W v / 2) with W = C^-1/2 sqrt(C^1/2 M C^1/2) C^-1/2; |psi|^2
    has covariance (2W)^-1, so chi is a Gaussian in X with variance s = Sigma_XX
    scaled as (2 pi s)^-1/4 exp(-X^2 / (4 s)).
    """
    c = np.array([1.0, spec.kappa4])
    M = np.array([[1.0, spec.a / 2], [spec.a / 2, 1.0]])
    r = np.sqrt(c)
    W = la.sqrtm(r[:, None] * M * r[None, :]).real / (r[:, None] * r[None, :])
    s = np.linalg.inv(2 * W)[1, 1]
    return (2 * math.pi * s) ** -0.25 * np.exp(-X**2 / (4 * s))


def test_separable_ground_factors(separable):
    spec, g, es = separable
    f = hunter_factorize(es.wavefield(0))
    X = g.slow.points
    k2 = spec.kappa**2
    ref = (math.pi * k2) ** -0.25 * np.exp(-0.5 * X**2 / k2)
    assert np.max(np.abs(f.chi.values - ref)) < 1e-3
    # conditional factor does not depend on X on the bulk of the mask
    core = np.abs(X) < 1.5
    cols = f.phi[:, core]
    assert np.max(np.abs(cols - cols[:, [cols.shape[1] // 2]])) < 1e-6


def test_norm_preserved_and_reconstruction(coupled):
    spec, g, es = coupled
    for i in range(3):
        f = hunter_factorize(es.wavefield(i))
        assert f.chi.norm == pytest.approx(1.0, abs=1e-6)
        assert np.all(f.chi.values >= 0)
        psi = es.states[i]
        assert np.max(np.abs(f.reconstruct()[:, f.mask] - psi[:, f.mask])) < 1e-8
        assert np.allclose(f.conditional_norms()[f.mask], 1.0, atol=1e-6)


def test_coupled_marginal_against_closed_form(coupled):
    spec, g, es = coupled
    f = hunter_factorize(es.wavefield(0))
    ref = gaussian_marginal(spec, g.slow.points)
    assert np.max(np.abs(f.chi.values - ref)) < 2e-3


def test_unnormalized_rejected(coupled):
    _, g, es = coupled
    with pytest.raises(InputError):
        hunter_factorize(WaveField(g, 1.01 * es.states[0]))
    with pytest.raises(InputError):
        hunter_factorize(WaveField(g.slow, np.exp(-(g.slow.points**2))))


def test_separable_exact_potential(separable):
    spec, g, es = separable
    f = hunter_factorize(es.wavefield(0))
    U = exact_potential(f, spec)
    X = g.slow.points
    ok = np.isfinite(U) & (np.abs(X) < 2)
    assert np.max(np.abs(U[ok] - (1 + X[ok] ** 2))) < 1e-3
    assert abs(energy_identity_residual(f, spec, es.spectrum.ground)) < 2e-3


def test_separable_first_excited_spike(separable):
    spec, g, es = separable
    f = hunter_factorize(es.wavefield(1))
    U = exact_potential(f, spec, "full")
    scan = scan_clamped(spec, g.slow, 1, fast_grid=g.fast)
    spikes = detect_spikes(U, scan)
    assert spikes.size == 1 and abs(spikes[0]) < 2 * g.slow.spacing
    # clamped-only U has no slow-derivative term, and phi is X-independent up to sign
    Uc = exact_potential(f, spec, "clamped")
    assert detect_spikes(Uc, scan).size == 0


def test_spikes_follow_nodes(coupled):
    spec, g, es = coupled
    scan = scan_clamped(spec, g.slow, 1, fast_grid=g.fast)
    for v in range(3):
        f = hunter_factorize(es.wavefield(v))
        U = exact_potential(f, spec, "full")
        assert detect_spikes(U, scan).size == v


def test_state_dependence(coupled):
    spec, g, es = coupled
    U0 = exact_potential(hunter_factorize(es.wavefield(0)), spec)
    U1 = exact_potential(hunter_factorize(es.wavefield(1)), spec)
    ok = np.isfinite(U0) & np.isfinite(U1)
    assert np.max(np.abs(U0[ok] - U1[ok])) > 10 * 1e-3


def test_missing_values_are_local(coupled):
    spec, g, es = coupled
    f = hunter_factorize(es.wavefield(1))
    U = exact_potential(f, spec, "full")
    Uc = exact_potential(f, spec, "clamped")
    assert np.isnan(U[0]) and np.isnan(U[-1])
    assert np.all(np.isnan(Uc[~f.mask]))
    rule = f.mask.copy()
    rule[0] = rule[-1] = False
    rule[1:-1] &= f.mask[:-2] & f.mask[2:]
    assert np.array_equal(np.isfinite(U), rule)
    assert np.isfinite(U).sum() > 0.6 * U.size


def test_exact_potential_bad_variant(coupled):
    spec, _, es = coupled
    with pytest.raises(InputError):
        exact_potential(hunter_factorize(es.wavefield(0)), spec, "partial")


def test_detect_spikes_trivial():
    X = np.linspace(-3, 3, 101)
    E0 = 1 + X**2
    assert detect_spikes(E0 + 0.3, E0, X).size == 0
    U = E0 + 0.3 + 5.0 * np.exp(-((X - 0.6) ** 2) / 0.001)
    s = detect_spikes(U, E0, X)
    assert s.size == 1 and s[0] == pytest.approx(0.6, abs=0.07)
    short = np.full(101, np.nan)
    short[:9] = 1.0
    with pytest.raises(InsufficientDataError):
        detect_spikes(short, E0, X)
    with pytest.raises(InputError):
        detect_spikes(U[:-1], E0, X)


def test_nodes_helper():
    X = np.linspace(-3, 3, 601)
    f = X * np.exp(-X**2)
    assert np.allclose(nodes(f, X), [0.0], atol=1e-12)
    assert nodes(np.exp(-X**2), X).size == 0


def test_csv(coupled, tmp_path):
    spec, g, es = coupled
    f = hunter_factorize(es.wavefield(1))
    exact_potential(f, spec, "full")
    exact_potential(f, spec, "clamped")
    f.write_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "X,chi,U_full,U_clamped,masked"
    assert len(lines) == g.slow.n_points + 1
    assert lines[1].endswith(",0") or lines[1].endswith(",1")
