"""Two-oscillator fast/slow model and its clamped-parameter ("electronic") problem.

Full Hamiltonian (dimensionless)::

    H = p**2 + kappa**4 P**2 + x**2 + V_slow(X) + a x X

with ``x`` the fast coordinate and ``X`` the slow one. ``V_slow`` is either
``X**2`` or the double well ``-alpha X**2 + beta X**4``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la

from . import _kernels
from .errors import DegenerateDiagnosticWarning, InputError, PhaseTrackingError
from .numerics import (
    Grid1D,
    Grid2D,
    Spectrum,
    WaveField,
    check_boundary,
    eigensolve,
    eigensolve_tridiagonal,
    embed_interior,
    fd_hamiltonian,
    hermite_functions,
    richardson,
    trapezoid_weights,
)

SLOW_POTENTIALS = ("harmonic", "double_well")


@dataclass(frozen=True)
class ModelSpec:
    kappa: float
    a: float
    slow_potential: str = "harmonic"
    alpha: float = 1.0
    beta: float = 0.25

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and 0 < self.kappa <= 1):
            raise InputError(f"kappa must lie in (0, 1], got {self.kappa}")
        if not np.isfinite(self.a):
            raise InputError("coupling a must be finite")
        if self.slow_potential not in SLOW_POTENTIALS:
            raise InputError(f"slow_potential must be one of {SLOW_POTENTIALS}")
        if self.slow_potential == "harmonic" and abs(self.a) >= 2:
            raise InputError(
                f"|a| = {abs(self.a)} >= 2: the clamped surface (1 - a^2/4) X^2 is not confining"
            )
        if self.slow_potential == "double_well" and not (self.alpha > 0 and self.beta > 0):
            raise InputError("double_well needs alpha > 0 and beta > 0")

    @property
    def kappa4(self) -> float:
        return self.kappa**4

    @property
    def kinetic_coefficients(self) -> tuple[float, float]:
        return (1.0, self.kappa4)

    def v_slow(self, X):
        X = np.asarray(X, dtype=float)
        if self.slow_potential == "harmonic":
            return X * X
        return -self.alpha * X * X + self.beta * X**4

    def potential(self, x, X):
        return x * x + self.v_slow(X) + self.a * x * X

    def clamped_energy(self, n, X):
        """E_n(X) = 2(n + 1/2) + V_slow(X) - a^2 X^2 / 4."""
        X = np.asarray(X, dtype=float)
        return 2.0 * (np.asarray(n) + 0.5) + self.v_slow(X) - 0.25 * self.a**2 * X * X

    def fast_center(self, X):
        """Minimum of the clamped fast well: x^2 + a x X = (x + a X / 2)^2 - a^2 X^2 / 4."""
        return -0.5 * self.a * np.asarray(X, dtype=float)

    def surface_minima(self) -> np.ndarray:
        """Location(s) of the minimum of the clamped ground surface."""
        if self.slow_potential == "harmonic":
            return np.array([0.0])
        r = math.sqrt((self.alpha + 0.25 * self.a**2) / (2 * self.beta))
        return np.array([-r, r])

    def surface_minimum_value(self) -> float:
        return float(self.clamped_energy(0, self.surface_minima()[0]))


# -- closed form -----------------------------------------------------------------


def normal_mode_frequencies(spec: ModelSpec) -> tuple[float, float]:
    """(omega_plus, omega_minus): omega**2 solves (s - 4)(s - 4 k^4) = 4 a^2 k^4."""
    if spec.slow_potential != "harmonic":
        raise InputError("closed-form normal modes exist only for the harmonic model")
    k4 = spec.kappa4
    tr = 4.0 * (1.0 + k4)
    det = 16.0 * k4 - 4.0 * spec.a**2 * k4
    # tr^2 - 4 det expanded so nothing cancels near kappa = 1, a = 0
    disc = 4.0 * math.sqrt((1.0 - k4) ** 2 + spec.a**2 * k4)
    s_plus = 0.5 * (tr + disc)
    s_minus = det / s_plus  # avoids cancellation for small kappa
    return math.sqrt(s_plus), math.sqrt(s_minus)


@dataclass
class ExactSolution:
    frequencies: tuple[float, float]
    ground_wavefield: WaveField | None = None

    def level(self, n_plus: int, n_minus: int) -> float:
        wp, wm = self.frequencies
        return wp * (n_plus + 0.5) + wm * (n_minus + 0.5)

    def lowest_levels(self, count: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
        wp, wm = self.frequencies
        n_p = int(math.ceil(count * wm / wp)) + count
        levels = sorted(
            (self.level(i, j), (i, j)) for i in range(n_p + 1) for j in range(count + 1)
        )[:count]
        return np.array([e for e, _ in levels]), [lab for _, lab in levels]


def ground_state_width_matrix(spec: ModelSpec) -> np.ndarray:
    """Gamma with psi_0 ~ exp(-q.Gamma.q / 2), q = (x, X), harmonic model."""
    A = np.diag([1.0, spec.kappa4])
    V = np.array([[1.0, 0.5 * spec.a], [0.5 * spec.a, 1.0]])
    ah = np.sqrt(A)
    w, u = np.linalg.eigh(ah @ V @ ah)
    root = u @ np.diag(np.sqrt(w)) @ u.T
    ahi = np.diag(1.0 / np.diag(ah))
    return ahi @ root @ ahi


def closed_form_solution(spec: ModelSpec, grid: Grid2D | None = None) -> ExactSolution:
    freqs = normal_mode_frequencies(spec)
    field = None
    if grid is not None:
        G = ground_state_width_matrix(spec)
        xx, XX = grid.mesh()
        vals = np.exp(-0.5 * (G[0, 0] * xx * xx + 2 * G[0, 1] * xx * XX + G[1, 1] * XX * XX))
        vals[0, :] = vals[-1, :] = vals[:, 0] = vals[:, -1] = 0.0
        field = WaveField(grid, vals).normalized()
    return ExactSolution(freqs, field)


# -- full 2D problem ------------------------------------------------------------


@dataclass
class EigenSet:
    spectrum: Spectrum
    states: np.ndarray  # (k, *grid.shape), zero on the walls
    grid: Grid2D | Grid1D

    def wavefield(self, i: int) -> WaveField:
        return WaveField(self.grid, self.states[i])


def default_grid(spec: ModelSpec, spacing: float = 0.05, fast_half_width: float = 6.5,
                 slow_half_width: float | None = None) -> Grid2D:
    """A box that holds the few lowest states of ``spec`` with ~1e-6 edge amplitude."""
    if slow_half_width is None:
        if spec.slow_potential == "harmonic":
            c = 1.0 - 0.25 * spec.a**2
            slow_half_width = max(2.5, 7.0 * spec.kappa / c**0.25)
        else:
            slow_half_width = float(spec.surface_minima()[1]) + max(2.0, 6.0 * spec.kappa)
    half_x = fast_half_width + 0.5 * abs(spec.a) * slow_half_width
    slow_spacing = spacing * spec.kappa
    fast = Grid1D.symmetric(half_x, spacing)
    slow = Grid1D.symmetric(slow_half_width, slow_spacing)
    if fast.n_points % 2 == 0:
        fast = Grid1D(fast.x_min, fast.x_max, fast.n_points + 1)
    if slow.n_points % 2 == 0:
        slow = Grid1D(slow.x_min, slow.x_max, slow.n_points + 1)
    return Grid2D(fast, slow)


def _label_harmonic(spec: ModelSpec, energies: np.ndarray):
    if spec.slow_potential != "harmonic":
        return None
    _, labels = closed_form_solution(spec).lowest_levels(len(energies))
    return labels


def exact_solve(spec: ModelSpec, grid: Grid2D, k: int, extrapolate: bool = False,
                validate: bool = True) -> EigenSet:
    """Lowest ``k`` eigenpairs of the full FD Hamiltonian on ``grid``.

    With ``extrapolate`` the eigenvalues are Richardson-extrapolated from this
    grid and its every-other-node coarsening (both second-order); the states
    always come from ``grid`` itself.
    """
    H = fd_hamiltonian(grid, spec.potential, spec.kinetic_coefficients)
    spectrum, vecs = eigensolve(H, k, weight=grid.cell_volume)
    energies = spectrum.eigenvalues
    if extrapolate:
        coarse = grid.coarsened()
        Hc = fd_hamiltonian(coarse, spec.potential, spec.kinetic_coefficients)
        ec, _ = eigensolve(Hc, k, weight=coarse.cell_volume)
        energies = richardson(ec.eigenvalues, energies)
        energies = np.sort(energies)
    states = embed_interior(vecs, grid)
    if validate:
        for s in states:
            if not check_boundary(s, what="exact_solve state"):
                break
    return EigenSet(Spectrum(energies, labels=_label_harmonic(spec, energies)), states, grid)


# -- clamped ("electronic") problem ------------------------------------------------


def default_fast_grid(spec: ModelSpec, X_extent: float, spacing: float = 0.05,
                      half_width: float = 7.0) -> Grid1D:
    half = half_width + 0.5 * abs(spec.a) * X_extent
    g = Grid1D.symmetric(half, spacing)
    # odd, so the grid can be coarsened for extrapolation
    return g if g.n_points % 2 else Grid1D(g.x_min, g.x_max, g.n_points + 1)


def clamped_fd_levels(spec: ModelSpec, X: float, k: int, fast_grid: Grid1D,
                      extrapolate: bool = False):
    """FD eigenpairs of K0 = p^2 + x^2 + a X x + V_slow(X) on ``fast_grid``.

    Returns (energies, functions) with functions on the full fast grid,
    quadrature-normalized. With ``extrapolate`` the energies are Richardson
    extrapolated against the coarsened grid.
    """
    def solve(g):
        x = g.interior
        h = g.spacing
        diag = 2.0 / h**2 + x * x + spec.a * X * x + float(spec.v_slow(X))
        off = np.full(g.n_interior - 1, -1.0 / h**2)
        return eigensolve_tridiagonal(diag, off, k)

    w, v = solve(fast_grid)
    funcs = embed_interior(v / math.sqrt(fast_grid.spacing), fast_grid)
    if extrapolate:
        wc, _ = solve(fast_grid.coarsened())
        w = richardson(wc, w)
    return np.asarray(w), funcs


def clamped_analytic_functions(spec: ModelSpec, X, k: int, fast_grid: Grid1D) -> np.ndarray:
    """Displaced oscillator functions on the fast grid; shape (k, len(X), n_fast).

    Sign convention (shared with the grid path): the leftmost lobe of every
    channel function is positive, i.e. phi_n(x; X) = h_n(c(X) - x) with c the
    well center.
    """
    X = np.atleast_1d(np.asarray(X, dtype=float))
    xp = spec.fast_center(X)[:, None] - fast_grid.points[None, :]
    return hermite_functions(k - 1, 1.0, xp)


def leftmost_lobe_positive(funcs: np.ndarray, rel: float = 1e-3) -> np.ndarray:
    """Flip rows of ``funcs`` so the first entry above rel * max|f| is positive."""
    funcs = np.array(funcs, dtype=float)
    for f in funcs.reshape(-1, funcs.shape[-1]):
        big = np.nonzero(np.abs(f) > rel * np.abs(f).max())[0]
        if big.size and f[big[0]] < 0:
            f *= -1.0
    return funcs


def clamped_solve(spec: ModelSpec, X: float, k: int, fast_grid: Grid1D | None = None,
                  method: str = "analytic"):
    """Eigenpairs of the clamped Hamiltonian at slow coordinate ``X``.

    Returns ``(Spectrum, functions)`` with functions shaped (k, n_fast).
    """
    if k < 1:
        raise InputError("k must be >= 1")
    if not np.isfinite(X):
        raise InputError("X must be finite")
    if fast_grid is None:
        fast_grid = default_fast_grid(spec, abs(X))
    if method == "analytic":
        energies = spec.clamped_energy(np.arange(k), X)
        funcs = clamped_analytic_functions(spec, X, k, fast_grid)[:, 0, :]
    elif method == "grid":
        energies, funcs = clamped_fd_levels(spec, X, k, fast_grid)
        funcs = leftmost_lobe_positive(funcs)
    else:
        raise InputError(f"unknown method {method!r}")
    return Spectrum(np.asarray(energies, dtype=float)), funcs


@dataclass
class AdiabaticScan:
    spec: ModelSpec
    X_grid: Grid1D
    fast_grid: Grid1D
    energies: np.ndarray  # (n_channels, n_X)
    channels: np.ndarray  # (n_channels, n_X, n_fast)
    overlaps: np.ndarray  # (n_channels, n_X) adjacent-point |overlap|

    @property
    def n_channels(self) -> int:
        return self.energies.shape[0]

    @property
    def X(self) -> np.ndarray:
        return self.X_grid.points

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["X"] + [f"E_{n}" for n in range(self.n_channels)])
            for j, X in enumerate(self.X):
                w.writerow([fmt(X)] + [fmt(e) for e in self.energies[:, j]])


def fmt(value) -> str:
    """CSV number format: 17 significant digits, empty for missing."""
    if value is None:
        return ""
    v = float(value)
    if not np.isfinite(v):
        return ""
    return format(v, ".17g")


def scan_clamped(spec: ModelSpec, X_grid: Grid1D, n_channels: int,
                 fast_grid: Grid1D | None = None, method: str = "analytic",
                 min_overlap: float = 0.5) -> AdiabaticScan:
    """Tabulate E_n(X) and sign-continuous channel functions over ``X_grid``."""
    if n_channels < 1:
        raise InputError("n_channels must be >= 1")
    X = X_grid.points
    if fast_grid is None:
        fast_grid = default_fast_grid(spec, float(np.max(np.abs(X))))
    if method == "analytic":
        energies = np.array([spec.clamped_energy(n, X) for n in range(n_channels)])
        funcs = clamped_analytic_functions(spec, X, n_channels, fast_grid)
    elif method == "grid":
        energies = np.empty((n_channels, X.size))
        funcs = np.empty((n_channels, X.size, fast_grid.n_points))
        for j, Xj in enumerate(X):
            e, f = clamped_fd_levels(spec, float(Xj), n_channels, fast_grid)
            energies[:, j] = e
            funcs[:, j, :] = leftmost_lobe_positive(f)
    else:
        raise InputError(f"unknown method {method!r}")
    w = trapezoid_weights(fast_grid)
    overlaps = np.empty((n_channels, X.size))
    for n in range(n_channels):
        tracked, ov = _kernels.track_phases(funcs[n], w)
        bad = np.nonzero(ov < min_overlap)[0]
        if bad.size:
            j = int(bad[0])
            raise PhaseTrackingError(
                f"channel {n}: overlap {ov[j]:.3f} between X={X[j - 1]:.4g} and X={X[j]:.4g} "
                f"is below {min_overlap}; refine the X grid"
            )
        funcs[n] = tracked
        overlaps[n] = ov
    return AdiabaticScan(spec, X_grid, fast_grid, energies, funcs, overlaps)


def direct_integral_spectrum(scan: AdiabaticScan):
    """Spectrum of the kinetic-free operator as the union of fibre spectra.

    Returns ``(Spectrum, intervals)``: an empty discrete part with the
    continuum onset at min_X E_0(X), and per channel the interval
    (min E_n, max E_n) swept over the scan.
    """
    if scan.energies.size == 0:
        raise InputError("empty scan")
    onset = float(np.min(scan.energies[0]))
    intervals = [(float(np.min(e)), float(np.max(e))) for e in scan.energies]
    return Spectrum(np.array([]), continuum_onset=onset), intervals


# -- continuum diagnostic --------------------------------------------------------


@dataclass
class ContinuumDiagnostic:
    box_sizes: np.ndarray
    counts_clamped: np.ndarray  # kinetic-free operator H0
    counts_full: np.ndarray
    threshold: float
    slow_spacings: np.ndarray


def _count_below_sparse(H, threshold: float, start: int = 4) -> int:
    n = H.shape[0]
    k = min(start, n - 2)
    while True:
        spectrum, _ = eigensolve(H, k)
        found = int(np.sum(spectrum.eigenvalues < threshold))
        if found < k or k >= n - 2:
            return found
        k = min(2 * k, n - 2)


def continuum_diagnostic(spec: ModelSpec, box_sizes: Sequence[float], threshold: float,
                         fast_spacing: float = 0.1, slow_spacing: float = 0.2,
                         full_slow_spacing: float = 0.05, threads: int = 1) -> ContinuumDiagnostic:
    """Count eigenvalues below ``threshold`` in boxes [-L, L]^2.

    Operator (i) is H0 = p^2 + x^2 + a x X + V_slow(X), which has no slow
    kinetic energy and is therefore block diagonal over the slow grid; each
    block is a clamped problem. Operator (ii) is the full Hamiltonian.

    The slow-axis spacing shrinks as ``slow_spacing * L0 / L``: every slow
    node of H0 carries its own clamped spectrum, so a continuum shows up as a
    count that keeps growing with resolution, while the full-Hamiltonian count
    stays fixed once converged. The full operator is therefore solved at a
    fixed slow spacing ``full_slow_spacing`` in every box.
    """
    Ls = np.asarray(box_sizes, dtype=float)
    if Ls.size < 3 or np.any(np.diff(Ls) <= 0):
        raise InputError("need at least 3 increasing box sizes")
    if threshold <= spec.surface_minimum_value():
        warnings.warn("threshold lies below the bottom of the clamped surface; counts are all zero",
                      DegenerateDiagnosticWarning, stacklevel=2)

    spacings = slow_spacing * Ls[0] / Ls

    def one_box(i):
        L = Ls[i]
        fast = Grid1D.from_spacing(-L, L, fast_spacing)
        slow = Grid1D.from_spacing(-L, L, spacings[i])
        x = fast.interior
        h = fast.spacing
        off = np.full(fast.n_interior - 1, -1.0 / h**2)
        n_clamped = 0
        for X in slow.interior:
            diag = 2.0 / h**2 + x * x + spec.a * X * x + float(spec.v_slow(X))
            w = la.eigvalsh_tridiagonal(diag, off, select="v", select_range=(-np.inf, threshold))
            n_clamped += int(np.sum(w < threshold))
        grid = Grid2D(fast, Grid1D.from_spacing(-L, L, full_slow_spacing))
        H = fd_hamiltonian(grid, spec.potential, spec.kinetic_coefficients)
        n_full = _count_below_sparse(H, threshold)
        return n_clamped, n_full

    from .parallel import parallel_map

    results = parallel_map(one_box, range(Ls.size), threads)
    return ContinuumDiagnostic(
        Ls,
        np.array([r[0] for r in results]),
        np.array([r[1] for r in results]),
        float(threshold),
        spacings,
    )
