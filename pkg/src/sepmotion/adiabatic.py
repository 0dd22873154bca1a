"""Born expansion in the adiabatic channel basis.

Writing Psi(x, X) = sum_n Phi_n(X) phi_n(x; X) and projecting onto phi_m gives
coupled equations for the nuclear amplitudes Phi_n. With the derivative
couplings

    F_nm(X) = <phi_n | d/dX phi_m>,   G_nm(X) = <phi_n | d2/dX2 phi_m>,
    S_nm(X) = <d/dX phi_n | d/dX phi_m> = dF_nm/dX - G_nm,

the projected nuclear kinetic energy is assembled in the manifestly
symmetric form

    kappa^4 [ -d2/dX2 delta_nm - (F_nm d/dX + d/dX F_nm) + S_nm ],

which equals the textbook -kappa^4 (2 F d/dX + G) form term by term.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConsistencyError, InputError
from .model import AdiabaticScan, ModelSpec, fmt, scan_clamped
from .numerics import (Grid1D, Spectrum, eigensolve, embed_interior, richardson, second_difference,
                       trapezoid_weights)

MODES = ("crude", "diagonal_only", "full")
_MODE_CODE = {"crude": 0, "diagonal_only": 1, "full": 2}


@dataclass
class CouplingMatrix:
    X_grid: Grid1D
    first_order: np.ndarray  # F, (n, n, n_X)
    second_order: np.ndarray  # G, (n, n, n_X)
    derivative_overlap: np.ndarray  # S, (n, n, n_X)
    richardson_error: float

    @property
    def n_channels(self) -> int:
        return self.first_order.shape[0]

    def write_csv(self, path) -> None:
        X = self.X_grid.points
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["X", "n", "m", "first_order", "second_order"])
            for j, Xj in enumerate(X):
                for n in range(self.n_channels):
                    for m in range(self.n_channels):
                        w.writerow([fmt(Xj), n, m, fmt(self.first_order[n, m, j]),
                                    fmt(self.second_order[n, m, j])])


def _x_derivatives(f: np.ndarray, h: float):
    """Second-order first/second X-derivatives along axis 1 (one-sided at the ends)."""
    d1 = np.gradient(f, h, axis=1, edge_order=2)
    d2 = np.empty_like(f)
    d2[:, 1:-1] = (f[:, 2:] - 2.0 * f[:, 1:-1] + f[:, :-2]) / h**2
    d2[:, 0] = (2 * f[:, 0] - 5 * f[:, 1] + 4 * f[:, 2] - f[:, 3]) / h**2
    d2[:, -1] = (2 * f[:, -1] - 5 * f[:, -2] + 4 * f[:, -3] - f[:, -4]) / h**2
    return d1, d2


def coupling_matrix(scan: AdiabaticScan) -> CouplingMatrix:
    """Derivative couplings by central differences of the channel functions in X.

    ``richardson_error`` is the largest |F_h - F_2h| / 3 over interior points,
    an estimate of the discretization error of the first-order couplings.
    """
    if np.any(scan.overlaps < 0.5):
        raise InputError("scan channel functions are not phase continuous")
    phi = scan.channels
    h = scan.X_grid.spacing
    w = trapezoid_weights(scan.fast_grid)
    d1, d2 = _x_derivatives(phi, h)
    F = np.einsum("njk,mjk,k->nmj", phi, d1, w)
    # the symmetric part is d/dX of <phi_n|phi_m> / 2 = 0; what remains of it
    # (one-sided end stencils) is discretization error
    F = 0.5 * (F - F.transpose(1, 0, 2))
    G = np.einsum("njk,mjk,k->nmj", phi, d2, w)
    S = np.einsum("njk,mjk,k->nmj", d1, d1, w)
    err = 0.0
    if phi.shape[1] >= 5:
        d1_2h = (phi[:, 4:] - phi[:, :-4]) / (4.0 * h)
        F2 = np.einsum("njk,mjk,k->nmj", phi[:, 2:-2], d1_2h, w)
        err = float(np.max(np.abs(F[:, :, 2:-2] - F2)) / 3.0)
    return CouplingMatrix(scan.X_grid, F, G, S, err)


def analytic_first_order(n_channels: int, a: float) -> np.ndarray:
    """F_nm for the harmonic model: -(a/2)(sqrt(m/2) d_{n,m-1} - sqrt((m+1)/2) d_{n,m+1})."""
    F = np.zeros((n_channels, n_channels))
    for m in range(n_channels):
        if m >= 1:
            F[m - 1, m] = -0.5 * a * math.sqrt(m / 2.0)
        if m + 1 < n_channels:
            F[m + 1, m] = 0.5 * a * math.sqrt((m + 1) / 2.0)
    return F


def analytic_derivative_overlap(n: int, a: float) -> float:
    """S_nn = <d phi_n/dX | d phi_n/dX> = (a^2/4)(n + 1/2) for displaced oscillator channels."""
    return 0.25 * a * a * (n + 0.5)


@dataclass
class ChannelSolution:
    energies: Spectrum
    amplitudes: np.ndarray  # (k, n_channels, n_X) on the full X grid
    X_grid: Grid1D
    mode: str

    def norms(self) -> np.ndarray:
        return np.trapezoid(np.sum(self.amplitudes**2, axis=1), dx=self.X_grid.spacing, axis=-1)


def block_operator(scan: AdiabaticScan, coupling: CouplingMatrix, kappa: float,
                   mode: str = "full", n_channels: int | None = None) -> sp.csr_matrix:
    """Coupled-channel operator on the interior X nodes, channel-major ordering."""
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}")
    n_ch = scan.n_channels if n_channels is None else int(n_channels)
    if not 1 <= n_ch <= min(scan.n_channels, coupling.n_channels):
        raise InputError("n_channels exceeds the channels available in the scan")
    E = scan.energies[:n_ch, 1:-1]
    F = coupling.first_order[:n_ch, :n_ch, 1:-1]
    S = coupling.derivative_overlap[:n_ch, :n_ch, 1:-1]
    n = E.shape[1]
    rows, cols, vals = _kernels.coupled_block_coo(E, F, S, kappa**4, scan.X_grid.spacing,
                                                  _MODE_CODE[mode])
    H = sp.csr_matrix((vals, (rows, cols)), shape=(n_ch * n, n_ch * n))
    asym = abs(H - H.T).max() if H.nnz else 0.0
    if asym > 1e-8 * max(abs(H).max(), 1.0):
        raise ConsistencyError(f"assembled coupled-channel operator is not symmetric ({asym:.2e})")
    return H


def solve_coupled_channels(scan: AdiabaticScan, coupling: CouplingMatrix, spec: ModelSpec,
                           k: int, mode: str = "full", n_channels: int | None = None) -> ChannelSolution:
    """Lowest ``k`` levels of the coupled-channel problem.

    ``mode``: ``"full"`` keeps every coupling block, ``"diagonal_only"`` keeps
    the diagonal correction kappa^4 S_nn (adiabatic approximation),
    ``"crude"`` drops all coupling (bare clamped surfaces).
    """
    if spec.kappa != scan.spec.kappa or spec.a != scan.spec.a:
        raise InputError("spec does not match the scan's model")
    n_ch = scan.n_channels if n_channels is None else int(n_channels)
    H = block_operator(scan, coupling, spec.kappa, mode, n_ch)
    h = scan.X_grid.spacing
    spectrum, vecs = eigensolve(H, k, weight=h)
    n = scan.X_grid.n_interior
    amps = np.zeros((k, n_ch, scan.X_grid.n_points))
    amps[:, :, 1:-1] = vecs.T.reshape(k, n_ch, n)
    return ChannelSolution(spectrum, amps, scan.X_grid, mode)


@dataclass
class EffectiveNuclear:
    matrix: sp.csr_matrix
    potential: np.ndarray  # E_m(X) + kappa^4 S_mm(X) on the full X grid
    spectrum: Spectrum
    states: np.ndarray

    @property
    def ground_energy(self) -> float:
        return self.spectrum.ground


def effective_nuclear_hamiltonian(scan: AdiabaticScan, spec: ModelSpec, channel: int = 0,
                                  coupling: CouplingMatrix | None = None, k: int = 1) -> EffectiveNuclear:
    """Single-channel nuclear operator kappa^4 P^2 + E_m(X) + kappa^4 <d phi_m|d phi_m>.

    Its eigenvalues are Rayleigh-Ritz values for the adiabatic product ansatz
    F(X) phi_m(x; X), hence upper bounds for the full problem's ground state.
    """
    if not 0 <= channel < scan.n_channels:
        raise InputError(f"channel {channel} not in scan")
    if coupling is None:
        coupling = coupling_matrix(scan)
    g = scan.X_grid
    V = scan.energies[channel] + spec.kappa4 * coupling.derivative_overlap[channel, channel]
    H = (spec.kappa4 * second_difference(g.n_interior, g.spacing) + sp.diags(V[1:-1])).tocsr()
    spectrum, vecs = eigensolve(H, k, weight=g.spacing)
    return EffectiveNuclear(H, V, spectrum, embed_interior(vecs, g))


def _scan_pair(spec: ModelSpec, X_grid: Grid1D, n_channels: int, fast_grid=None, method="analytic"):
    fine = scan_clamped(spec, X_grid, n_channels, fast_grid, method)
    coarse = scan_clamped(spec, X_grid.coarsened(), n_channels, fine.fast_grid, method)
    return coarse, fine


def coupled_channel_levels(spec: ModelSpec, X_grid: Grid1D, n_channels: int, k: int = 1,
                           mode: str = "full", extrapolate: bool = True, fast_grid=None,
                           method: str = "analytic") -> np.ndarray:
    """Lowest ``k`` coupled-channel levels, Richardson-extrapolated in the X spacing.

    ``X_grid`` needs an odd point count when ``extrapolate`` is set.
    """
    if not extrapolate:
        scan = scan_clamped(spec, X_grid, n_channels, fast_grid, method)
        return solve_coupled_channels(scan, coupling_matrix(scan), spec, k, mode).energies.eigenvalues
    out = [solve_coupled_channels(s, coupling_matrix(s), spec, k, mode).energies.eigenvalues
           for s in _scan_pair(spec, X_grid, n_channels, fast_grid, method)]
    return richardson(out[0], out[1])


def effective_nuclear_levels(spec: ModelSpec, X_grid: Grid1D, channel: int = 0, k: int = 1,
                             extrapolate: bool = True, fast_grid=None, method: str = "analytic") -> np.ndarray:
    """Eigenvalues of the single-channel effective nuclear operator, optionally extrapolated."""
    if not extrapolate:
        scan = scan_clamped(spec, X_grid, channel + 1, fast_grid, method)
        return effective_nuclear_hamiltonian(scan, spec, channel, k=k).spectrum.eigenvalues
    out = [effective_nuclear_hamiltonian(s, spec, channel, k=k).spectrum.eigenvalues
           for s in _scan_pair(spec, X_grid, channel + 1, fast_grid, method)]
    return richardson(out[0], out[1])
