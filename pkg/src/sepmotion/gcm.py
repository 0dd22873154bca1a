"""Generator coordinate method with Gaussian generator states.

Generator functions are g_i(x, X) = phi_m(x; b_i) exp(-width (X - b_i)^2):
the clamped channel function frozen at the center b_i times a Gaussian in the
slow coordinate. Kernels are evaluated on the scan's 2D grid with the same
finite-difference operator used by the exact solver, so every Hill-Wheeler
energy is a Rayleigh-Ritz value for that operator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import _kernels
from .errors import DegenerateBasisError, IllConditionedError, InputError
from .model import AdiabaticScan, ModelSpec, clamped_solve, fmt, scan_clamped
from .numerics import Grid2D, Spectrum, richardson, trapezoid_weights

ORTHO_THRESHOLD = 1e-10
MAX_CONDITION = 1e12


@dataclass
class GcmBasis:
    centers: np.ndarray
    width: float
    channel: int = 0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1)
        if self.centers.size == 0:
            raise InputError("basis needs at least one center")
        if self.centers.size > 1 and np.any(np.diff(self.centers) <= 0):
            raise InputError("centers must be strictly increasing")
        if not self.width > 0:
            raise InputError("width must be positive")
        if self.channel < 0:
            raise InputError("channel must be >= 0")

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int, width: float | None = None,
                channel: int = 0, width_factor: float = 1.0) -> "GcmBasis":
        """n equally spaced centers; width defaults to width_factor / spacing^2."""
        centers = np.linspace(lo, hi, n)
        if width is None:
            if n < 2:
                raise InputError("width is required for a single center")
            width = width_factor / (centers[1] - centers[0]) ** 2
        return cls(centers, float(width), channel)


@dataclass
class Kernels:
    H: np.ndarray
    N: np.ndarray
    generators: np.ndarray  # (n_centers, *grid.shape), unit norm
    grid: Grid2D


def _grid_of(scan: AdiabaticScan) -> Grid2D:
    return Grid2D(scan.fast_grid, scan.X_grid)


def generator_functions(basis: GcmBasis, spec: ModelSpec, scan: AdiabaticScan) -> np.ndarray:
    """Unit-normalized generator states on the scan grid, zero on the walls."""
    if basis.channel >= scan.n_channels:
        raise InputError(f"channel {basis.channel} is not in the scan")
    g = _grid_of(scan)
    X = scan.X
    wx = trapezoid_weights(scan.fast_grid)
    method = "analytic" if spec.slow_potential == "harmonic" else "grid"
    out = np.zeros((basis.centers.size,) + g.shape)
    for i, b in enumerate(basis.centers):
        _, funcs = clamped_solve(spec, float(b), basis.channel + 1, scan.fast_grid, method=method)
        phi = funcs[basis.channel]
        # align with the scan's sign convention at the nearest slow node
        j = int(np.argmin(np.abs(X - b)))
        if np.dot(phi * wx, scan.channels[basis.channel, j]) < 0:
            phi = -phi
        gauss = np.exp(-basis.width * (X - b) ** 2)
        f = phi[:, None] * gauss[None, :]
        f[0, :] = f[-1, :] = 0.0
        f[:, 0] = f[:, -1] = 0.0
        norm = math.sqrt(float(np.sum(f * f)) * g.cell_volume)
        if norm == 0.0:
            raise InputError(f"center {b} lies outside the scan grid")
        out[i] = f / norm
    return out


def hill_wheeler_kernels(basis: GcmBasis, spec: ModelSpec, scan: AdiabaticScan) -> Kernels:
    """Normalized overlap and Hamiltonian kernels between generator states."""
    if spec.kappa != scan.spec.kappa or spec.a != scan.spec.a:
        raise InputError("spec does not match the scan's model")
    g = _grid_of(scan)
    gens = generator_functions(basis, spec, scan)
    x, X = g.mesh()
    V = spec.potential(x, X)
    cx, cX = spec.kinetic_coefficients
    flat = gens.reshape(gens.shape[0], -1)
    Hg = np.stack([_kernels.apply_h2d(f, g.fast.spacing, g.slow.spacing, cx, cX, V) for f in gens])
    N = flat @ flat.T * g.cell_volume
    H = flat @ Hg.reshape(gens.shape[0], -1).T * g.cell_volume
    N = 0.5 * (N + N.T)
    H = 0.5 * (H + H.T)
    return Kernels(H, N, gens, g)


@dataclass
class HillWheelerSolution:
    energies: Spectrum
    weights: np.ndarray  # (k, n_centers), F(b_i) per state
    retained: int
    condition: float
    parities: list | None = None

    def write_csv(self, path, centers) -> None:
        k = self.weights.shape[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["center"] + [f"weight_{s}" for s in range(k)])
            for i, b in enumerate(centers):
                w.writerow([fmt(b)] + [fmt(self.weights[s, i]) for s in range(k)])
            w.writerow(["energy"] + [fmt(e) for e in self.energies.eigenvalues])


def solve_hill_wheeler(H, N, k: int, threshold: float = ORTHO_THRESHOLD,
                       max_condition: float = MAX_CONDITION) -> HillWheelerSolution:
    """Generalized problem H F = E N F by canonical orthogonalization.

    Overlap eigenvectors with eigenvalue below ``threshold`` times the largest
    are discarded; the retained overlap must have condition number at most
    ``max_condition``.
    """
    H = np.asarray(H, dtype=float)
    N = np.asarray(N, dtype=float)
    if H.shape != N.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InputError("kernels must be square and of equal size")
    scale = max(1.0, np.abs(H).max())
    if np.abs(H - H.T).max() > 1e-10 * scale or np.abs(N - N.T).max() > 1e-10:
        raise InputError("kernels must be symmetric")
    d = np.sqrt(np.diag(N))
    if np.any(d <= 0):
        raise DegenerateBasisError("overlap kernel has a non-positive diagonal")
    Nn = N / np.outer(d, d)
    Hn = H / np.outer(d, d)
    s, U = la.eigh(Nn)
    keep = s > threshold * s.max()
    if not keep.any():
        raise DegenerateBasisError("every overlap eigenvalue fell below the threshold")
    cond = float(s[keep].max() / s[keep].min())
    if cond > max_condition:
        raise IllConditionedError(f"overlap condition number {cond:.3e} exceeds {max_condition:.0e}")
    X = U[:, keep] / np.sqrt(s[keep])
    Hp = X.T @ Hn @ X
    m = Hp.shape[0]
    if not 1 <= k <= m:
        raise InputError(f"k must lie in [1, {m}] for this basis")
    e, c = la.eigh(0.5 * (Hp + Hp.T), subset_by_index=[0, k - 1])
    F = (X @ c) / d[:, None]
    for j in range(k):
        i = int(np.argmax(np.abs(F[:, j])))
        if F[i, j] < 0:
            F[:, j] = -F[:, j]
    return HillWheelerSolution(Spectrum(e), F.T, int(keep.sum()), cond)


def parity_labels(solution: HillWheelerSolution, kernels: Kernels) -> list[int]:
    """+1 / -1 under the joint inversion (x, X) -> (-x, -X) of each GCM state.

    The model is symmetric under that inversion for any coupling, so on a
    symmetric grid every nondegenerate state has a definite parity.
    """
    out = []
    for Fw in solution.weights:
        psi = np.tensordot(Fw, kernels.generators, axes=1)
        s = float(np.sum(psi * psi[::-1, ::-1]) / np.sum(psi * psi))
        out.append(1 if s >= 0 else -1)
    solution.parities = out
    return out


def run_gcm(basis: GcmBasis, spec: ModelSpec, scan: AdiabaticScan, k: int = 1) -> HillWheelerSolution:
    ker = hill_wheeler_kernels(basis, spec, scan)
    sol = solve_hill_wheeler(ker.H, ker.N, k)
    parity_labels(sol, ker)
    return sol


def gcm_levels(basis: GcmBasis, spec: ModelSpec, grid: Grid2D, k: int = 1,
               extrapolate: bool = True) -> np.ndarray:
    """Hill-Wheeler levels on ``grid``, optionally Richardson-extrapolated
    against the every-other-node coarsening (both axes odd-sized)."""
    grids = [grid.coarsened(), grid] if extrapolate else [grid]
    out = []
    for g in grids:
        scan = scan_clamped(spec, g.slow, basis.channel + 1, fast_grid=g.fast)
        out.append(run_gcm(basis, spec, scan, k).energies.eigenvalues)
    return richardson(out[0], out[1]) if extrapolate else out[0]
