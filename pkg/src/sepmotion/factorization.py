"""Exact (marginal/conditional) factorization of a 2D eigenstate.

psi(x, X) = chi(X) phi(x | X) with chi(X) = sqrt(int |psi|^2 dx) >= 0. The
exact potential U(X) is the expectation of the internal Hamiltonian in the
conditional factor. Near quasi-nodes of chi the conditional factor turns over
sharply (and changes sign), which shows up as spikes in U.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InputError, InsufficientDataError
from .model import AdiabaticScan, ModelSpec, default_grid, fmt
from .numerics import Grid1D, Grid2D, WaveField, trapezoid, trapezoid_weights

CHI_THRESHOLD = 1e-6


@dataclass
class Factorization:
    chi: WaveField  # on the slow grid
    phi: np.ndarray  # conditional factor on the 2D grid, zero on unmasked slices
    grid: Grid2D
    mask: np.ndarray
    U: np.ndarray | None = None
    U_clamped: np.ndarray | None = None

    @property
    def X(self) -> np.ndarray:
        return self.grid.slow.points

    def reconstruct(self) -> np.ndarray:
        return self.phi * self.chi.values[None, :]

    def conditional_norms(self) -> np.ndarray:
        return trapezoid(self.phi.T ** 2, self.grid.fast)

    def write_csv(self, path) -> None:
        n = self.X.size
        Uf = self.U if self.U is not None else np.full(n, np.nan)
        Uc = self.U_clamped if self.U_clamped is not None else np.full(n, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["X", "chi", "U_full", "U_clamped", "masked"])
            for j in range(n):
                w.writerow([fmt(self.X[j]), fmt(self.chi.values[j]), fmt(Uf[j]), fmt(Uc[j]),
                            int(self.mask[j])])


def hunter_grid(spec: ModelSpec, spacing: float = 0.05) -> Grid2D:
    """default_grid with an even slow-point count, so X = 0 is never a node.

    Symmetric states with a node at X = 0 would otherwise lose the slice
    carrying the spike to the mask.
    """
    g = default_grid(spec, spacing)
    slow = Grid1D(g.slow.x_min, g.slow.x_max, g.slow.n_points + 1)
    return Grid2D(g.fast, slow, g.point_cap)


def hunter_factorize(psi: WaveField, threshold: float = CHI_THRESHOLD) -> Factorization:
    """Split ``psi`` (normalized, real, on a Grid2D) into chi(X) and phi(x | X)."""
    if not isinstance(psi.grid, Grid2D):
        raise InputError("hunter_factorize needs a wavefunction on a Grid2D")
    if abs(psi.norm - 1.0) > 1e-6:
        raise InputError(f"psi must be normalized (norm = {psi.norm:.8g})")
    if np.iscomplexobj(psi.values):
        raise InputError("complex wavefunctions are not supported")
    g = psi.grid
    values = np.asarray(psi.values, dtype=float)
    chi = np.sqrt(trapezoid(values.T ** 2, g.fast))
    mask = chi > threshold * chi.max()
    phi = np.zeros_like(values)
    phi[:, mask] = values[:, mask] / chi[mask]
    return Factorization(WaveField(g.slow, chi), phi, g, mask)


def _clamped_expectation(phi: np.ndarray, grid: Grid2D, spec: ModelSpec) -> np.ndarray:
    """int phi (p^2 + x^2 + a x X + V_slow) phi dx for every slice."""
    x, X = grid.mesh()
    V = spec.potential(x, X)
    # cX = 0 drops the slow kinetic term
    Hphi = _kernels.apply_h2d(phi, grid.fast.spacing, grid.slow.spacing, 1.0, 0.0, V)
    return trapezoid((phi * Hphi).T, grid.fast)


def exact_potential(fact: Factorization, spec: ModelSpec, variant: str = "full") -> np.ndarray:
    """U(X) = int phi* (H' phi) dx on the slow grid, NaN where undefined.

    ``variant="full"`` applies the whole internal Hamiltonian, including the
    slow kinetic term kappa^4 P^2 acting on phi; a point is missing when it or
    a stencil neighbour is masked. ``variant="clamped"`` drops the slow
    kinetic term and is missing only on masked points. The result is also
    stored on ``fact``.
    """
    if not fact.mask.any():
        raise InputError("factorization mask is empty")
    g = fact.grid
    U = _clamped_expectation(fact.phi, g, spec)
    if variant == "full":
        # -kappa^4 int phi d2phi/dX2 dx on interior slow points
        phi = fact.phi
        h = g.slow.spacing
        d2 = np.zeros_like(phi)
        d2[:, 1:-1] = (phi[:, 2:] - 2.0 * phi[:, 1:-1] + phi[:, :-2]) / h**2
        U = U - spec.kappa4 * trapezoid((phi * d2).T, g.fast)
        ok = fact.mask.copy()
        ok[0] = ok[-1] = False
        ok[1:-1] &= fact.mask[:-2] & fact.mask[2:]
        U = np.where(ok, U, np.nan)
        fact.U = U
    elif variant == "clamped":
        U = np.where(fact.mask, U, np.nan)
        fact.U_clamped = U
    else:
        raise InputError(f"unknown variant {variant!r}")
    return U


def detect_spikes(U: np.ndarray, baseline, X: np.ndarray | None = None,
                  factor: float = 5.0, merge: int = 3) -> np.ndarray:
    """Locations of spikes in U relative to the lowest clamped surface.

    ``baseline`` is an AdiabaticScan on the same slow grid (channel 0 is used)
    or a plain array of E_0(X). A spike is a local maximum of d = U - E_0 that
    rises more than ``factor`` median absolute deviations above the median
    of d over the valid points. Maxima closer than ``merge`` points collapse
    to the highest one. Returns the X positions (or indices if ``X`` is None
    and no scan is given), sorted.
    """
    U = np.asarray(U, dtype=float)
    if isinstance(baseline, AdiabaticScan):
        E0 = baseline.energies[0]
        if X is None:
            X = baseline.X
    else:
        E0 = np.asarray(baseline, dtype=float)
    if E0.shape != U.shape:
        raise InputError("U and baseline must live on the same slow grid")
    valid = np.isfinite(U)
    if valid.sum() < 10:
        raise InsufficientDataError(f"only {int(valid.sum())} valid points; need at least 10")
    d = np.where(valid, U - E0, 0.0)
    med = float(np.median(d[valid]))
    mad = float(np.median(np.abs(d[valid] - med)))
    # floor keeps a flat signal from flagging round-off wiggles
    scale = max(mad, 1e-12 * max(1.0, abs(med)))
    peaks = _kernels.local_maxima(d, valid)
    cand = np.nonzero(peaks & (d - med > factor * scale))[0]
    keep: list[int] = []
    for i in cand:
        if keep and i - keep[-1] < merge:
            if d[i] > d[keep[-1]]:
                keep[-1] = i
            continue
        keep.append(int(i))
    idx = np.array(keep, dtype=int)
    return idx if X is None else np.asarray(X)[idx]


def energy_identity_residual(fact: Factorization, spec: ModelSpec, energy: float) -> float:
    """E - (int chi^2 U dX + kappa^4 int (chi')^2 dX), meaningful for a = 0.

    For a separable state phi is X-independent and the cross term vanishes,
    so the residual is pure grid error.
    """
    if fact.U is None:
        exact_potential(fact, spec, "full")
    chi = fact.chi.values
    ok = np.isfinite(fact.U)
    w = trapezoid_weights(fact.grid.slow)
    pot = float(np.sum((w * chi**2 * fact.U)[ok]))
    dchi = np.gradient(chi, fact.grid.slow.spacing)
    kin = spec.kappa4 * float(np.sum(w * dchi**2))
    return energy - pot - kin


def nodes(amplitude: np.ndarray, X: np.ndarray, rel_floor: float = 1e-3) -> np.ndarray:
    """Sign-change locations (linear interpolation) of a 1D amplitude,
    ignoring the far tails where |f| < rel_floor * max|f|."""
    f = np.asarray(amplitude, dtype=float)
    big = np.abs(f) > rel_floor * np.abs(f).max()
    out = []
    for j in range(f.size - 1):
        if f[j] * f[j + 1] < 0 and (big[j] or big[j + 1]):
            out.append(X[j] - f[j] * (X[j + 1] - X[j]) / (f[j + 1] - f[j]))
    return np.array(out)
