"""Grids, finite-difference Hamiltonians, eigensolvers and quadrature.

Conventions used throughout the package:

* A :class:`Grid1D` lists ``n_points`` equally spaced nodes including both
  end points. Dirichlet walls sit on the end points, so the unknowns of a
  finite-difference problem are the ``n_points - 2`` interior nodes and every
  wavefunction stored on a grid is zero at the ends.
* 2D arrays are indexed ``[i_fast, i_slow]`` and flattened in C order.
* Quadrature is the trapezoid rule. With zero end values it reduces to
  ``spacing * sum``, which is why Euclidean-orthonormal eigenvectors divided
  by ``sqrt(cell volume)`` are orthonormal under grid quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate as integrate
import scipy.linalg as la
import scipy.optimize as opt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import (
    BoundaryWarning,
    ConsistencyError,
    InputError,
    NoSolutionError,
    ResourceError,
)

DEFAULT_POINT_CAP = 4_000_000
DENSE_LIMIT = 4000
BOUNDARY_TOL = 1e-6
HERMITE_MAX_N = 200


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise InputError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise InputError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise InputError(f"n_points must be an integer >= 8, got {self.n_points}")

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, spacing: float) -> "Grid1D":
        """Grid on [x_min, x_max] whose spacing is as close as possible to ``spacing``."""
        n = int(round((x_max - x_min) / spacing)) + 1
        return cls(float(x_min), float(x_max), n)

    @classmethod
    def symmetric(cls, half_width: float, spacing: float) -> "Grid1D":
        return cls.from_spacing(-half_width, half_width, spacing)

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def interior(self) -> np.ndarray:
        return self.points[1:-1]

    @property
    def n_interior(self) -> int:
        return self.n_points - 2

    def coarsened(self) -> "Grid1D":
        """Every other node of this grid (same box, doubled spacing)."""
        if self.n_points % 2 == 0:
            raise InputError("only grids with an odd number of points can be coarsened")
        return Grid1D(self.x_min, self.x_max, (self.n_points - 1) // 2 + 1)

    def refined(self) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, 2 * (self.n_points - 1) + 1)


@dataclass(frozen=True)
class Grid2D:
    fast: Grid1D
    slow: Grid1D
    point_cap: int = DEFAULT_POINT_CAP

    def __post_init__(self):
        if self.fast.n_points * self.slow.n_points > self.point_cap:
            raise ResourceError(
                f"grid has {self.fast.n_points * self.slow.n_points} points, cap is {self.point_cap}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.fast.n_points, self.slow.n_points)

    @property
    def interior_shape(self) -> tuple[int, int]:
        return (self.fast.n_interior, self.slow.n_interior)

    @property
    def cell_volume(self) -> float:
        return self.fast.spacing * self.slow.spacing

    def mesh(self, interior: bool = False):
        if interior:
            return np.meshgrid(self.fast.interior, self.slow.interior, indexing="ij")
        return np.meshgrid(self.fast.points, self.slow.points, indexing="ij")

    def coarsened(self) -> "Grid2D":
        return Grid2D(self.fast.coarsened(), self.slow.coarsened(), self.point_cap)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    labels: list | None = None
    continuum_onset: float | None = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if self.eigenvalues.size > 1 and np.any(np.diff(self.eigenvalues) < 0):
            raise InputError("eigenvalues must be sorted ascending")
        if self.labels is not None and len(self.labels) != self.eigenvalues.size:
            raise InputError("labels and eigenvalues differ in length")

    def __len__(self):
        return self.eigenvalues.size

    @property
    def ground(self) -> float:
        return float(self.eigenvalues[0])


def trapezoid(values, grid) -> float | np.ndarray:
    """Trapezoid integral of ``values`` over a Grid1D (last axis) or Grid2D (both axes)."""
    values = np.asarray(values)
    if isinstance(grid, Grid2D):
        inner = np.trapezoid(values, dx=grid.slow.spacing, axis=-1)
        return np.trapezoid(inner, dx=grid.fast.spacing, axis=-1)
    return np.trapezoid(values, dx=grid.spacing, axis=-1)


def trapezoid_weights(grid: Grid1D) -> np.ndarray:
    w = np.full(grid.n_points, grid.spacing)
    w[0] = w[-1] = 0.5 * grid.spacing
    return w


@dataclass
class WaveField:
    grid: Grid1D | Grid2D
    values: np.ndarray
    norm: float = field(default=None)

    def __post_init__(self):
        expected = self.grid.shape if isinstance(self.grid, Grid2D) else (self.grid.n_points,)
        self.values = np.asarray(self.values)
        if self.values.shape != expected:
            raise InputError(f"values shape {self.values.shape} does not match grid {expected}")
        computed = float(trapezoid(np.abs(self.values) ** 2, self.grid))
        if self.norm is None:
            self.norm = computed
        elif abs(self.norm - computed) > 1e-8 * max(abs(computed), 1e-300):
            raise InputError(f"stated norm {self.norm} disagrees with quadrature {computed}")

    def normalized(self) -> "WaveField":
        return WaveField(self.grid, self.values / math.sqrt(self.norm))


# -- finite-difference operators ----------------------------------------------


def second_difference(n: int, h: float) -> sp.csr_matrix:
    """Matrix of -d^2/dx^2 on ``n`` interior nodes with Dirichlet walls."""
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def first_difference(n: int, h: float) -> sp.csr_matrix:
    """Central d/dx on ``n`` interior nodes with Dirichlet walls (antisymmetric)."""
    off = np.full(n - 1, 0.5 / h)
    return sp.diags([-off, off], [-1, 1], format="csr")


def _potential_on_interior(grid, potential) -> np.ndarray:
    if callable(potential):
        if isinstance(grid, Grid2D):
            xx, XX = grid.mesh(interior=True)
            v = np.asarray(potential(xx, XX), dtype=float) * np.ones_like(xx)
        else:
            v = np.asarray(potential(grid.interior), dtype=float) * np.ones(grid.n_interior)
    else:
        v = np.asarray(potential, dtype=float)
        full = grid.shape if isinstance(grid, Grid2D) else (grid.n_points,)
        if v.shape != full:
            raise InputError(f"potential array shape {v.shape} does not match grid {full}")
        v = v[1:-1, 1:-1] if isinstance(grid, Grid2D) else v[1:-1]
    if not np.all(np.isfinite(v)):
        raise InputError("potential is not finite on every grid point")
    return v


def fd_hamiltonian(grid, potential, kinetic_coefficients=1.0) -> sp.csr_matrix:
    """Sparse FD matrix of sum_axis -c_axis d^2/d(axis)^2 + V on interior nodes.

    ``potential`` is a vectorized callable (``V(x)`` or ``V(x, X)`` on mesh
    arrays) or an array over the full grid. ``kinetic_coefficients`` is one
    positive number per axis (a scalar is broadcast).
    """
    coeffs = np.atleast_1d(np.asarray(kinetic_coefficients, dtype=float))
    axes = [grid.fast, grid.slow] if isinstance(grid, Grid2D) else [grid]
    if coeffs.size == 1:
        coeffs = np.repeat(coeffs, len(axes))
    if coeffs.size != len(axes) or np.any(coeffs <= 0) or not np.all(np.isfinite(coeffs)):
        raise InputError("need one positive kinetic coefficient per axis")
    if isinstance(grid, Grid2D) and grid.fast.n_points * grid.slow.n_points > grid.point_cap:
        raise ResourceError("grid point cap exceeded")
    v = _potential_on_interior(grid, potential).ravel()
    if len(axes) == 1:
        T = coeffs[0] * second_difference(axes[0].n_interior, axes[0].spacing)
    else:
        nf, ns = axes[0].n_interior, axes[1].n_interior
        T = sp.kron(coeffs[0] * second_difference(nf, axes[0].spacing), sp.identity(ns)) + sp.kron(
            sp.identity(nf), coeffs[1] * second_difference(ns, axes[1].spacing)
        )
    return (T + sp.diags(v)).tocsr()


def gershgorin_lower_bound(matrix) -> float:
    if sp.issparse(matrix):
        m = matrix.tocsr()
        diag = m.diagonal()
        radius = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    else:
        m = np.asarray(matrix)
        diag = np.diag(m)
        radius = np.abs(m).sum(axis=1) - np.abs(diag)
    return float(np.min(diag - radius))


def _asymmetry(matrix) -> tuple[float, float]:
    if sp.issparse(matrix):
        diff = abs(matrix - matrix.T).max()
        scale = abs(matrix).max()
    else:
        diff = np.max(np.abs(matrix - matrix.T)) if matrix.size else 0.0
        scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    return float(diff), float(scale)


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first largest-magnitude component of each column positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigensolve(matrix, k: int, weight: float = 1.0, sigma: float | None = None):
    """Lowest ``k`` eigenpairs of a real symmetric matrix.

    Dense LAPACK is used up to ``DENSE_LIMIT`` unknowns, shift-invert Lanczos
    beyond. Eigenvectors are returned as columns, normalized so that
    ``weight * sum(v**2) == 1`` (pass the grid cell volume for quadrature
    normalization), with the sign convention of :func:`fix_signs`.
    """
    n = matrix.shape[0]
    if matrix.ndim != 2 or matrix.shape[1] != n:
        raise InputError("matrix must be square")
    if not 1 <= k <= n:
        raise InputError(f"k must lie in [1, {n}], got {k}")
    diff, scale = _asymmetry(matrix)
    if diff > 1e-10 * max(scale, 1e-300):
        raise InputError(f"matrix is not symmetric (asymmetry {diff:.3e})")
    if not sp.issparse(matrix) or n <= DENSE_LIMIT or k > n // 4:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        dense = 0.5 * (dense + dense.T)
        w, v = la.eigh(dense, subset_by_index=[0, k - 1])
    else:
        if sigma is None:
            lb = gershgorin_lower_bound(matrix)
            sigma = lb - 1e-6 * (1.0 + abs(lb))
        v0 = np.random.default_rng(12345).standard_normal(n)
        w, v = spla.eigsh(matrix.tocsc(), k=k, sigma=sigma, which="LM", v0=v0, tol=0.0)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    v = fix_signs(v) / math.sqrt(weight)
    return Spectrum(w), v


def eigensolve_tridiagonal(diagonal, off_diagonal, k: int):
    """Lowest ``k`` eigenpairs of a symmetric tridiagonal matrix (Euclidean normalization)."""
    w, v = la.eigh_tridiagonal(diagonal, off_diagonal, select="i", select_range=(0, k - 1))
    return w, fix_signs(v)


def richardson(coarse, fine, order: int = 2):
    """Extrapolate results at spacings 2h and h with leading error O(h**order)."""
    f = 2.0**order
    return (f * np.asarray(fine) - np.asarray(coarse)) / (f - 1.0)


def boundary_amplitude(values: np.ndarray) -> float:
    """Largest |value| on the first/last interior layer, relative to the global max."""
    a = np.abs(values)
    peak = a.max()
    if peak == 0:
        return 0.0
    if a.ndim == 1:
        edge = max(a[1], a[-2])
    else:
        edge = max(a[1, :].max(), a[-2, :].max(), a[:, 1].max(), a[:, -2].max())
    return float(edge / peak)


def check_boundary(values: np.ndarray, tol: float = BOUNDARY_TOL, what: str = "wavefunction") -> bool:
    amp = boundary_amplitude(values)
    if amp > tol:
        warnings.warn(f"{what} edge amplitude {amp:.2e} exceeds {tol:.0e}; enlarge the box",
                      BoundaryWarning, stacklevel=3)
        return False
    return True


def embed_interior(vectors: np.ndarray, grid) -> np.ndarray:
    """Reshape interior eigenvector columns into full-grid arrays with zero walls."""
    k = vectors.shape[1]
    if isinstance(grid, Grid2D):
        out = np.zeros((k,) + grid.shape)
        out[:, 1:-1, 1:-1] = vectors.T.reshape((k,) + grid.interior_shape)
    else:
        out = np.zeros((k, grid.n_points))
        out[:, 1:-1] = vectors.T
    return out


# -- oscillator eigenfunctions -------------------------------------------------


def hermite_functions(n_max: int, scale: float, x) -> np.ndarray:
    """Table of normalized oscillator eigenfunctions 0..n_max at ``x``.

    Row ``n`` is ``scale**-0.5 * h_n(x / scale)`` where ``h_n`` solves
    ``(-d2/dxi2 + xi**2) h_n = (2n + 1) h_n``.
    """
    if n_max < 0:
        raise InputError("n must be >= 0")
    if n_max > HERMITE_MAX_N:
        raise InputError(f"n > {HERMITE_MAX_N} is unsupported by the recurrence")
    if not scale > 0:
        raise InputError("scale must be positive")
    x = np.asarray(x, dtype=float)
    return _kernels.hermite_table(int(n_max), x / scale) / math.sqrt(scale)


def hermite_function(n: int, scale: float, x):
    values = hermite_functions(n, scale, x)[n]
    return float(values) if values.ndim == 0 else values


# -- old quantum theory ----------------------------------------------------------


def action_integral(potential: Callable[[float], float], energy: float, q_lo: float,
                    q_min: float, q_hi: float) -> float:
    """Closed-orbit action J(E) = 2 * int sqrt(E - V) dq for H = p**2 + V.

    The square-root endpoint behaviour is handled by an algebraic quadrature
    weight, so J is accurate to near machine precision for smooth wells.
    """
    if energy <= potential(q_min):
        return 0.0

    def f(q):
        return potential(q) - energy

    left = q_lo if f(q_lo) == 0 else opt.brentq(f, q_lo, q_min, xtol=1e-15, rtol=1e-15)
    right = q_hi if f(q_hi) == 0 else opt.brentq(f, q_min, q_hi, xtol=1e-15, rtol=1e-15)
    width = right - left

    def g(q):
        denom = (q - left) * (right - q)
        if denom <= 0:
            return 0.0
        return math.sqrt(max(energy - potential(q), 0.0) / denom)

    val, _ = integrate.quad(g, left, right, weight="alg", wvar=(0.5, 0.5),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    if not np.isfinite(val) or width <= 0:
        raise NoSolutionError("action integral failed")
    return 2.0 * val


def sommerfeld_quantize(potential: Callable[[float], float], n: int, h_action: float = 2 * math.pi,
                        interval: Sequence[float] = (-10.0, 10.0)) -> float:
    """Energy E with closed-orbit action J(E) = n * h_action (H = p**2 + V).

    ``interval`` must contain a single well; the energy search runs from the
    well bottom up to the lower of the two interval-edge potential values.
    """
    if int(n) != n or n < 1:
        raise InputError("quantum number must be an integer >= 1")
    q_lo, q_hi = map(float, interval)
    if q_hi <= q_lo:
        raise InputError("interval must be increasing")
    res = opt.minimize_scalar(potential, bounds=(q_lo, q_hi), method="bounded",
                              options={"xatol": 1e-12})
    q_min = float(res.x)
    e_lo = float(potential(q_min))
    e_hi = min(float(potential(q_lo)), float(potential(q_hi)))
    if not e_hi > e_lo or q_min - q_lo < 1e-9 or q_hi - q_min < 1e-9:
        raise NoSolutionError("potential has no interior well on the search interval")
    target = n * h_action

    def resid(e):
        return action_integral(potential, e, q_lo, q_min, q_hi) - target

    if resid(e_hi) < 0:
        raise NoSolutionError(
            f"action at the top of the search range is below n*h = {target:.6g}; widen the interval"
        )
    return float(opt.bisect(resid, e_lo, e_hi, xtol=1e-14 * max(1.0, abs(e_hi)), rtol=1e-15,
                            maxiter=400))


def require(condition: bool, message: str, exc=ConsistencyError):
    if not condition:
        raise exc(message)
