"""Microscope (translation + dilation) expansion about a potential minimum.

For H = c P^2 + V(X) put X = x0 + lam * xi, P = pi / lam with lam^4 = c. Then

    H - V(x0) = lam^2 N(lam),   N(lam) = pi^2 + k2 xi^2 + lam k3 xi^3 + lam^2 k4 xi^4 + ...

with k_j = V^(j)(x0) / j!. Position scales by lam and momentum by 1/lam, so
[xi, pi] = [X, P]. Levels follow from perturbation theory in lam:

    E_n = V0 + lam^2 sqrt(k2) (2n + 1) + lam^4 (quartic first order + cubic second order + D)

where D is the diagonal adiabatic correction of the electronic channel,
which enters at the same order when c = kappa^4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DegenerateMinimumError, InputError, SaddleError
from .model import ModelSpec, closed_form_solution, fmt

GRAD_TOL = 1e-8
MAX_ORDER = 2


def _step(x0: float, scale: float) -> float:
    return scale * (1.0 + abs(x0))


def taylor_coefficients(potential: Callable, x0: float) -> np.ndarray:
    """[V, V', V''/2, V'''/6, V''''/24] at x0.

    numpy polynomials are differentiated exactly. Other callables use
    five-point stencils: step 1e-3 (1 + |x0|) for the first two derivatives,
    1e-2 (1 + |x0|) for the third and fourth, where round-off would
    otherwise dominate.
    """
    if isinstance(potential, np.polynomial.Polynomial):
        return np.array([potential.deriv(j)(x0) / math.factorial(j) for j in range(5)], dtype=float)
    f = lambda t: float(np.asarray(potential(t), dtype=float))  # noqa: E731
    v0 = f(x0)
    h = _step(x0, 1e-3)
    fp = [f(x0 + s * h) for s in (-2, -1, 1, 2)]
    d1 = (fp[0] - 8 * fp[1] + 8 * fp[2] - fp[3]) / (12 * h)
    d2 = (-fp[0] + 16 * fp[1] - 30 * v0 + 16 * fp[2] - fp[3]) / (12 * h * h)
    H = _step(x0, 1e-2)
    fq = [f(x0 + s * H) for s in (-2, -1, 1, 2)]
    d3 = (-fq[0] + 2 * fq[1] - 2 * fq[2] + fq[3]) / (2 * H**3)
    d4 = (fq[0] - 4 * fq[1] + 6 * v0 - 4 * fq[2] + fq[3]) / H**4
    return np.array([v0, d1, d2 / 2, d3 / 6, d4 / 24])


def _gradient(f, x: np.ndarray) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        h = _step(x[i], 1e-3)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x - 2 * e) - 8 * f(x - e) + 8 * f(x + e) - f(x + 2 * e)) / (12 * h)
    return g


def _hessian(f, x: np.ndarray) -> np.ndarray:
    n = x.size
    H = np.empty((n, n))
    h = np.array([_step(v, 1e-3) for v in x])
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (-f(x + 2 * ei) + 16 * f(x + ei) - 30 * f0 + 16 * f(x - ei) - f(x - 2 * ei)) / (12 * h[i] ** 2)
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def locate_minimum(potential: Callable, start, max_newton: int = 50):
    """Local minimum of a smooth 1D or 2D potential near ``start``.

    BFGS with numeric gradients, then Newton polishing until the gradient
    norm is below 1e-8. Returns ``(x0, V0)``; x0 is a float in 1D and an
    array in 2D.
    """
    x = np.atleast_1d(np.asarray(start, dtype=float))
    if x.size not in (1, 2) or not np.all(np.isfinite(x)):
        raise InputError("start must be a finite point in 1 or 2 dimensions")
    scalar = np.ndim(start) == 0

    def f(v):
        arg = float(v[0]) if scalar else v
        return float(np.asarray(potential(arg), dtype=float))

    res = optimize.minimize(f, x, jac=lambda v: _gradient(f, v), method="BFGS",
                            options={"gtol": 1e-10, "maxiter": 500})
    x = np.asarray(res.x, dtype=float)
    trace = [x.copy()]
    for _ in range(max_newton):
        g = _gradient(f, x)
        if np.linalg.norm(g) < GRAD_TOL:
            break
        H = _hessian(f, x)
        try:
            x = x - np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMinimumError("singular Hessian during Newton polishing") from exc
        trace.append(x.copy())
    else:
        raise ConvergenceError(f"gradient norm still {np.linalg.norm(g):.2e} after polishing", trace)
    w = np.linalg.eigvalsh(_hessian(f, x))
    if np.any(w < -1e-6):
        raise SaddleError(f"stationary point at {x} has Hessian eigenvalues {w}")
    if np.any(w <= 1e-6):
        raise DegenerateMinimumError(f"Hessian at {x} is (nearly) singular: {w}")
    x0 = float(x[0]) if scalar else x
    return x0, f(x)


@dataclass
class MicroscopeTransform:
    """N(lam) = pi^2 + harmonic xi^2 + lam cubic xi^3 + lam^2 quartic xi^4."""

    x0: float
    V0: float
    lam: float
    harmonic: float
    cubic: float
    quartic: float

    def scale_factors(self) -> tuple[float, float]:
        """(position, momentum) scale factors; their product is 1."""
        return self.lam, 1.0 / self.lam

    def coefficients(self) -> dict:
        """Coefficient of xi^j at each power of lam."""
        return {0: {2: self.harmonic}, 1: {3: self.cubic}, 2: {4: self.quartic}}

    def potential(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.harmonic * xi**2 + self.lam * self.cubic * xi**3 + self.lam**2 * self.quartic * xi**4


def microscope_transform(potential: Callable, x0: float, lam: float) -> MicroscopeTransform:
    if not (np.isfinite(lam) and lam != 0):
        raise InputError("lambda must be finite and nonzero")
    c = taylor_coefficients(potential, x0)
    if c[2] <= 1e-10 * max(1.0, abs(c[3]), abs(c[4])):
        raise DegenerateMinimumError(f"second derivative at x0 = {x0} vanishes (k2 = {c[2]:.3e})")
    return MicroscopeTransform(float(x0), float(c[0]), float(lam), float(c[2]), float(c[3]), float(c[4]))


@dataclass
class MicroscopeExpansion:
    x0: float
    V0: float
    lam: float
    harmonic_frequencies: list
    transform: MicroscopeTransform
    diagonal_correction: float = 0.0
    series_terms: dict = field(default_factory=dict)


def expand(potential: Callable, kinetic_coefficient: float, start: float = 0.0,
           diagonal_correction: float = 0.0) -> MicroscopeExpansion:
    """Locate the minimum and set lam = kinetic_coefficient^(1/4)."""
    if not kinetic_coefficient > 0:
        raise InputError("kinetic coefficient must be positive")
    x0, V0 = locate_minimum(potential, start)
    lam = kinetic_coefficient**0.25
    t = microscope_transform(potential, x0, lam)
    # frequency of pi^2 + k2 xi^2 is 2 sqrt(k2); physical frequency carries lam^2
    return MicroscopeExpansion(x0, V0, lam, [2.0 * math.sqrt(t.harmonic) * lam**2], t, diagonal_correction)


def clamped_surface(spec: ModelSpec, n: int = 0) -> Callable:
    return lambda X: spec.clamped_energy(n, X)


def model_expansion(spec: ModelSpec, channel: int = 0, start: float | None = None) -> MicroscopeExpansion:
    """Expansion of the clamped surface E_channel(X) for the model, lam = kappa.

    The diagonal correction is <d phi / dX | d phi / dX> of the channel, which
    is X-independent for displaced oscillators: (a^2 / 4)(channel + 1/2).
    """
    if start is None:
        start = 0.0 if spec.slow_potential == "harmonic" else float(spec.surface_minima()[1])
    D = 0.25 * spec.a**2 * (channel + 0.5)
    return expand(clamped_surface(spec, channel), spec.kappa4, start, D)


def asymptotic_levels(expansion: MicroscopeExpansion, spec: ModelSpec | None = None,
                      levels=(0,), order: int = 2) -> np.ndarray:
    """Terms of the level series, shape (len(levels), order + 1).

    Column j is the lam^(2j) contribution: V0, the harmonic level, and the
    lam^4 correction (quartic first order, cubic second order, diagonal
    correction). ``spec`` only supplies a cross-check of lam against kappa.
    """
    if not 0 <= order <= MAX_ORDER:
        raise InputError(f"order must be between 0 and {MAX_ORDER}")
    if spec is not None and not math.isclose(expansion.lam, spec.kappa, rel_tol=1e-12):
        raise InputError(f"expansion lambda {expansion.lam} does not match kappa {spec.kappa}")
    t = expansion.transform
    lam = expansion.lam
    k2 = t.harmonic
    ell2 = 1.0 / math.sqrt(k2)
    out = np.zeros((len(levels), order + 1))
    for i, n in enumerate(levels):
        if n < 0:
            raise InputError("level index must be >= 0")
        out[i, 0] = expansion.V0
        if order >= 1:
            out[i, 1] = lam**2 * math.sqrt(k2) * (2 * n + 1)
        if order >= 2:
            quart = t.quartic * ell2**2 * (6 * n * n + 6 * n + 3) / 4.0
            cub = -t.cubic**2 * ell2**3 * (30 * n * n + 30 * n + 11) / (16.0 * math.sqrt(k2))
            out[i, 2] = lam**4 * (quart + cub + expansion.diagonal_correction)
    expansion.series_terms = {int(n): out[i].tolist() for i, n in enumerate(levels)}
    return out


def write_levels_csv(path, levels, terms: np.ndarray, exact=None) -> None:
    """Partial sums through each order, plus the exact level when known."""
    sums = np.cumsum(terms, axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "order0", "order2", "order4", "exact"])
        for i, n in enumerate(levels):
            row = [n] + [fmt(sums[i, j]) if j < sums.shape[1] else "" for j in range(3)]
            row.append(fmt(exact[i]) if exact is not None else "")
            w.writerow(row)


def exact_slow_levels(spec: ModelSpec, levels) -> np.ndarray | None:
    """Closed-form levels with the fast mode in its ground state (harmonic model only)."""
    if spec.slow_potential != "harmonic":
        return None
    sol = closed_form_solution(spec)
    return np.array([sol.level(0, n) for n in levels])
