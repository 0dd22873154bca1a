"""Classical phase-space rate through a dividing point.

H(q, p) = p^2 + V(q), so dq/dt = 2p. With the surface S = q - q_dag the
one-way Boltzmann flux is

    J = int_0^inf 2p exp(-beta H(q_dag, p)) dp = exp(-beta V(q_dag)) / beta

and the rate is J divided by the reactant phase-space integral
Z_R = int int_{q < q_dag} exp(-beta H) dq dp. For a harmonic reactant of
frequency w0 this tends to (w0 / 2 pi) exp(-beta (V_dag - V_min)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import AccuracyError, InputError
from .model import fmt

QUAD_RTOL = 1e-8


@dataclass
class RateProblem:
    potential: Callable[[float], float]
    dividing_point: float
    beta: float
    reactant_left: bool = True
    bath_frequency: float | None = None  # optional separable harmonic mode
    search_width: float = 20.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InputError("beta must be positive")
        if not np.isfinite(self.dividing_point):
            raise InputError("dividing point must be finite")
        if self.bath_frequency is not None and not self.bath_frequency > 0:
            raise InputError("bath frequency must be positive")

    def V(self, q):
        return float(self.potential(q))

    def hamiltonian(self, q, p):
        return np.asarray(p) ** 2 + np.vectorize(self.V)(q)

    @property
    def barrier(self) -> float:
        return self.V(self.dividing_point)

    def side_bounds(self, reactant: bool = True) -> tuple[float, float]:
        left = self.reactant_left if reactant else not self.reactant_left
        q = self.dividing_point
        return (q - self.search_width, q) if left else (q, q + self.search_width)

    def well(self, reactant: bool = True) -> tuple[float, float]:
        """(q_min, V_min) of the lowest point on one side of the dividing point."""
        lo, hi = self.side_bounds(reactant)
        grid = np.linspace(lo, hi, 2001)
        vals = np.array([self.V(g) for g in grid])
        i = int(np.argmin(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if a == b:
            return float(grid[i]), float(vals[i])
        res = optimize.minimize_scalar(self.V, bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        return float(res.x), float(res.fun)


def phase_space_density(problem: RateProblem, q, p):
    """exp(-beta H(q, p))."""
    return np.exp(-problem.beta * problem.hamiltonian(q, p))


def _gauss_legendre_half_line(f: Callable[[np.ndarray], np.ndarray], scale: float, n: int) -> float:
    """int_0^inf f(p) dp with p = scale * t / (1 - t), t in [0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    p = scale * t / (1.0 - t)
    jac = scale / (1.0 - t) ** 2
    return float(0.5 * np.sum(w * f(p) * jac))


def one_way_flux(problem: RateProblem, direction: int = 1, n_start: int = 64, n_max: int = 4096) -> float:
    """int theta(direction * qdot) |qdot| exp(-beta H(q_dag, p)) dp, qdot = 2p.

    Gauss-Legendre on the mapped half line; the node count doubles until two
    successive estimates agree to 1e-8 relative.
    """
    if direction not in (1, -1):
        raise InputError("direction must be +1 or -1")
    b = problem.beta
    Vd = problem.barrier
    s = float(direction)

    def f(p):
        # integrate over |p|; p -> -p maps the backward branch onto the same half line
        pp = s * p
        return 2.0 * np.abs(pp) * np.exp(-b * (pp * pp + Vd))

    scale = 1.0 / math.sqrt(b)
    n = n_start
    prev = _gauss_legendre_half_line(f, scale, n)
    while n < n_max:
        n *= 2
        cur = _gauss_legendre_half_line(f, scale, n)
        if abs(cur - prev) <= QUAD_RTOL * abs(cur):
            return cur
        prev = cur
    raise AccuracyError(f"flux quadrature did not converge with {n_max} nodes")


def _bath_factor(problem: RateProblem) -> float:
    """Phase-space integral of p^2 + (w^2 / 4) q^2 for the separable bath mode."""
    if problem.bath_frequency is None:
        return 1.0
    c = 0.25 * problem.bath_frequency**2
    return math.pi / (problem.beta * math.sqrt(c))


def side_partition(problem: RateProblem, reactant: bool = True) -> float:
    """int int exp(-beta H) over one side of the dividing point (times the bath factor)."""
    b = problem.beta
    q_min, V_min = problem.well(reactant)
    left = problem.reactant_left if reactant else not problem.reactant_left
    qd = problem.dividing_point
    lo, hi = (-np.inf, qd) if left else (qd, np.inf)
    # shift by V_min to keep the integrand O(1)
    g = lambda q: math.exp(-b * (problem.V(q) - V_min))  # noqa: E731
    far = qd - problem.search_width if left else qd + problem.search_width
    if g(far) > 1e-12:
        raise InputError("the region beyond the dividing point is not bound at this beta")
    pts = [q_min] if lo < q_min < hi else None
    if pts:
        val = integrate.quad(g, lo, q_min, epsabs=0, epsrel=1e-11, limit=200)[0]
        val += integrate.quad(g, q_min, hi, epsabs=0, epsrel=1e-11, limit=200)[0]
    else:
        val = integrate.quad(g, lo, hi, epsabs=0, epsrel=1e-11, limit=200)[0]
    return math.sqrt(math.pi / b) * val * math.exp(-b * V_min) * _bath_factor(problem)


@dataclass
class RateResult:
    beta: float
    rate: float
    flux: float
    partition: float
    prefactor: float
    exponential_factor: float
    well_frequency: float
    tst_limit: float


def _rate(problem: RateProblem, reactant: bool) -> RateResult:
    q_min, V_min = problem.well(reactant)
    Vd = problem.barrier
    if abs(q_min - problem.dividing_point) < 1e-6 * (1.0 + abs(problem.dividing_point)) or Vd < V_min:
        side = "reactant" if reactant else "product"
        raise InputError(f"no well on the {side} side of the dividing point")
    h = 1e-3 * (1.0 + abs(q_min))
    curv = (problem.V(q_min + h) - 2 * problem.V(q_min) + problem.V(q_min - h)) / h**2
    if not curv > 0:
        raise InputError("no harmonic well on this side of the dividing point")
    w0 = math.sqrt(2.0 * curv)  # m = 1/2 for H = p^2 + V
    flux = one_way_flux(problem, 1 if reactant else -1) * _bath_factor(problem)
    Z = side_partition(problem, reactant)
    k = flux / Z
    expo = math.exp(-problem.beta * (Vd - V_min))
    return RateResult(problem.beta, k, flux, Z, k / expo, expo, w0, w0 / (2 * math.pi) * expo)


def rate_forward(problem: RateProblem) -> RateResult:
    """k = flux / Z_R, with prefactor = k / exp(-beta (V_dag - V_min))."""
    return _rate(problem, True)


def rate_backward(problem: RateProblem) -> RateResult:
    return _rate(problem, False)


def net_rate(problem: RateProblem) -> float:
    """k_forward - k_backward: the difference structure of the two exponentials."""
    return rate_forward(problem).rate - rate_backward(problem).rate


def equilibrium_net_flux(problem: RateProblem) -> float:
    """Forward minus backward one-way flux through q_dag under the same density."""
    return one_way_flux(problem, 1) - one_way_flux(problem, -1)


def arrhenius_slope(problem: RateProblem, betas) -> float:
    """Least-squares slope of log k against beta."""
    from dataclasses import replace

    betas = np.asarray(betas, dtype=float)
    logk = [math.log(rate_forward(replace(problem, beta=float(b))).rate) for b in betas]
    return float(np.polyfit(betas, logk, 1)[0])


def harmonic_well(q_dag: float = math.sqrt(5.0)) -> RateProblem:
    return RateProblem(lambda q: q * q, q_dag, 1.0)


def symmetric_double_well(barrier: float = 5.0, q0: float = 1.0, beta: float = 1.0) -> RateProblem:
    """V = barrier (1 - (q / q0)^2)^2 with the dividing point on the barrier top."""
    return RateProblem(lambda q: barrier * (1.0 - (q / q0) ** 2) ** 2, 0.0, beta, search_width=10.0 * q0)


def write_rates_csv(path, rows) -> None:
    """rows: iterable of (beta, forward RateResult, backward RateResult or None)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "k_forward", "k_backward", "net", "prefactor", "exponential_factor"])
        for beta, fw, bw in rows:
            kb = bw.rate if bw is not None else float("nan")
            net = fw.rate - kb if bw is not None else float("nan")
            w.writerow([fmt(beta), fmt(fw.rate), fmt(kb), fmt(net), fmt(fw.prefactor),
                        fmt(fw.exponential_factor)])
