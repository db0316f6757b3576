"""Potential wells and kink scenarios.

A KinkModel packages a field potential U, its kink K, and the induced
linearization data: Schrodinger potential V = U''(K) - m^2, quadratic
coefficient a = -U'''(K)/2, cubic coefficient b = -U''''(K)/6, and the
asymptotic constants l_plus/l_minus = limits of a at +/-infinity.  The
conventions come from expanding -U'(K+u) + U'(K) + U''(K)u, so the evolved
equation reads u_tt + (-d_xx + V + m^2)u = a u^2 + b u^3 + ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .numerics import RealGrid


class ModelError(ValueError):
    pass


class KinkSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class Potential:
    """A decaying real potential with a parity tag ("even", "odd", "none")."""

    name: str
    parity: str
    evaluate: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))


def _sech(z):
    # exp-based to avoid overflow warnings from cosh at large |z|
    return 2.0 * np.exp(-np.abs(z)) / (1.0 + np.exp(-2.0 * np.abs(z)))


def poschl_teller(c, w):
    """V(x) = -c sech^2(x/w)."""
    if c < 0 or w <= 0:
        raise ModelError("poschl_teller needs c >= 0 and w > 0")

    def V(x):
        s = _sech(x / w)
        return -c * s * s

    return Potential(name=f"pt:{c:g}:{w:g}", parity="even", evaluate=V)


def gaussian_bump(A, w):
    """V(x) = A exp(-(x/w)^2)."""
    if w <= 0:
        raise ModelError("gaussian_bump needs w > 0")

    def V(x):
        return A * np.exp(-((x / w) ** 2))

    return Potential(name=f"gauss:{A:g}:{w:g}", parity="even", evaluate=V)


def flat_potential():
    """V identically zero (the free case)."""
    return Potential(name="flat", parity="even", evaluate=lambda x: np.zeros_like(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class KinkModel:
    """A kink scenario: field potential, kink, and linearization data."""

    name: str
    m2: float
    U: Callable
    dU: Callable
    d2U: Callable
    d3U: Callable
    d4U: Callable
    K: Callable
    dK: Callable
    ell_plus: float
    ell_minus: float

    def V(self, x):
        return self.d2U(self.K(np.asarray(x, dtype=float))) - self.m2

    def a(self, x):
        return -0.5 * self.d3U(self.K(np.asarray(x, dtype=float)))

    def b(self, x):
        return -self.d4U(self.K(np.asarray(x, dtype=float))) / 6.0

    @property
    def potential(self):
        return Potential(name=self.name, parity="even", evaluate=self.V)


def phi4_model():
    """U = (1 - phi^2)^2 / 4, kink tanh(x/sqrt(2)), m^2 = 2."""
    r2 = math.sqrt(2.0)
    return KinkModel(
        name="phi4",
        m2=2.0,
        U=lambda p: 0.25 * (1.0 - p * p) ** 2,
        dU=lambda p: p ** 3 - p,
        d2U=lambda p: 3.0 * p * p - 1.0,
        d3U=lambda p: 6.0 * p,
        d4U=lambda p: 6.0 * np.ones_like(np.asarray(p, dtype=float)),
        K=lambda x: np.tanh(np.asarray(x, dtype=float) / r2),
        dK=lambda x: _sech(np.asarray(x, dtype=float) / r2) ** 2 / r2,
        ell_plus=-3.0,
        ell_minus=3.0,
    )


def sg_model():
    """U = 1 - cos(phi), kink 4 arctan(e^x), m^2 = 1, V = -2 sech^2 x."""

    def K(x):
        return 4.0 * np.arctan(np.exp(np.asarray(x, dtype=float)))

    def dK(x):
        return 2.0 * _sech(np.asarray(x, dtype=float))

    return KinkModel(
        name="sg",
        m2=1.0,
        # 2 sin^2(phi/2) == 1 - cos(phi) but stays accurate near the minima,
        # where the cancellation in 1 - cos would put sqrt(2U) on a 1e-8 noise
        # floor and stall the kink solver in the tails.
        U=lambda p: 2.0 * np.sin(0.5 * p) ** 2,
        dU=np.sin,
        d2U=np.cos,
        d3U=lambda p: -np.sin(p),
        d4U=lambda p: -np.cos(p),
        K=K,
        dK=dK,
        ell_plus=0.0,
        ell_minus=0.0,
    )


def _dsg_callables(eta):
    """Field potential for the double sine-Gordon family, both branches.

    Uhat(phi) = eta (1 - cos phi) + 1 + cos(phi/2).  For -1/4 < eta < 0 the
    kink connects -2pi to 2pi where Uhat already vanishes; the potential is
    normalized by 1/(1 - 4 eta) and m^2 = (eta + 1/4)/(1 - 4 eta).  For
    eta < -1/4 the kink connects -phi0 to phi0 with cos(phi0/2) = 1/(4 eta);
    there the unnormalized potential is used, shifted so its minima sit at
    zero energy, and m^2 = 1/(16 eta) - eta.
    """
    if eta >= 0 or eta == -0.25:
        raise ModelError("dsg requires eta < 0 and eta != -1/4")

    def dUhat(p):
        return eta * np.sin(p) - 0.5 * np.sin(0.5 * p)

    def d2Uhat(p):
        return eta * np.cos(p) - 0.25 * np.cos(0.5 * p)

    def d3Uhat(p):
        return -eta * np.sin(p) + 0.125 * np.sin(0.5 * p)

    def d4Uhat(p):
        return -eta * np.cos(p) + 0.0625 * np.cos(0.5 * p)

    # In terms of c = cos(phi/2) the potential factors as
    # Uhat = (1 + c)(1 + 2 eta (1 - c)), quadratic in c.  Both branches below
    # evaluate the shifted potential in a form where the double zero is an
    # explicit square, so sqrt(2U) in the kink solver keeps full precision in
    # the tails instead of the 1e-8 floor that sqrt of a cancelled difference
    # would give.
    if eta > -0.25:
        scale = 1.0 / (1.0 - 4.0 * eta)
        m2 = (eta + 0.25) / (1.0 - 4.0 * eta)
        phi_end = 2.0 * math.pi

        def U(p):
            # 1 + c = 2 cos^2(phi/4) vanishes at the +-2pi minima.
            c = np.cos(0.5 * p)
            return scale * 2.0 * np.cos(0.25 * p) ** 2 * (1.0 + 2.0 * eta * (1.0 - c))
    else:
        scale = 1.0
        m2 = 1.0 / (16.0 * eta) - eta
        c0 = 1.0 / (4.0 * eta)
        phi_end = 2.0 * math.acos(c0)

        def U(p):
            # Uhat is quadratic in c with vertex at c0 = 1/(4 eta), so the
            # shift to zero energy is exact: Uhat - Uhat(phi0) = -2 eta (c - c0)^2.
            d = np.cos(0.5 * p) - c0
            return -2.0 * eta * d * d

    dU = lambda p: scale * dUhat(p)           # noqa: E731
    d2U = lambda p: scale * d2Uhat(p)         # noqa: E731
    d3U = lambda p: scale * d3Uhat(p)         # noqa: E731
    d4U = lambda p: scale * d4Uhat(p)         # noqa: E731
    return U, dU, d2U, d3U, d4U, m2, phi_end


def kink_solve(U, dU, minima, grid: RealGrid, rtol=1e-12, check_interior=True):
    """Solve the kink first integral dK/dx = sqrt(2 U(K)) on the grid.

    K(0) is pinned to the midpoint of the two minima.  Requires U > 0 strictly
    between the minima with U and U' vanishing at them (double zeros).  The
    returned pair (K, dK) samples the kink and its derivative on grid nodes;
    accuracy is certified downstream by the static residual K'' - U'(K).
    """
    lo, hi = sorted(minima)
    mid = 0.5 * (lo + hi)
    for edge in (lo, hi):
        if abs(U(edge)) > 1e-10 or abs(dU(edge)) > 1e-8:
            raise ModelError(f"U must have a double zero at the minima; U({edge}) = {U(edge)}")
    if check_interior:
        probes = lo + (hi - lo) * (np.arange(1, 200) / 200.0)
        if np.min(U(probes)) <= 0:
            raise ModelError("U must be strictly positive between the minima")

    def rhs(x, K):
        return np.sqrt(np.maximum(2.0 * U(K), 0.0))

    xr = grid.x[grid.x >= 0.0]
    xl = grid.x[grid.x <= 0.0][::-1]
    sol_r = solve_ivp(rhs, (0.0, xr[-1]), [mid], t_eval=xr, method="DOP853",
                      rtol=rtol, atol=1e-14)
    sol_l = solve_ivp(rhs, (0.0, xl[-1]), [mid], t_eval=xl, method="DOP853",
                      rtol=rtol, atol=1e-14)
    if not (sol_r.success and sol_l.success):
        raise KinkSolveError(f"kink integration failed: {sol_r.message}; {sol_l.message}")
    K = np.concatenate([sol_l.y[0][::-1][:-1], sol_r.y[0]])
    K = np.clip(K, lo, hi)
    dK = np.sqrt(np.maximum(2.0 * U(K), 0.0))
    return K, dK


def dsg_model(eta, grid: Optional[RealGrid] = None, n_cache: int = 8193, L_cache: float = 80.0):
    """Double sine-Gordon kink model for eta < 0, eta != -1/4.

    The kink has no closed form; it is integrated once on a fine private grid
    and evaluated elsewhere by cubic interpolation of the monotone odd
    profile, which keeps K and its derivative accurate to ~1e-10 on desk
    grids.
    """
    U, dU, d2U, d3U, d4U, m2, phi_end = _dsg_callables(eta)
    solve_grid = grid
    if solve_grid is None:
        from .numerics import real_grid
        solve_grid = real_grid(L_cache, n_cache)
    K_samp, dK_samp = kink_solve(U, dU, (-phi_end, phi_end), solve_grid)
    # enforce odd symmetry exactly (the ODE march is symmetric up to rounding)
    K_samp = 0.5 * (K_samp - K_samp[::-1])
    xs = solve_grid.x
    from scipy.interpolate import CubicSpline
    K_spline = CubicSpline(xs, K_samp, bc_type="natural")
    Lc = solve_grid.half_width

    def K(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= Lc, phi_end, np.where(x <= -Lc, -phi_end,
                       K_spline(np.clip(x, -Lc, Lc))))
        return out

    def dK(x):
        return np.sqrt(np.maximum(2.0 * U(K(x)), 0.0))

    # a(x) = -U'''(K)/2 ->  -U'''(+-phi_end)/2 at the ends
    ell_plus = float(-0.5 * d3U(phi_end))
    ell_minus = float(-0.5 * d3U(-phi_end))
    return KinkModel(
        name=f"dsg:{eta:g}", m2=float(m2),
        U=U, dU=dU, d2U=d2U, d3U=d3U, d4U=d4U,
        K=K, dK=dK, ell_plus=ell_plus, ell_minus=ell_minus,
    )


@dataclass(frozen=True)
class SolitonModel:
    """NLKG soliton scenario (not a kink: Q decays, the background is zero)."""

    name: str
    p: int
    m2: float
    Q: Callable
    ell_plus: float
    ell_minus: float

    def V(self, x):
        q = self.Q(np.asarray(x, dtype=float))
        return -self.p * q ** (self.p - 1)

    def a(self, x):
        q = self.Q(np.asarray(x, dtype=float))
        return 0.5 * self.p * (self.p - 1) * q ** (self.p - 2)

    def b(self, x):
        q = self.Q(np.asarray(x, dtype=float))
        return self.p * (self.p - 1) * (self.p - 2) / 6.0 * q ** (self.p - 3)

    @property
    def potential(self):
        return Potential(name=self.name, parity="even", evaluate=self.V)


def nlkg_model(p):
    """Soliton Q = (alpha+1)^(1/(2 alpha)) sech^(1/alpha)(alpha x), alpha = (p-1)/2."""
    if int(p) != p or p < 2:
        raise ModelError("nlkg requires integer p >= 2")
    p = int(p)
    alpha = (p - 1) / 2.0
    amp = (alpha + 1.0) ** (1.0 / (2.0 * alpha))

    def Q(x):
        return amp * _sech(alpha * np.asarray(x, dtype=float)) ** (1.0 / alpha)

    # a = p(p-1)/2 Q^(p-2): for p = 2 this is the constant 1; otherwise -> 0
    ell = 1.0 if p == 2 else 0.0
    return SolitonModel(name=f"nlkg:{p}", p=p, m2=1.0, Q=Q, ell_plus=ell, ell_minus=ell)


def resolve(key):
    """Model registry: phi4 | sg | dsg:eta | nlkg:p | pt:c:w | gauss:A:w | flat."""
    parts = str(key).split(":")
    head = parts[0]
    try:
        if head == "phi4" and len(parts) == 1:
            return phi4_model()
        if head == "sg" and len(parts) == 1:
            return sg_model()
        if head == "flat" and len(parts) == 1:
            return flat_potential()
        if head == "dsg" and len(parts) == 2:
            return dsg_model(float(parts[1]))
        if head == "nlkg" and len(parts) == 2:
            return nlkg_model(int(parts[1]))
        if head == "pt" and len(parts) == 3:
            return poschl_teller(float(parts[1]), float(parts[2]))
        if head == "gauss" and len(parts) == 3:
            return gaussian_bump(float(parts[1]), float(parts[2]))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"bad model key {key!r}: {exc}") from exc
    raise ModelError(f"unknown model key {key!r}")


def potential_of(obj):
    """The Schrodinger potential of a registry object of any kind."""
    if isinstance(obj, Potential):
        return obj
    return obj.potential
