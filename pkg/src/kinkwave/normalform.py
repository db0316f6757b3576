"""Singular quadratic symbol, normal-form boundary term, renormalized profile.

The profile equation d_t g~ is quadratic with a spectral distribution whose
singular part, at each spatial infinity eps, is a sum over sign tuples
(lam, mu, nu) of coefficient products

    a^eps(xi, eta, sigma) = A^eps_lam(xi)* A^eps_mu(eta)_i1 A^eps_nu(sigma)_i2

against [sqrt(pi/2) delta(p) + eps phi*(p) p.v. phi^(p)/(ip)] at the output
frequency p = lam xi - i1 mu eta - i2 nu sigma.  Integrating the equation by
parts in time turns that singular part into a boundary bilinear term T(g,g);
the renormalized profile f = g - T(g,g) then has tame zero-frequency limits
even when g~ develops a jump there.

Quadrature notes.  The midpoint frequency grid makes p a half-integer
multiple of the spacing on every node triple, so p = 0 never occurs and the
principal value is realized by the symmetric +/-p lattice pairing.  The
delta part pins sigma on the integer-multiple lattice between grid nodes;
coefficient tables and g~ are linearly interpolated there, with the jump
convention 1_pm(0) = 1/2 (the symmetric-average limit).  The low-frequency
cutoff phi*(p) = lp(2^D p R(eta, sigma)) restricts the p.v. piece to
|p| <= (8/5) 2^-D / R; on default grids this lies below half the frequency
spacing, so the p.v. correction vanishes identically there and only enters
on much finer grids (the D-sensitivity diagnostic reports this).

Output frequencies are independent throughout; everything is assembled by
whole-grid array operations on read-only tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dft as _dft
from .dft import DftPlan
from .evolve import ProfileSeries
from .numerics import AlignmentError, quadrature, prefix_integral_simpson

SQRT_PI_OVER_2 = np.sqrt(np.pi / 2.0)
SQRT_2PI = np.sqrt(2.0 * np.pi)


class PhaseFloorError(RuntimeError):
    """A quadrature node violated the resonance-surface phase lower bound."""


def lp_cutoff(z):
    """Smooth even cutoff: 1 on |z| <= 5/4, 0 on |z| >= 8/5."""
    z = np.abs(np.asarray(z, dtype=float))
    s = np.clip((z - 1.25) / (1.6 - 1.25), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        down = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        up = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return down / (down + up)


@dataclass(frozen=True)
class PhiKernel:
    """Even unit-integral bump from the cutoff cube, with its transform.

    phi is the even part of -d_x (chi_-)^3 (rescaled to integral one) and
    psi_corrector the even primitive of the odd part; together they satisfy
    hat[(chi_-)^3](xi) = sqrt(pi/2) delta(xi) - phi^(xi)/(i xi) + psi^(xi).
    """

    x: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    psi_corrector: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    phi_hat: np.ndarray = field(repr=False)
    D: int

    def phi_hat_at(self, p):
        """phi^ at arbitrary p by even reflection off the stored table."""
        return np.interp(np.abs(p), self.p, self.phi_hat, right=0.0)

    def star(self, p, R):
        """phi*(p, eta, sigma) = lp cutoff of p R(eta, sigma) at scale 2^-D."""
        return lp_cutoff(np.ldexp(np.asarray(p, dtype=float) * R, self.D))


def build_phi_kernel(rgrid, D=10, p_max=30.0, p_points=6000):
    """Split d_x (chi_-)^3 into even/odd parts and tabulate the transform.

    chi_- comes from the shared bump kernel, so d_x (chi_-)^3 = -3 chi_-^2 rho
    exactly on the grid.  The even part (negated) is phi; the odd part's
    primitive is the even compactly supported corrector.
    """
    if D < 1:
        raise ValueError(f"cutoff exponent D must be >= 1, got {D}")
    rho, chi_plus, chi_minus = _dft.bump_kernel(rgrid)
    g = -3.0 * chi_minus ** 2 * rho
    phi = -0.5 * (g + g[::-1])
    phi_odd = 0.5 * (g - g[::-1])
    phi = phi / float(quadrature(phi, rgrid))
    psi = prefix_integral_simpson(phi_odd, rgrid)
    psi = 0.5 * (psi + psi[::-1])  # exact evenness; endpoints are 0 anyway

    p = np.linspace(0.0, p_max, p_points)
    kernel = np.exp(-1j * np.outer(p, rgrid.x))
    phi_hat = np.real(kernel @ (rgrid.weights * phi)) / SQRT_2PI
    return PhiKernel(x=rgrid.x, phi=phi, psi_corrector=psi, p=p,
                     phi_hat=phi_hat, D=int(D))


def decomposition_residual(kernel: PhiKernel, rgrid, xi_samples):
    """Residual of the cutoff-cube transform identity at xi != 0.

    For xi != 0 the delta term drops and integration by parts gives
    hat[(chi_-)^3](xi) = hat[d_x (chi_-)^3](xi)/(i xi); the claim is that
    this equals -phi^(xi)/(i xi) + psi^(xi).  Both sides are evaluated by
    direct quadrature of compactly supported integrands.
    """
    xi = np.asarray(xi_samples, dtype=float)
    if np.any(xi == 0.0):
        raise ValueError("the identity is checked away from xi = 0")
    rho, chi_plus, chi_minus = _dft.bump_kernel(rgrid)
    g = -3.0 * chi_minus ** 2 * rho
    phase = np.exp(-1j * np.outer(xi, rgrid.x))
    g_hat = phase @ (rgrid.weights * g) / SQRT_2PI
    phi_hat = phase @ (rgrid.weights * kernel.phi) / SQRT_2PI
    psi_hat = phase @ (rgrid.weights * kernel.psi_corrector) / SQRT_2PI
    lhs = g_hat / (1j * xi)
    rhs = -phi_hat / (1j * xi) + psi_hat
    return float(np.abs(lhs - rhs).max())


def _indicator_plus(z):
    # 1 on z > 0, 0 on z < 0, 1/2 at z = 0 (symmetric jump convention)
    return 0.5 * (np.sign(z) + 1.0)


class _CoefficientTables:
    """The four half-line coefficients A^eps_lam and their off-grid evaluator."""

    def __init__(self, scattering):
        fg = scattering.fgrid
        self.xi = fg.xi
        self.T = scattering.T
        self.R_plus = scattering.R_plus
        self.R_minus = scattering.R_minus
        one_plus = _indicator_plus(fg.xi)
        one_minus = 1.0 - one_plus
        T_neg = fg.mirror(self.T)
        Rp_neg = fg.mirror(self.R_plus)
        self.on_grid = {
            ("-", "+"): one_plus + one_minus * T_neg,
            ("-", "-"): one_plus * self.R_minus,
            ("+", "+"): one_plus * self.T + one_minus,
            ("+", "-"): one_minus * Rp_neg,
        }

    def _interp(self, table, pts):
        re = np.interp(pts, self.xi, table.real)
        im = np.interp(pts, self.xi, table.imag)
        return re + 1j * im

    def at(self, eps, lam, pts):
        """A^eps_lam at arbitrary points (used on the pinned sigma lattice)."""
        pts = np.asarray(pts, dtype=float)
        one_plus = _indicator_plus(pts)
        one_minus = 1.0 - one_plus
        if (eps, lam) == ("-", "+"):
            return one_plus + one_minus * self._interp(self.T, -pts)
        if (eps, lam) == ("-", "-"):
            return one_plus * self._interp(self.R_minus, pts)
        if (eps, lam) == ("+", "+"):
            return one_plus * self._interp(self.T, pts) + one_minus
        if (eps, lam) == ("+", "-"):
            return one_minus * self._interp(self.R_plus, -pts)
        raise KeyError((eps, lam))


@dataclass(frozen=True)
class NormalFormPlan:
    """Read-only tables for assembling the boundary bilinear term.

    Holds the transform plan, the bump kernel, the half-line coefficient
    tables, the asymptotic limits ell< of the quadratic coefficient a(x),
    and the measured phase-floor constant c = min |Phi| min(<xi>,<eta>,<sigma>)
    over the pinned resonance surface.
    """

    plan: DftPlan
    kernel: PhiKernel
    ell_minus: float
    ell_plus: float
    coefficients: _CoefficientTables = field(repr=False)
    phase_floor: float
    D: int


_SIGNS = (1.0, -1.0)
_EPS = ("+", "-")
_FLOOR_HARD_LIMIT = 1e-2


def _phase_floor_surface(fgrid):
    """min |Phi_{i1 i2}| min(<xi>,<eta>,<sigma>) over xi = eta + sigma triples."""
    eta = fgrid.xi[:, None]
    sigma = fgrid.xi[None, :]
    xi = eta + sigma
    br_eta = np.sqrt(1.0 + eta ** 2)
    br_sig = np.sqrt(1.0 + sigma ** 2)
    br_xi = np.sqrt(1.0 + xi ** 2)
    low = np.minimum(np.minimum(br_xi, br_eta), br_sig)
    floor = np.inf
    for i1 in _SIGNS:
        for i2 in _SIGNS:
            phi = br_xi - i1 * br_eta - i2 * br_sig
            floor = min(floor, float((np.abs(phi) * low).min()))
    return floor


def build_normal_form_plan(plan: DftPlan, ell_minus, ell_plus, D=10,
                           kernel=None):
    """Assemble tables for normal_form_T over a transform plan.

    ell_minus/ell_plus are the x -> -/+ infinity limits of the quadratic
    coefficient a(x) in the field equation.  The phase floor is measured on
    the xi = eta + sigma resonance surface and must clear a hard limit.
    """
    if kernel is None:
        kernel = build_phi_kernel(plan.rgrid, D=D)
    if kernel.D != D:
        raise ValueError(f"kernel built with D = {kernel.D}, plan wants {D}")
    floor = _phase_floor_surface(plan.fgrid)
    if floor < _FLOOR_HARD_LIMIT:
        raise PhaseFloorError(
            f"phase floor {floor:.3e} below {_FLOOR_HARD_LIMIT}; "
            "the resonance surface degenerated, tables are unusable")
    return NormalFormPlan(
        plan=plan, kernel=kernel, ell_minus=float(ell_minus),
        ell_plus=float(ell_plus), coefficients=_CoefficientTables(plan.scattering),
        phase_floor=floor, D=int(D))


def _signal(nf, g_tilde):
    g = np.asarray(g_tilde)
    if g.shape != (nf.plan.fgrid.m,):
        raise AlignmentError("profile not aligned to the plan's FreqGrid")
    return g.astype(complex)


def _interp_c(xi, values, pts):
    re = np.interp(pts, xi, values.real, left=0.0, right=0.0)
    im = np.interp(pts, xi, values.imag, left=0.0, right=0.0)
    return re + 1j * im


def delta_part(nf: NormalFormPlan, g_tilde, t, pairs=None):
    """The delta(p) contribution to the boundary term F[T(g,g)](t, xi).

    p = lam xi - i1 mu eta - i2 nu sigma = 0 pins sigma on the integer
    lattice; the remaining eta-integral is evaluated with grid weights,
    sqrt(pi/2) measure factor, and kernel e^{it Phi}/(i Phi) per sign tuple.
    pairs optionally restricts the (i1, i2) sum, e.g. ((1, 1),) for the
    ++ block alone.
    """
    g = _signal(nf, g_tilde)
    fg = nf.plan.fgrid
    xi = fg.xi
    br = np.sqrt(1.0 + xi ** 2)
    w = fg.weights
    tabs = nf.coefficients
    ell = {"+": nf.ell_plus, "-": nf.ell_minus}
    out = np.zeros(fg.m, dtype=complex)
    worst_floor = np.inf
    wanted = None if pairs is None else {(float(p), float(q)) for p, q in pairs}

    for i1 in _SIGNS:
        g1 = g if i1 > 0 else np.conj(g)
        for i2 in _SIGNS:
            if wanted is not None and (i1, i2) not in wanted:
                continue
            sign = -i1 * i2
            for lam in _SIGNS:
                for mu in _SIGNS:
                    # sigma*(xi_i, eta_j) with p = 0, for both nu at once:
                    # nu only flips sigma* about 0, and the nu-sum is part of
                    # the tuple sum, so enumerate nu explicitly.
                    base = lam * xi[:, None] - i1 * mu * xi[None, :]
                    a_eta = {e: tabs.on_grid[(e, "+" if mu > 0 else "-")]
                             for e in _EPS}
                    for nu in _SIGNS:
                        sig = i2 * nu * base
                        br_sig = np.sqrt(1.0 + sig ** 2)
                        phase = br[:, None] - i1 * br[None, :] - i2 * br_sig
                        low = np.minimum(np.minimum(br[:, None], br[None, :]),
                                         br_sig)
                        worst_floor = min(worst_floor,
                                          float((np.abs(phase) * low).min()))
                        g2 = _interp_c(xi, g, sig)
                        if i2 < 0:
                            g2 = np.conj(g2)
                        weight = np.zeros_like(g2)
                        for e in _EPS:
                            a_xi = np.conj(tabs.on_grid[(e, "+" if lam > 0 else "-")])
                            a1 = a_eta[e] if i1 > 0 else np.conj(a_eta[e])
                            a2 = tabs.at(e, "+" if nu > 0 else "-", sig)
                            if i2 < 0:
                                a2 = np.conj(a2)
                            weight += ell[e] * a_xi[:, None] * a1[None, :] * a2
                        kern = np.exp(1j * t * phase) / (1j * phase)
                        integrand = (weight * kern * g1[None, :] * g2
                                     / (8.0 * np.pi * br[None, :] * br_sig))
                        out += sign * SQRT_PI_OVER_2 * (integrand @ w)

    if worst_floor < _FLOOR_HARD_LIMIT:
        raise PhaseFloorError(
            f"pinned-surface phase floor {worst_floor:.3e} below "
            f"{_FLOOR_HARD_LIMIT} during assembly")
    return out


def pv_support_count(nf: NormalFormPlan):
    """Number of admissible half-integer p values inside the phi* cutoff.

    The cutoff support is |p| R <= (8/5) 2^-D with R >= 1/2, so admissible
    lattice offsets satisfy (q + 1/2) dxi <= (16/5) 2^-D.  Zero means the
    p.v. part vanishes identically on this grid.
    """
    dxi = nf.plan.fgrid.dxi
    p_max = (16.0 / 5.0) * 2.0 ** (-nf.D)
    return max(0, int(np.floor(p_max / dxi - 0.5)) + 1) if p_max >= 0.5 * dxi else 0


def pv_part(nf: NormalFormPlan, g_tilde, t):
    """The principal-value contribution to F[T(g,g)](t, xi).

    Enumerates the admissible lattice values p = +/-(q + 1/2) dxi inside the
    phi* support; for each, sigma = i2 nu (lam xi - i1 mu eta - p) lands back
    on the midpoint grid and the double integral collapses to exact-node
    sums with weight dxi^2.  Symmetric +/-p pairs realize the principal
    value; the kernel phi*(p, R) phi^(p)/(ip) is odd in p.
    """
    g = _signal(nf, g_tilde)
    fg = nf.plan.fgrid
    xi = fg.xi
    m = fg.m
    dxi = fg.dxi
    br = np.sqrt(1.0 + xi ** 2)
    tabs = nf.coefficients
    ell = {"+": nf.ell_plus, "-": nf.ell_minus}
    out = np.zeros(m, dtype=complex)

    n_p = pv_support_count(nf)
    if n_p == 0:
        return out
    p_values = [s * (q + 0.5) * dxi for q in range(n_p) for s in (1.0, -1.0)]

    for p in p_values:
        phi_hat_over_ip = nf.kernel.phi_hat_at(p) / (1j * p)
        for i1 in _SIGNS:
            g1 = g if i1 > 0 else np.conj(g)
            for i2 in _SIGNS:
                sign = -i1 * i2
                for lam in _SIGNS:
                    for mu in _SIGNS:
                        base = lam * xi[:, None] - i1 * mu * xi[None, :] - p
                        for nu in _SIGNS:
                            sig = i2 * nu * base
                            idx = np.rint((sig - xi[0]) / dxi).astype(int)
                            ok = (idx >= 0) & (idx < m)
                            idx_c = np.clip(idx, 0, m - 1)
                            on_node = np.abs(sig - xi[idx_c]) < 1e-9 * max(dxi, 1.0)
                            ok &= on_node
                            if not ok.any():
                                continue
                            br_sig = br[idx_c]
                            R = br[None, :] * br_sig / (br[None, :] + br_sig)
                            star = nf.kernel.star(p, R)
                            live = ok & (star > 0.0)
                            if not live.any():
                                continue
                            phase = (br[:, None] - i1 * br[None, :]
                                     - i2 * br_sig)
                            g2 = g[idx_c]
                            if i2 < 0:
                                g2 = np.conj(g2)
                            weight = np.zeros((m, m), dtype=complex)
                            for e in _EPS:
                                a_xi = np.conj(
                                    tabs.on_grid[(e, "+" if lam > 0 else "-")])
                                a1 = tabs.on_grid[(e, "+" if mu > 0 else "-")]
                                if i1 < 0:
                                    a1 = np.conj(a1)
                                a2 = tabs.on_grid[(e, "+" if nu > 0 else "-")][idx_c]
                                if i2 < 0:
                                    a2 = np.conj(a2)
                                eps_sign = 1.0 if e == "+" else -1.0
                                weight += (ell[e] * eps_sign
                                           * a_xi[:, None] * a1[None, :] * a2)
                            kern = np.exp(1j * t * phase) / (1j * phase)
                            integrand = np.where(
                                live,
                                weight * star * phi_hat_over_ip * kern
                                * g1[None, :] * g2
                                / (8.0 * np.pi * br[None, :] * br_sig),
                                0.0)
                            out += sign * dxi * dxi * integrand.sum(axis=1)
    return out


def normal_form_T(nf: NormalFormPlan, g_tilde, t):
    """F[T(g,g)](t, xi): delta part plus principal-value part."""
    return delta_part(nf, g_tilde, t) + pv_part(nf, g_tilde, t)


def renormalized_profile(series: ProfileSeries, nf: NormalFormPlan):
    """f~(t_k) = g~(t_k) - F[T(g,g)](t_k) row by row."""
    rows = [series.profiles[k] - normal_form_T(nf, series.profiles[k], t)
            for k, t in enumerate(series.times)]
    return ProfileSeries(times=series.times.copy(), profiles=np.asarray(rows))


def d_sensitivity(plan: DftPlan, ell_minus, ell_plus, g_tilde, t,
                  D_values=(8, 10, 12)):
    """Report delta/p.v. norms of T across cutoff exponents.

    On grids where the phi* support falls below the lattice spacing the p.v.
    norm is exactly zero and T is D-independent; the report makes that
    visible instead of silently dropping the term.
    """
    report = {}
    for D in D_values:
        nf = build_normal_form_plan(plan, ell_minus, ell_plus, D=D)
        d = delta_part(nf, g_tilde, t)
        p = pv_part(nf, g_tilde, t)
        w = plan.fgrid.weights
        report[D] = {
            "delta_norm": float(np.sqrt(np.sum(w * np.abs(d) ** 2))),
            "pv_norm": float(np.sqrt(np.sum(w * np.abs(p) ** 2))),
            "pv_lattice_values": pv_support_count(nf) * 2,
        }
    return report
