"""Jost solutions, transmission/reflection coefficients, zero-energy class.

With the oscillation factored out, m_pm(x, xi) = e^{mp i xi x} f_pm(x, xi),
the stationary equation -f'' + V f = xi^2 f turns into first-order-in-V forms

    m_+'' + 2 i xi m_+' = V m_+    with (m_+, m_+') = (1, 0) at x = +L,
    m_-'' - 2 i xi m_-' = V m_-    with (m_-, m_-') = (1, 0) at x = -L,

which are marched inward from the side where the solution is trivial.  All
frequency columns march at once; xi = 0 is computed as its own explicit
column.  The Volterra integral form at xi = 0 is kept as an independent
cross-check route (volterra_zero_energy), never as the production path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import (
    DivergedIntegrationError,
    FreqGrid,
    RealGrid,
    SizingError,
    d1_five_point,
    d2_five_point,
    integrate_second_order_ode,
    quadrature,
    prefix_integral_simpson,
    suffix_integral_simpson,
)


class JostError(RuntimeError):
    """Jost marching failed; carries the offending frequencies."""

    def __init__(self, message, xi_values=None):
        super().__init__(message)
        self.xi_values = xi_values


class InconclusiveClassificationError(RuntimeError):
    """Zero-energy discriminant landed inside the ambiguity band.

    The classification quantity sits within [threshold/10, threshold], too
    close to the cut to call either way; refine the grids (larger L, smaller
    h) and retry.
    """

    def __init__(self, message, quantity, band):
        super().__init__(message)
        self.quantity = quantity
        self.band = band


class ExpansionFailedError(RuntimeError):
    """Low-energy fit of T did not reproduce the data within tolerance."""


def _potential_callable(V, rgrid):
    """Accept a Potential, a plain callable, or node samples.

    Returns (callable or None, samples).  The callable is preferred during
    marching because RK4 substeps evaluate V between nodes; with samples only,
    a cubic interpolant stands in (slightly less accurate, documented).
    """
    if callable(V):
        samples = np.asarray(V(rgrid.x), dtype=float)
        return V, samples
    samples = np.asarray(V, dtype=float)
    if samples.shape != (rgrid.n,):
        raise SizingError(
            f"potential samples have shape {samples.shape}, expected ({rgrid.n},)")
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(rgrid.x, samples)
    return (lambda x: spline(x)), samples


@dataclass(frozen=True, eq=False)
class JostTables:
    """Sampled Jost solutions m_pm(x_j, xi_k) and their x-derivatives.

    Table layout is (n, m): axis 0 is space, axis 1 is frequency.  The xi = 0
    solutions (real) are separate columns since 0 is not a FreqGrid node.
    """

    rgrid: RealGrid
    fgrid: FreqGrid
    V: np.ndarray = field(repr=False)
    m_plus: np.ndarray = field(repr=False)
    dm_plus: np.ndarray = field(repr=False)
    m_minus: np.ndarray = field(repr=False)
    dm_minus: np.ndarray = field(repr=False)
    m_plus0: np.ndarray = field(repr=False)
    dm_plus0: np.ndarray = field(repr=False)
    m_minus0: np.ndarray = field(repr=False)
    dm_minus0: np.ndarray = field(repr=False)

    def conjugation_defect(self):
        """max |m(x, -xi) - conj m(x, xi)| over both tables.

        Each frequency column is marched independently, so this measures a
        genuine symmetry of the pipeline rather than a construction identity.
        """
        d_plus = np.abs(self.fgrid.mirror(self.m_plus, axis=1) - np.conj(self.m_plus))
        d_minus = np.abs(self.fgrid.mirror(self.m_minus, axis=1) - np.conj(self.m_minus))
        return max(d_plus.max(), d_minus.max())

    def ode_residual(self, columns=None):
        """Finite-difference residual of the marched columns.

        max over the sampled columns of |m'' + 2 i s xi m' - V m| on interior
        nodes (five-point stencils); limited by stencil truncation, so expect
        ~h^4 scale rather than marching accuracy.
        """
        if columns is None:
            m = self.fgrid.m
            columns = [0, m // 4, m // 2, (3 * m) // 4, m - 1]
        h = self.rgrid.h
        worst = 0.0
        for sign, table in ((+1.0, self.m_plus), (-1.0, self.m_minus)):
            for k in columns:
                mk = table[:, k]
                xi = self.fgrid.xi[k]
                res = (d2_five_point(mk, h) + 2j * sign * xi * d1_five_point(mk, h)
                       - self.V * mk)
                worst = max(worst, np.abs(res[2:-2]).max())
        return worst


def compute_jost(V, rgrid: RealGrid, fgrid: FreqGrid, tol=1e-8, substeps=4):
    """March the Jost solutions across the grid for every frequency node.

    tol bounds the admissible potential leakage at the boundary (the marching
    data m = 1, m' = 0 is only correct where V has died out) and sets the
    overflow guard for the marcher.
    """
    V_call, V_samples = _potential_callable(V, rgrid)
    edge = max(abs(V_samples[0]), abs(V_samples[-1]))
    if edge > tol:
        raise SizingError(
            f"|V| = {edge:.3g} at the grid edge exceeds tol = {tol:.3g}; enlarge L")

    xi = fgrid.xi

    def rhs_plus(x, u, du):
        return V_call(x) * u - 2j * xi * du

    def rhs_minus(x, u, du):
        return V_call(x) * u + 2j * xi * du

    def rhs_zero(x, u, du):
        return V_call(x) * u

    ones = np.ones(fgrid.m, dtype=complex)
    zeros = np.zeros(fgrid.m, dtype=complex)
    try:
        m_plus, dm_plus = integrate_second_order_ode(
            rhs_plus, "right", ones, zeros, rgrid, tol=tol, substeps=substeps)
        m_minus, dm_minus = integrate_second_order_ode(
            rhs_minus, "left", ones, zeros, rgrid, tol=tol, substeps=substeps)
    except DivergedIntegrationError as exc:
        bad = xi[exc.bad_mask] if exc.bad_mask is not None else xi
        raise JostError(
            f"Jost marching diverged near x = {exc.position:.6g} "
            f"for xi in {np.array2string(np.atleast_1d(bad)[:8], precision=4)}",
            xi_values=bad) from exc

    mp0, dmp0 = integrate_second_order_ode(
        rhs_zero, "right", np.array(1.0 + 0j), np.array(0.0 + 0j), rgrid,
        tol=tol, substeps=substeps)
    mm0, dmm0 = integrate_second_order_ode(
        rhs_zero, "left", np.array(1.0 + 0j), np.array(0.0 + 0j), rgrid,
        tol=tol, substeps=substeps)

    return JostTables(
        rgrid=rgrid, fgrid=fgrid, V=V_samples,
        m_plus=m_plus, dm_plus=dm_plus, m_minus=m_minus, dm_minus=dm_minus,
        m_plus0=mp0.real, dm_plus0=dmp0.real,
        m_minus0=mm0.real, dm_minus0=dmm0.real)


def volterra_zero_energy(V, rgrid: RealGrid, side="plus", tol=1e-12, max_iter=200):
    """Zero-energy Jost solution by Picard iteration of the Volterra form.

    m_+(x) = 1 + int_x^L (y - x) V(y) m_+(y) dy   (side="plus"),
    m_-(x) = 1 + int_-L^x (x - y) V(y) m_-(y) dy  (side="minus").

    Independent of the ODE marcher (different discretization route), which is
    the point: it serves as the frozen oracle for the marched xi = 0 column.
    Returns (m, m'); m' comes from differentiating the kernel, m_+' = -int_x^L
    V m, so no finite differencing enters.
    """
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    _, Vs = _potential_callable(V, rgrid)
    x = rgrid.x
    m = np.ones(rgrid.n)
    # Early Picard sweeps overshoot (partial sums of the kernel series reach
    # sup ~ L * ||<y> V||_1 before the factorial wins), so rounding noise is
    # amplified to ~eps * peak and the sweeps land in a limit cycle there,
    # not at tol.  Track the peak and accept convergence at that floor.
    peak = 1.0
    for _ in range(max_iter):
        Vm = Vs * m
        if side == "plus":
            nxt = (1.0 + suffix_integral_simpson(x * Vm, rgrid)
                   - x * suffix_integral_simpson(Vm, rgrid))
        else:
            nxt = (1.0 + x * prefix_integral_simpson(Vm, rgrid)
                   - prefix_integral_simpson(x * Vm, rgrid))
        change = np.abs(nxt - m).max()
        m = nxt
        peak = max(peak, float(np.abs(m).max()))
        if change < max(tol, 64.0 * np.finfo(float).eps * peak):
            break
    else:
        raise JostError(f"Volterra iteration did not settle within {max_iter} sweeps")
    Vm = Vs * m
    dm = (-suffix_integral_simpson(Vm, rgrid) if side == "plus"
          else prefix_integral_simpson(Vm, rgrid))
    return m, dm


@dataclass(frozen=True, eq=False)
class ScatteringData:
    """Transmission/reflection coefficients on a FreqGrid with zero-energy data.

    T is the average of the two formula routes (through m_+ and through m_-);
    their disagreement is recorded in cross_defect rather than hidden.  T0 and
    R_pm0 are one-sided quadratic extrapolations from the three smallest
    positive nodes; a = m_+(-L, 0) from the marched zero column.
    """

    fgrid: FreqGrid
    T: np.ndarray = field(repr=False)
    R_plus: np.ndarray = field(repr=False)
    R_minus: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    T0: complex
    R_plus0: complex
    R_minus0: complex
    a: float
    cross_defect: float
    bound_state_suspect: bool
    classification: "Classification | None" = None

    def unitarity_defect(self):
        """max over the grid of | |T|^2 + |R_pm|^2 - 1 | (both signs)."""
        t2 = np.abs(self.T) ** 2
        d_plus = np.abs(t2 + np.abs(self.R_plus) ** 2 - 1.0)
        d_minus = np.abs(t2 + np.abs(self.R_minus) ** 2 - 1.0)
        return max(d_plus.max(), d_minus.max())

    def offdiagonal_defect(self):
        """max |T conj(R_-) + R_+ conj(T)| (S-matrix column orthogonality)."""
        return np.abs(self.T * np.conj(self.R_minus)
                      + self.R_plus * np.conj(self.T)).max()

    def conjugation_defect(self):
        """max defect of T(-xi) = conj T(xi) and the same for R_pm."""
        g = self.fgrid
        return max(
            np.abs(g.mirror(self.T) - np.conj(self.T)).max(),
            np.abs(g.mirror(self.R_plus) - np.conj(self.R_plus)).max(),
            np.abs(g.mirror(self.R_minus) - np.conj(self.R_minus)).max())

    def with_classification(self, classification):
        return replace(self, classification=classification)


def _extrapolate_to_zero(xi3, y3):
    """Quadratic (Lagrange) extrapolation of three samples to xi = 0."""
    x1, x2, x3 = xi3
    l1 = (x2 * x3) / ((x1 - x2) * (x1 - x3))
    l2 = (x1 * x3) / ((x2 - x1) * (x2 - x3))
    l3 = (x1 * x2) / ((x3 - x1) * (x3 - x2))
    return l1 * y3[0] + l2 * y3[1] + l3 * y3[2]


def scattering_coefficients(jost: JostTables, V=None):
    """Evaluate T, R_pm from the Jost tables through both integral routes.

    T(xi) = 2 i xi / (2 i xi - int V m_pm dx) with either sign of m; the two
    answers are averaged and their spread kept as cross_defect.  Each R uses
    the denominator belonging to its own m route.
    """
    rg, fg = jost.rgrid, jost.fgrid
    Vs = jost.V if V is None else np.asarray(V, dtype=float)
    xi = fg.xi
    two_i_xi = 2j * xi

    I_plus = quadrature(Vs[:, None] * jost.m_plus, rg, axis=0)
    I_minus = quadrature(Vs[:, None] * jost.m_minus, rg, axis=0)
    denom_plus = two_i_xi - I_plus
    denom_minus = two_i_xi - I_minus
    smallest = min(np.abs(denom_plus).min(), np.abs(denom_minus).min())
    bound_state_suspect = bool(smallest < 1e-14)

    T_from_plus = two_i_xi / denom_plus
    T_from_minus = two_i_xi / denom_minus
    cross_defect = float(np.abs(T_from_plus - T_from_minus).max())
    T = 0.5 * (T_from_plus + T_from_minus)

    phase = np.exp(-2j * np.outer(rg.x, xi))
    R_plus = quadrature(phase * Vs[:, None] * jost.m_minus, rg, axis=0) / denom_minus
    R_minus = quadrature(np.conj(phase) * Vs[:, None] * jost.m_plus, rg, axis=0) / denom_plus
    W = two_i_xi / T

    # One-sided limit xi -> 0+ from the three smallest positive nodes.
    k0 = fg.m // 2
    sel = slice(k0, k0 + 3)
    T0 = _extrapolate_to_zero(xi[sel], T[sel])
    R_plus0 = _extrapolate_to_zero(xi[sel], R_plus[sel])
    R_minus0 = _extrapolate_to_zero(xi[sel], R_minus[sel])

    return ScatteringData(
        fgrid=fg, T=T, R_plus=R_plus, R_minus=R_minus, W=W,
        T0=complex(T0), R_plus0=complex(R_plus0), R_minus0=complex(R_minus0),
        a=float(jost.m_plus0[0]), cross_defect=cross_defect,
        bound_state_suspect=bound_state_suspect)


GENERIC = "Generic"
EXCEPTIONAL = "Exceptional"
VERY_EXCEPTIONAL = "VeryExceptional"


@dataclass(frozen=True)
class Classification:
    """Zero-energy class of the potential with the discriminants that chose it.

    coupling = |int V m_+(., 0) dx| decides Generic against Exceptional;
    moment = |int x V m_+(., 0) dx| (only computed when exceptional) decides
    plain Exceptional against VeryExceptional.  T0/R_pm0 carry the class's
    zero-energy values: closed forms in a for the exceptional classes, the
    extrapolated limits for Generic (where T(0) = 0, R_pm(0) = -1).
    """

    kind: str
    a: float
    coupling: float
    threshold: float
    moment: float | None
    moment_threshold: float | None
    T0: complex
    R_plus0: complex
    R_minus0: complex


def classify_zero_energy(sd: ScatteringData, jost: JostTables, V=None,
                         threshold_scale=1e-6):
    """Decide Generic / Exceptional(a) / VeryExceptional from the xi = 0 data.

    Generic iff |int V m_+(., 0)| exceeds threshold_scale * ||V||_1; values
    inside [threshold/10, threshold] raise InconclusiveClassificationError
    (refine rather than guess).  Exceptional potentials report T(0), R_pm(0)
    through the closed forms in a = m_+(-L, 0); the very exceptional subclass
    additionally needs |int x V m_+(., 0)| below its own scaled threshold,
    with the mirrored ambiguity band.
    """
    rg = jost.rgrid
    Vs = jost.V if V is None else np.asarray(V, dtype=float)
    m0 = jost.m_plus0
    a = float(m0[0])

    coupling = abs(float(rg.integrate(Vs * m0)))
    threshold = threshold_scale * float(rg.integrate(np.abs(Vs)))
    if coupling > threshold:
        return Classification(
            kind=GENERIC, a=a, coupling=coupling, threshold=threshold,
            moment=None, moment_threshold=None,
            T0=sd.T0, R_plus0=sd.R_plus0, R_minus0=sd.R_minus0)
    if coupling >= threshold / 10.0:
        raise InconclusiveClassificationError(
            f"|int V m_+(.,0)| = {coupling:.3e} falls in the ambiguity band "
            f"[{threshold / 10.0:.3e}, {threshold:.3e}]; refine the grid",
            quantity=coupling, band=(threshold / 10.0, threshold))

    T0 = 2.0 * a / (1.0 + a * a)
    R_plus0 = (1.0 - a * a) / (1.0 + a * a)
    moment = abs(float(rg.integrate(rg.x * Vs * m0)))
    moment_threshold = threshold_scale * float(rg.integrate(np.abs(rg.x * Vs)))
    if moment > moment_threshold:
        kind = EXCEPTIONAL
    elif moment < moment_threshold / 10.0:
        kind = VERY_EXCEPTIONAL
    else:
        raise InconclusiveClassificationError(
            f"|int x V m_+(.,0)| = {moment:.3e} falls in the ambiguity band "
            f"[{moment_threshold / 10.0:.3e}, {moment_threshold:.3e}]; refine the grid",
            quantity=moment, band=(moment_threshold / 10.0, moment_threshold))
    return Classification(
        kind=kind, a=a, coupling=coupling, threshold=threshold,
        moment=moment, moment_threshold=moment_threshold,
        T0=complex(T0), R_plus0=complex(R_plus0), R_minus0=complex(-R_plus0))


@dataclass(frozen=True)
class LowEnergyExpansion:
    """Behavior of T near xi = 0.

    Generic: T(xi) ~ alpha xi + beta xi^2 (+ gamma xi^3 in the fit window),
    with alpha purely imaginary up to fit noise.  Exceptional: the values
    (T(0), R_+(0), R_-(0)) from the closed forms in a, with formula_defect
    recording their distance from the grid extrapolations.
    """

    kind: str
    alpha: complex | None = None
    beta: complex | None = None
    residual: float | None = None
    window: float | None = None
    T0: complex | None = None
    R_plus0: complex | None = None
    R_minus0: complex | None = None
    formula_defect: float | None = None


def low_energy_expansion(sd: ScatteringData, classification: Classification,
                         window=0.2, tol=1e-4):
    """Fit or evaluate the small-xi behavior of T per the classification."""
    if classification.kind == GENERIC:
        mask = np.abs(sd.fgrid.xi) < window
        if mask.sum() < 4:
            raise ExpansionFailedError(
                f"only {int(mask.sum())} nodes inside |xi| < {window}; widen the window")
        xi = sd.fgrid.xi[mask]
        design = np.stack([xi, xi ** 2, xi ** 3], axis=1).astype(complex)
        coef, *_ = np.linalg.lstsq(design, sd.T[mask], rcond=None)
        residual = float(np.abs(design @ coef - sd.T[mask]).max())
        if residual > tol:
            raise ExpansionFailedError(
                f"low-energy fit residual {residual:.3e} exceeds {tol:.1e}")
        return LowEnergyExpansion(
            kind=GENERIC, alpha=complex(coef[0]), beta=complex(coef[1]),
            residual=residual, window=window)
    a = classification.a
    T0 = 2.0 * a / (1.0 + a * a)
    R_plus0 = (1.0 - a * a) / (1.0 + a * a)
    defect = max(abs(T0 - sd.T0), abs(R_plus0 - sd.R_plus0), abs(-R_plus0 - sd.R_minus0))
    return LowEnergyExpansion(
        kind=classification.kind, T0=complex(T0), R_plus0=complex(R_plus0),
        R_minus0=complex(-R_plus0), formula_defect=float(defect))


def write_scattering_csv(sd: ScatteringData, path):
    """Dump the coefficient tables; last column is the pointwise unitarity defect."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi", "Re_T", "Im_T", "Re_Rplus", "Im_Rplus",
                         "Re_Rminus", "Im_Rminus", "unitarity_defect"])
        defect = np.abs(sd.T) ** 2 + np.abs(sd.R_plus) ** 2 - 1.0
        for k, xi in enumerate(sd.fgrid.xi):
            writer.writerow([
                repr(float(xi)),
                repr(sd.T[k].real), repr(sd.T[k].imag),
                repr(sd.R_plus[k].real), repr(sd.R_plus[k].imag),
                repr(sd.R_minus[k].real), repr(sd.R_minus[k].imag),
                repr(float(defect[k]))])
