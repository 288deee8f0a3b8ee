"""String velocities, the L/g split, projections, and energy dissipation.

All contour integrals use the shifted-node trapezoid tau_j = (j + 1/2) h on a
quadrature grid whose size is an even multiple of the collocation grid, so
every needed sample X(s_i + tau_j) lies on one half-shifted lattice obtained
by a phase-shifted inverse FFT.  The symmetric grid integrates the odd 1/tau
singular parts of the principal values to zero with spectral accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import auxfun, contour as ct, kernels
from .contour import Contour, ElasticityLaw, HOOKEAN, perp


class IllPosedConfigurationError(ValueError):
    """The contour violates the well-stretched condition."""


class NearSingularEvaluationError(ValueError):
    """Eulerian evaluation point too close to the contour for the log kernel."""


@dataclass(frozen=True)
class VelocityField:
    """A velocity along the string: collocation values plus coefficients."""

    values: np.ndarray          # (M, 2) at s_j = 2 pi j / M
    coeffs: np.ndarray          # (2K+1, 2)
    K: int
    variant: str = "unregularized"

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def norm(self, gamma: float = 0.0, homogeneous: bool = False) -> float:
        return ct.sobolev_norm(self.coeffs, gamma, homogeneous=homogeneous,
                               K=self.K)

    def norm_inf(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        return replace(self, values=self.values + other.values,
                       coeffs=self.coeffs + other.coeffs)

    def __sub__(self, other):
        return replace(self, values=self.values - other.values,
                       coeffs=self.coeffs - other.coeffs)


def _field(values: np.ndarray, K: int, variant: str) -> VelocityField:
    hat = ct.from_values(values, K)
    return VelocityField(values=values, coeffs=hat.coeffs, K=K, variant=variant)


def quadrature_size(contour: Contour, eps: Optional[float] = None,
                    n_quad: Optional[int] = None) -> int:
    """Even multiple of the collocation count resolving the integrand.

    Regularized kernels vary at arc scale ~eps, so the step obeys h <~ eps/4.
    """
    M = contour.collocation_count
    if n_quad is None:
        target = 2 * M
        if eps is not None:
            target = max(target, int(np.ceil(12.0 * np.pi / eps)))
        n_quad = target
    ratio = max(2, 2 * int(np.ceil(n_quad / (2.0 * M))))
    return ratio * M


def _check_stretched(contour: Contour) -> None:
    lam = ct.well_stretched_lambda(contour, 128, refine=False)
    if lam < 1e-8:
        raise IllPosedConfigurationError(
            f"well-stretched constant {lam:.3e} is numerically zero")


class _SecantGrid:
    """Secant quantities A, B, D^2 between collocation and quadrature nodes."""

    def __init__(self, contour: Contour, law: ElasticityLaw, M_quad: int):
        M = contour.collocation_count
        self.M, self.M_quad = M, M_quad
        self.h = 2.0 * np.pi / M_quad
        shift = 0.5 * self.h
        self.Yq = contour.values(M_quad, shift=shift)
        self.Ypq = contour.derivative().values(M_quad, shift=shift)
        p = np.linalg.norm(self.Ypq, axis=1)
        self.Sq = np.broadcast_to(
            law.S(p, ct.grid(M_quad, shift)), (M_quad,)).copy()
        self.Y = contour.values(M)
        ratio = M_quad // M
        j = np.arange(M_quad)
        self.idx = (np.arange(M)[:, None] * ratio + j[None, :]) % M_quad
        # signed offsets tau in (-pi, pi), identical for every row
        tau = (j + 0.5) * self.h
        self.tau = np.where(tau < np.pi, tau, tau - 2.0 * np.pi)

    def pieces(self, rows: slice):
        idx = self.idx[rows]
        dY = self.Yq[idx] - self.Y[rows, None, :]
        Ypg = self.Ypq[idx]
        A = np.einsum("ijc,ijc->ij", Ypg, dY)
        B = np.einsum("ijc,ijc->ij", Ypg, perp(dY))
        D2 = np.einsum("ijc,ijc->ij", dY, dY)
        return dY, Ypg, A, B, D2, self.Sq[idx]


_ROW_BLOCK = 64


def velocity_unregularized(contour: Contour, law: ElasticityLaw = HOOKEAN,
                           n_quad: Optional[int] = None) -> VelocityField:
    """U_Y(s) = (4 pi)^-1 p.v. int S (A^2 - B^2)/D^4 (Y(s')-Y(s)) ds'."""
    _check_stretched(contour)
    M_quad = quadrature_size(contour, n_quad=n_quad)
    sg = _SecantGrid(contour, law, M_quad)
    out = np.empty((sg.M, 2))
    for lo in range(0, sg.M, _ROW_BLOCK):
        rows = slice(lo, min(lo + _ROW_BLOCK, sg.M))
        dY, _, A, B, D2, S = sg.pieces(rows)
        w = S * (A * A - B * B) / D2 ** 2
        out[rows] = np.einsum("ij,ijc->ic", w, dY)
    out *= sg.h / (4.0 * np.pi)
    return _field(out, contour.K, "unregularized")


def _regularized_sum(contour, law, eps, table, first_fn, n_quad, variant):
    _check_stretched(contour)
    if eps <= 0:
        raise ValueError("eps must be positive")
    M_quad = quadrature_size(contour, eps=eps, n_quad=n_quad)
    sg = _SecantGrid(contour, law, M_quad)
    out = np.empty((sg.M, 2))
    for lo in range(0, sg.M, _ROW_BLOCK):
        rows = slice(lo, min(lo + _ROW_BLOCK, sg.M))
        dY, _, A, B, D2, S = sg.pieces(rows)
        x = np.sqrt(D2) / eps
        w1 = S * (A * A - B * B) / D2 ** 2 * auxfun.eval_f(table, first_fn, x)
        w2 = S * A * B / D2 ** 2 * auxfun.eval_f(table, "f2", x)
        out[rows] = np.einsum("ij,ijc->ic", w1, dY) \
            + np.einsum("ij,ijc->ic", w2, perp(dY))
    out *= sg.h / (4.0 * np.pi)
    return _field(out, contour.K, variant)


def velocity_regularized(contour: Contour, law: ElasticityLaw, eps: float,
                         table: auxfun.AuxTable,
                         n_quad: Optional[int] = None) -> VelocityField:
    """U^eps via the secant form with f1 and f2 weights (bounded integrand)."""
    return _regularized_sum(contour, law, eps, table, "f1", n_quad,
                            f"regularized(eps={eps:g})")


def velocity_error_direct(contour: Contour, law: ElasticityLaw, eps: float,
                          table: auxfun.AuxTable,
                          n_quad: Optional[int] = None) -> VelocityField:
    """U^eps - U evaluated directly with f3 and f2 weights (no cancellation)."""
    return _regularized_sum(contour, law, eps, table, "f3", n_quad,
                            f"error(eps={eps:g})")


def stokeslet(x) -> np.ndarray:
    """G(x) = (4 pi)^-1 (-ln|x| Id + x (x) x / |x|^2)."""
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    if r2 == 0.0:
        raise ZeroDivisionError("Stokeslet is singular at the origin")
    outer = np.outer(x, x) / r2
    return (-0.5 * np.log(r2) * np.eye(2) + outer) / (4.0 * np.pi)


@dataclass(frozen=True)
class MollifiedStokeslet:
    """G^eps(x) = a(|x|) Id + b(|x|) xx/|x|^2, tabulated on [0, d_max].

    Beyond d_max the exact Stokeslet coefficients are used (the mollifier's
    influence decays like (eps/d)^2 there).
    """

    eps: float
    support: float          # mollifier support radius 2 c0 eps
    d_max: float
    a_spline: CubicSpline
    b_spline: CubicSpline

    def a(self, d):
        d = np.asarray(d, dtype=float)
        out = np.empty_like(d)
        near = d <= self.d_max
        out[near] = self.a_spline(d[near])
        far = ~near
        if np.any(far):
            out[far] = -np.log(d[far]) / (4.0 * np.pi)
        return out

    def b(self, d):
        d = np.asarray(d, dtype=float)
        out = np.empty_like(d)
        near = d <= self.d_max
        out[near] = self.b_spline(d[near])
        out[~near] = 1.0 / (4.0 * np.pi)
        return out

    def G(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = float(np.hypot(*x))
        a = float(self.a(np.array(d)))
        if d == 0.0:
            return a * np.eye(2)
        b = float(self.b(np.array(d)))
        return a * np.eye(2) + b * np.outer(x, x) / d ** 2

    def apply(self, disp: np.ndarray, force: np.ndarray) -> np.ndarray:
        """G^eps(disp) force, vectorized over leading axes of (..., 2)."""
        d = np.linalg.norm(disp, axis=-1)
        a = self.a(d)
        b = self.b(d)
        d_safe = np.where(d > 0.0, d, 1.0)
        unit = disp / d_safe[..., None]
        proj = np.einsum("...c,...c->...", unit, force)
        return a[..., None] * force + np.where(
            (d > 0.0)[..., None], b[..., None] * proj[..., None] * unit, 0.0)


def _leggauss(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def mollified_stokeslet(profile: kernels.RadialProfile, eps: float,
                        d_max: float = 6.0,
                        n_near: int = 400, n_far: int = 900) -> MollifiedStokeslet:
    """Tabulate a(d), b(d) of G^eps = (phi*phi)_eps * G by polar quadrature.

    The integration is centered at the Stokeslet singularity; the radial
    sqrt-substitution absorbs the integrable log there.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not getattr(profile, "radial", True):
        raise kernels.NonRadialProfileError(
            "mollified_stokeslet requires a radial profile")
    varphi = kernels.self_convolve(profile)
    R = varphi.support_radius * eps

    def moll(dist):
        return varphi.eval(dist / eps) / eps ** 2

    split = min(1.5 * R, d_max)
    d_near = np.linspace(0.0, split, n_near)
    d_far = np.linspace(split, d_max, n_far)[1:]
    d_grid = np.concatenate([d_near, d_far])
    a_vals = np.empty_like(d_grid)
    b_vals = np.empty_like(d_grid)

    # near branch: singular point inside the support; rho = (d + R) t^2
    t, wt = _leggauss(0.0, 1.0, 160)
    th, wth = _leggauss(0.0, 2.0 * np.pi, 256)
    cos_th, sin_th = np.cos(th), np.sin(th)
    for i, d in enumerate(d_near):
        rho = (d + R) * t ** 2
        w_rho = 2.0 * (d + R) * t * wt
        dist = np.sqrt(np.maximum(
            d ** 2 + rho[:, None] ** 2
            - 2.0 * d * rho[:, None] * cos_th[None, :], 0.0))
        w2 = moll(dist) * (w_rho[:, None] * rho[:, None] * wth[None, :])
        log_term = np.where(rho > 0.0, -np.log(np.where(rho > 0, rho, 1.0)), 0.0)
        a_vals[i] = np.sum(w2 * (log_term[:, None] + sin_th[None, :] ** 2)) \
            / (4.0 * np.pi)
        b_vals[i] = np.sum(w2 * np.cos(2.0 * th)[None, :]) / (4.0 * np.pi)

    # far branch: annulus rho in (d-R, d+R), angular window around theta = 0
    t_r, w_r = np.polynomial.legendre.leggauss(72)
    t_a, w_a = np.polynomial.legendre.leggauss(96)
    for i, d in enumerate(d_grid[n_near:], start=n_near):
        rho = d + R * t_r
        w_rho = R * w_r
        th_w = np.arcsin(min(1.0, R / d)) * 1.05 if R < d else np.pi
        th = th_w * t_a
        wth = th_w * w_a
        dist = np.sqrt(np.maximum(
            d ** 2 + rho[:, None] ** 2
            - 2.0 * d * rho[:, None] * np.cos(th)[None, :], 0.0))
        w2 = moll(dist) * (w_rho[:, None] * rho[:, None] * wth[None, :])
        a_vals[i] = np.sum(w2 * (-np.log(rho[:, None]) + np.sin(th)[None, :] ** 2)) \
            / (4.0 * np.pi)
        b_vals[i] = np.sum(w2 * np.cos(2.0 * th)[None, :]) / (4.0 * np.pi)

    return MollifiedStokeslet(eps=eps, support=R, d_max=d_max,
                              a_spline=CubicSpline(d_grid, a_vals),
                              b_spline=CubicSpline(d_grid, b_vals))


def velocity_via_mollified(contour: Contour, law: ElasticityLaw,
                           moll: MollifiedStokeslet,
                           n_quad: Optional[int] = None,
                           force_values: Optional[np.ndarray] = None,
                           variant: str = "regularized") -> VelocityField:
    """U^eps(s) = int G^eps(Y(s) - Y(s')) F(s') ds' on the shifted grid.

    The smooth-kernel convolution form; serves as the cross-validation path
    for velocity_regularized and as the evaluator for projected forces.
    """
    _check_stretched(contour)
    M = contour.collocation_count
    M_quad = quadrature_size(contour, eps=moll.eps, n_quad=n_quad)
    h = 2.0 * np.pi / M_quad
    shift = 0.5 * h
    Yq = contour.values(M_quad, shift=shift)
    if force_values is None:
        force_values = ct.elastic_force(contour, law, M_quad, shift=shift)
    Y = contour.values(M)
    out = np.empty((M, 2))
    for lo in range(0, M, _ROW_BLOCK):
        hi = min(lo + _ROW_BLOCK, M)
        disp = Y[lo:hi, None, :] - Yq[None, :, :]
        out[lo:hi] = h * np.sum(moll.apply(disp, force_values[None, :, :]),
                                axis=1)
    return _field(out, contour.K, variant)


def apply_L(contour: Contour) -> VelocityField:
    """L = -(1/4) (-Laplacian)^{1/2}: Fourier multiplier -|k|/4."""
    mult = -np.abs(contour.modes) / 4.0
    coeffs = contour.coeffs * mult[:, None]
    vals = ct.Contour(coeffs=coeffs, K=contour.K,
                      collocation_count=contour.collocation_count).values()
    return VelocityField(values=vals, coeffs=coeffs, K=contour.K,
                         variant="L")


def compute_g(contour: Contour, n_quad: Optional[int] = None) -> VelocityField:
    """The smooth remainder g_Y = U_Y - LY for Hookean elasticity.

    Evaluates the regular-integral formula with the secant slope
    L(s,s') = (Y(s')-Y(s))/tau: the bracket vanishes at tau = 0 and the
    1/tau - tau/(4 sin^2(tau/2)) weight is bounded, so the shifted trapezoid
    applies directly.
    """
    _check_stretched(contour)
    M_quad = quadrature_size(contour, n_quad=n_quad)
    sg = _SecantGrid(contour, HOOKEAN, M_quad)
    tau = sg.tau
    cot_weight = 1.0 / tau - tau / (4.0 * np.sin(0.5 * tau) ** 2)
    out = np.empty((sg.M, 2))
    for lo in range(0, sg.M, _ROW_BLOCK):
        rows = slice(lo, min(lo + _ROW_BLOCK, sg.M))
        dY, Ypg, _, _, D2, _ = sg.pieces(rows)
        slope = dY / tau[None, :, None]
        slope2 = D2 / tau[None, :] ** 2
        p2 = np.einsum("ijc,ijc->ij", Ypg, Ypg)
        dot = np.einsum("ijc,ijc->ij", slope, Ypg)
        bracket = -p2 / slope2 + 2.0 * dot ** 2 / slope2 ** 2 - 1.0
        w = bracket / tau[None, :] + cot_weight[None, :]
        out[rows] = np.einsum("ij,ijc->ic", w, slope)
    out *= sg.h / (4.0 * np.pi)
    return _field(out, contour.K, "g")


def project(obj, N: int):
    """P_N: zero all coefficients with |k| > N (contours and velocities)."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if isinstance(obj, Contour):
        K = obj.K
        coeffs = obj.coeffs.copy()
    else:
        K = obj.K
        coeffs = obj.coeffs.copy()
    k = np.arange(-K, K + 1)
    coeffs[np.abs(k) > N] = 0.0
    if isinstance(obj, Contour):
        return replace(obj, coeffs=coeffs)
    vals = ct.Contour(coeffs=coeffs, K=K,
                      collocation_count=obj.M).values()
    return VelocityField(values=vals, coeffs=coeffs, K=K,
                         variant=obj.variant)


def complement(obj, N: int):
    """Q_N = Id - P_N."""
    low = project(obj, N)
    if isinstance(obj, Contour):
        return replace(obj, coeffs=obj.coeffs - low.coeffs)
    return obj - low


def velocity_eps_N(contour: Contour, eps: float, N: int,
                   moll: MollifiedStokeslet,
                   n_quad: Optional[int] = None) -> VelocityField:
    """U^{eps,N} = P_N int G^eps(X(s)-X(s')) (P_N X_ss)(s') ds' (Hookean).

    The projected force is not ds(S X') for the same contour, so the secant
    form does not apply; the convolution form is used directly.
    """
    M_quad = quadrature_size(contour, eps=eps, n_quad=n_quad)
    h = 2.0 * np.pi / M_quad
    forced = project(contour.derivative(2), N)
    force_values = forced.values(M_quad, shift=0.5 * h)
    field = velocity_via_mollified(contour, HOOKEAN, moll, n_quad=n_quad,
                                   force_values=force_values,
                                   variant=f"projected(eps={eps:g},N={N})")
    return project(field, N)


def eulerian_velocity(contour: Contour, law: ElasticityLaw, x,
                      moll: Optional[MollifiedStokeslet] = None,
                      n_quad: Optional[int] = None) -> np.ndarray:
    """Fluid velocity u(x) = int G(x - Y(s')) F(s') ds' (or G^eps)."""
    x = np.asarray(x, dtype=float)
    eps = moll.eps if moll is not None else None
    M_quad = quadrature_size(contour, eps=eps, n_quad=n_quad)
    h = 2.0 * np.pi / M_quad
    Yq = contour.values(M_quad, shift=0.5 * h)
    F = ct.elastic_force(contour, law, M_quad, shift=0.5 * h)
    disp = x[None, :] - Yq
    if moll is None:
        dmin = np.linalg.norm(disp, axis=1).min()
        pmax = ct.derivative_magnitude(contour).max()
        if dmin < 3.0 * h * pmax:
            raise NearSingularEvaluationError(
                f"point within {dmin:.3e} of the contour; log quadrature "
                "unreliable inside three grid spacings")
        d2 = np.einsum("jc,jc->j", disp, disp)
        proj = np.einsum("jc,jc->j", disp, F) / d2
        contrib = -0.5 * np.log(d2)[:, None] * F + proj[:, None] * disp
        return h / (4.0 * np.pi) * contrib.sum(axis=0)
    return h * moll.apply(disp, F).sum(axis=0)


def energy_dissipation(contour: Contour, law: ElasticityLaw, eps: float,
                       moll: MollifiedStokeslet,
                       M: Optional[int] = None) -> float:
    """-int int F(s) . G^eps(X(s)-X(s')) F(s') ds ds' = -||grad u^eps||^2."""
    if abs(moll.eps - eps) > 1e-12 * max(1.0, eps):
        raise ValueError("mollified table built for a different eps")
    # the integrand varies at scale eps; resolve it like the velocity grids
    M = M or max(contour.collocation_count, int(np.ceil(12.0 * np.pi / eps)))
    h = 2.0 * np.pi / M
    X = contour.values(M)
    F = ct.elastic_force(contour, law, M)
    total = 0.0
    for lo in range(0, M, _ROW_BLOCK):
        hi = min(lo + _ROW_BLOCK, M)
        disp = X[lo:hi, None, :] - X[None, :, :]
        gf = moll.apply(disp, F[None, :, :])
        total += np.einsum("ic,ijc->", F[lo:hi], gf)
    return float(-(h * h) * total)
