"""Regularized delta-function profiles: construction, moments, certificates.

A kernel profile phi is a compactly supported, radially symmetric function on
R^2 with unit mass.  The quantities that control the accuracy of the
regularized string velocity are the absolute moments of the self-convolution
phi*phi,

    m1 = int |x| (phi*phi)(x) dx,      m2 = int |x|^2 (phi*phi)(x) dx,

and the two-scale construction phi = (rho_r - c*rho)/(1 - c) that cancels m1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline


class NoAdmissibleRootError(ValueError):
    """The two-scale quadratic has no root in (0,1) for the requested scale."""


class NonRadialProfileError(TypeError):
    """Operation requires a radially symmetric profile."""


def _leggauss(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


@dataclass(frozen=True)
class RadialProfile:
    """A radially symmetric, compactly supported profile on R^2.

    Attributes
    ----------
    func : callable
        Vectorized radial rule r -> value for r >= 0; zero beyond the support.
    support_radius : float
        Support radius c0 > 0.
    smoothness_tag : str
        Informational regularity class, e.g. "C-inf".
    normalization : float
        The 2D integral of the profile (1 for admissible delta-profiles).
    label : str
        Provenance identifier used by cached tables.
    """

    func: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    smoothness_tag: str = "C-inf"
    normalization: float = 1.0
    label: str = "profile"
    radial: bool = field(default=True)
    # Optional linear-combination structure ((coef, atomic_profile), ...);
    # convolutions distribute over it so each scale is resolved on its own grid.
    terms: Optional[tuple] = None

    def eval(self, r):
        """Evaluate the radial rule at r >= 0 (vectorized)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r <= self.support_radius
        if np.any(inside):
            out[inside] = self.func(r[inside])
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ProductProfile:
    """Tensor-product (non-radial) profile psi(x1)*psi(x2), e.g. Peskin 4-point.

    Accepted by the moment routines only; rejected by every table builder.
    """

    func1d: Callable[[np.ndarray], np.ndarray]
    half_width: float
    smoothness_tag: str = "C0"
    normalization: float = 1.0
    label: str = "product"
    radial: bool = field(default=False)

    def eval2d(self, x1, x2):
        return self.func1d(np.asarray(x1, float)) * self.func1d(np.asarray(x2, float))


@dataclass(frozen=True)
class KernelCertificate:
    """Computed moments of phi*phi plus two-scale construction parameters."""

    m1: float
    m2: float
    m1_directional: float
    construction_params: Optional[Tuple[float, float]] = None  # (r, c)

    def to_json(self) -> str:
        rec = {"m1": self.m1, "m2": self.m2, "m1_directional": self.m1_directional}
        if self.construction_params is not None:
            rec["r"], rec["c"] = self.construction_params
        return json.dumps(rec, indent=2)


def bump_profile() -> RadialProfile:
    """The default normalized C-infinity bump Z*exp(-1/(1-|x|^2)) on |x|<1."""

    def raw(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return out

    mass, _ = quad(lambda r: 2.0 * np.pi * r * raw(np.array([r]))[0], 0.0, 1.0,
                   epsabs=1e-14, epsrel=1e-12)
    z = 1.0 / mass
    return RadialProfile(func=lambda r: z * raw(r), support_radius=1.0,
                         smoothness_tag="C-inf", normalization=1.0, label="bump")


def rescale(profile: RadialProfile, r: float) -> RadialProfile:
    """The rescaled profile phi_r(x) = r^-2 phi(x/r) (mass preserving)."""
    if r <= 0:
        raise ValueError("scale must be positive")
    return RadialProfile(
        func=lambda rho: profile.eval(rho / r) / r ** 2,
        support_radius=r * profile.support_radius,
        smoothness_tag=profile.smoothness_tag,
        normalization=profile.normalization,
        label=f"{profile.label}_r{r:g}",
    )


def peskin_four_point() -> ProductProfile:
    """The standard 4-point kernel psi(x1)psi(x2); non-radial, moments only."""

    def psi(x):
        x = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        near = x <= 1.0
        far = (x > 1.0) & (x < 2.0)
        out[near] = (3.0 - 2.0 * x[near]
                     + np.sqrt(1.0 + 4.0 * x[near] - 4.0 * x[near] ** 2)) / 8.0
        out[far] = (5.0 - 2.0 * x[far]
                    - np.sqrt(-7.0 + 12.0 * x[far] - 4.0 * x[far] ** 2)) / 8.0
        return out

    return ProductProfile(func1d=psi, half_width=2.0, smoothness_tag="C1",
                          normalization=1.0, label="peskin4")


def normalization_quadrature(profile) -> float:
    """Recompute the 2D mass of a profile by quadrature."""
    if getattr(profile, "radial", True):
        r, w = _leggauss(0.0, profile.support_radius, 400)
        return float(2.0 * np.pi * np.sum(w * r * profile.eval(r)))
    h = profile.half_width
    x, w = _leggauss(-h, h, 240)
    vals = profile.eval2d(x[:, None], x[None, :])
    return float(w @ vals @ w)


def delta_eps(profile: RadialProfile, eps: float, x) -> float:
    """The regularized delta delta_eps(x) = eps^-2 phi(|x|/eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x ** 2, axis=-1))
    return profile.eval(r / eps) / eps ** 2


def radial_convolve(f: RadialProfile, g: RadialProfile,
                    n_nodes: int = 2048,
                    quad_nodes: Tuple[int, int] = (128, 256)) -> RadialProfile:
    """Convolution of two radial profiles, tabulated and spline-interpolated.

    For each tabulation distance d the convolution is a 2D integral in
    relative polar coordinates,

        (f*g)(d) = int_0^{cf} int_0^{2pi} rho f(rho)
                   g(sqrt(d^2 + rho^2 - 2 d rho cos(t))) dt drho,

    which is smooth for bump-type profiles, so tensor Gauss-Legendre applies.
    """
    if not (getattr(f, "radial", True) and getattr(g, "radial", True)):
        raise NonRadialProfileError("radial_convolve requires radial profiles")
    if f.terms is not None or g.terms is not None:
        return _convolve_combination(f, g, n_nodes, quad_nodes)
    key = (id(f), id(g), f.label, g.label, n_nodes, quad_nodes)
    cached = _PAIR_CONV_CACHE.get(key)
    if cached is not None:
        return cached
    cf, cg = f.support_radius, g.support_radius
    support = cf + cg
    n_r, n_t = quad_nodes
    rho, w_r = _leggauss(0.0, cf, n_r)
    theta, w_t = _leggauss(0.0, np.pi, n_t)  # even in theta: double half-range
    f_weights = 2.0 * w_r * rho * f.eval(rho)  # (n_r,)
    cos_t = np.cos(theta)

    d_grid = np.linspace(0.0, support, n_nodes)
    vals = np.empty(n_nodes)
    chunk = max(1, (8 << 20) // (n_r * n_t * 8))
    for lo in range(0, n_nodes, chunk):
        d = d_grid[lo:lo + chunk, None, None]
        dist = np.sqrt(np.maximum(
            d ** 2 + rho[None, :, None] ** 2
            - 2.0 * d * rho[None, :, None] * cos_t[None, None, :], 0.0))
        vals[lo:lo + chunk] = np.einsum(
            "r,drt,t->d", f_weights, g.eval(dist), w_t)

    spline = CubicSpline(d_grid, vals)
    result = RadialProfile(
        func=lambda r: spline(np.minimum(r, support)),
        support_radius=support,
        smoothness_tag=f.smoothness_tag,
        normalization=f.normalization * g.normalization,
        label=f"({f.label})*({g.label})",
    )
    _PAIR_CONV_CACHE[key] = result
    return result


def _convolve_combination(f: RadialProfile, g: RadialProfile,
                          n_nodes: int, quad_nodes) -> RadialProfile:
    """Distribute the convolution over linear-combination profiles."""
    f_terms = f.terms if f.terms is not None else ((1.0, f),)
    g_terms = g.terms if g.terms is not None else ((1.0, g),)
    pieces = []
    for af, pf in f_terms:
        for ag, pg in g_terms:
            pieces.append((af * ag, radial_convolve(pf, pg, n_nodes=n_nodes,
                                                    quad_nodes=quad_nodes)))
    support = f.support_radius + g.support_radius

    def combined(r):
        total = np.zeros_like(np.asarray(r, dtype=float))
        for coef, conv in pieces:
            total = total + coef * conv.eval(r)
        return total

    return RadialProfile(
        func=combined, support_radius=support,
        smoothness_tag=f.smoothness_tag,
        normalization=f.normalization * g.normalization,
        label=f"({f.label})*({g.label})",
    )


_PAIR_CONV_CACHE: dict = {}
_SELF_CONV_CACHE: dict = {}


def self_convolve(profile: RadialProfile, n_nodes: int = 2048) -> RadialProfile:
    """phi*phi as a radial profile; cached per profile instance."""
    key = (id(profile), n_nodes)
    if key not in _SELF_CONV_CACHE:
        _SELF_CONV_CACHE[key] = radial_convolve(profile, profile, n_nodes=n_nodes)
    return _SELF_CONV_CACHE[key]


def _radial_weighted_integral(profile: RadialProfile, power: int) -> float:
    """2*pi * int_0^c r^(1+power) profile(r) dr by dense Gauss quadrature."""
    r, w = _leggauss(0.0, profile.support_radius, 2048)
    return float(2.0 * np.pi * np.sum(w * r ** (1 + power) * profile.eval(r)))


def _product_conv1d(profile: ProductProfile) -> Callable[[np.ndarray], np.ndarray]:
    """Spline of the 1D self-convolution psi*psi for product profiles."""
    h = profile.half_width
    grid = np.linspace(-2 * h, 2 * h, 2049)
    t, w = _leggauss(-h, h, 512)
    psi_t = profile.func1d(t)
    vals = np.array([np.sum(w * psi_t * profile.func1d(x - t)) for x in grid])
    return CubicSpline(grid, vals)


def _product_moment(profile: ProductProfile, weight) -> float:
    conv = _product_conv1d(profile)
    h = 2 * profile.half_width
    x, w = _leggauss(-h, h, 800)
    vx = conv(x)
    wmat = weight(x[:, None], x[None, :])
    return float((w * vx) @ wmat @ (w * vx))


def moment_m1(profile) -> float:
    """First absolute moment int |x| (phi*phi)(x) dx."""
    if getattr(profile, "radial", True):
        return _radial_weighted_integral(self_convolve(profile), 1)
    return _product_moment(profile, lambda a, b: np.sqrt(a ** 2 + b ** 2))


def moment_m2(profile) -> float:
    """Second absolute moment int |x|^2 (phi*phi)(x) dx.

    For radial profiles this reduces exactly to 4*pi*int r^3 phi(r) dr,
    avoiding the convolution table.
    """
    if getattr(profile, "radial", True):
        return 2.0 * _radial_weighted_integral(profile, 2)
    return _product_moment(profile, lambda a, b: a ** 2 + b ** 2)


def moment_m1_directional(profile, v) -> float:
    """Directional first moment int |v x x| (phi*phi)(x) dx for unit v.

    For radial profiles this equals 2*m1/pi; computed here by genuine
    quadrature (angular integral split at the two |sin| kinks).
    """
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("v must be a unit vector")
    theta_v = np.arctan2(v[1], v[0])
    if getattr(profile, "radial", True):
        conv = self_convolve(profile)
        c = conv.support_radius
        r, w_r = _leggauss(0.0, c, 1024)
        radial = np.sum(w_r * r ** 2 * conv.eval(r))
        # int_0^{2pi} |sin(t - theta_v)| dt = 4, split into smooth halves
        t1, w1 = _leggauss(theta_v, theta_v + np.pi, 128)
        t2, w2 = _leggauss(theta_v + np.pi, theta_v + 2 * np.pi, 128)
        angular = np.sum(w1 * np.abs(np.sin(t1 - theta_v))) \
            + np.sum(w2 * np.abs(np.sin(t2 - theta_v)))
        return float(radial * angular)
    return _product_moment(
        profile, lambda a, b: np.abs(v[0] * b - v[1] * a))


def build_m1_zero_kernel(rho: RadialProfile, r: float,
                         tolerance: float = 1e-8
                         ) -> Tuple[RadialProfile, KernelCertificate]:
    """Two-scale kernel phi = (rho_r - c*rho)/(1-c) with vanishing m1.

    Solves c^2*I0 - 2*c*Ir + r*I0 = 0 where I0 = int|x| rho*rho and
    Ir = int|x| rho_r*rho, taking the smaller root
    c = (Ir - sqrt(Ir^2 - r*I0^2))/I0, which lies in (0,1) when it exists.
    """
    if not (0.0 < r < 1.0):
        raise ValueError("scale r must lie in (0,1)")
    rho_r = rescale(rho, r)
    i0 = _radial_weighted_integral(self_convolve(rho), 1)
    ir = _radial_weighted_integral(radial_convolve(rho_r, rho), 1)
    disc = ir ** 2 - r * i0 ** 2
    if disc <= 0.0:
        raise NoAdmissibleRootError(
            f"no root in (0,1) at r={r}: Ir^2 - r*I0^2 = {disc:.3e} <= 0; "
            "try a smaller r")
    c = (ir - np.sqrt(disc)) / i0
    if not (0.0 < c < 1.0):
        raise NoAdmissibleRootError(f"root c={c} outside (0,1) at r={r}")

    w_r, w_0 = 1.0 / (1.0 - c), -c / (1.0 - c)
    phi = RadialProfile(
        func=lambda s: w_r * rho_r.eval(s) + w_0 * rho.eval(s),
        support_radius=max(rho.support_radius, rho_r.support_radius),
        smoothness_tag=rho.smoothness_tag,
        normalization=rho.normalization,
        label=f"two_scale({rho.label},r={r:g})",
        terms=((w_r, rho_r), (w_0, rho)),
    )
    m1 = moment_m1(phi)
    if abs(m1) > tolerance:
        raise ArithmeticError(
            f"two-scale construction left |m1|={abs(m1):.3e} > {tolerance:g}")
    cert = KernelCertificate(m1=m1, m2=moment_m2(phi),
                             m1_directional=2.0 * m1 / np.pi,
                             construction_params=(r, float(c)))
    return phi, cert


def certify(profile, construction_params=None) -> KernelCertificate:
    """Compute the moment certificate of a profile."""
    m1 = moment_m1(profile)
    if getattr(profile, "radial", True):
        m1_dir = 2.0 * m1 / np.pi
    else:
        m1_dir = moment_m1_directional(profile, np.array([1.0, 0.0]))
    return KernelCertificate(m1=m1, m2=moment_m2(profile),
                             m1_directional=m1_dir,
                             construction_params=construction_params)


def kernel_from_config(config: dict):
    """Build a kernel from {"type": "bump"|"two_scale"|"peskin4", "r": .., "tolerance": ..}.

    Returns (profile, certificate).
    """
    kind = config.get("type", "bump")
    if kind == "bump":
        profile = bump_profile()
        return profile, certify(profile)
    if kind == "two_scale":
        r = float(config.get("r", 0.35))
        tol = float(config.get("tolerance", 1e-8))
        return build_m1_zero_kernel(bump_profile(), r, tolerance=tol)
    if kind == "peskin4":
        profile = peskin_four_point()
        return profile, certify(profile)
    raise ValueError(f"unknown kernel type {kind!r}")
