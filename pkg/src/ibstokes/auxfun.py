"""Auxiliary functions f1..f5 of the mollified Stokeslet along secants.

For a radial kernel phi with self-convolution varphi = phi*phi and 2D Fourier
transform psi(rho) = (phi-hat)^2, the regularized string velocity is an
integral against two one-dimensional profiles,

    f1(x) = (x/pi) int e^{i x eta1} (-i eta1 eta2^2) / |eta|^4 psi(|eta|) deta,
    f2(x) = (x/pi) int e^{i x eta1} (-i eta1 (eta1^2-eta2^2)) / |eta|^4 psi(|eta|) deta,

plus f3 = f1 - 1, f4 = f2 - f3, f5 = f2 - 2 f3.  Reducing the angular
integrals with int e^{iz cos a} cos(na) da = 2 pi i^n J_n(z) gives the radial
forms used here:

    f1(x) = 2 int_0^inf psi(rho) J2(x rho) / rho drho,
    f2(x) = 2 x int_0^inf psi(rho) J1(x rho) drho - 2 f1(x).

Both vanish at 0; f1 -> 1 at infinity; f3, f2 have the m2-controlled tails
f3 ~ -m2/x^2, f2 ~ 2 m2/x^2; and int f2 = 4 m1, int f3 = -4 m1.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import jv

from . import kernels
from .kernels import NonRadialProfileError, RadialProfile

F_NAMES = ("f1", "f2", "f3", "f4", "f5")
PSI_FLOOR = 1e-14  # frequency cutoff: quadrature stops where |phi-hat|^2 < this


class TableRejectedError(RuntimeError):
    """An identity check failed during table construction."""


def _leggauss(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


@dataclass
class FourierTable:
    """phi-hat tabulated on [0, rho_max] with spline evaluation."""

    rho: np.ndarray
    values: np.ndarray
    spline: CubicSpline

    def __call__(self, rho):
        return self.spline(np.minimum(np.asarray(rho, dtype=float), self.rho[-1]))


def fourier_hat_radial(profile: RadialProfile, rho_max: float,
                       n: int = 4096, quad_n: Optional[int] = None) -> FourierTable:
    """Radial 2D Fourier transform phi-hat(rho) = 2 pi int r phi(r) J0(r rho) dr."""
    if not getattr(profile, "radial", True):
        raise NonRadialProfileError("fourier_hat_radial requires a radial profile")
    c0 = profile.support_radius
    if quad_n is None:
        # resolve the fastest Bessel oscillation (c0 * rho_max) comfortably
        quad_n = max(512, int(4 * c0 * rho_max))
    r, w = _leggauss(0.0, c0, quad_n)
    weights = 2.0 * np.pi * w * r * profile.eval(r)
    rho = np.linspace(0.0, rho_max, n)
    vals = np.empty(n)
    chunk = max(1, (16 << 20) // (quad_n * 8))
    for lo in range(0, n, chunk):
        vals[lo:lo + chunk] = jv(0, rho[lo:lo + chunk, None] * r[None, :]) @ weights
    return FourierTable(rho=rho, values=vals, spline=CubicSpline(rho, vals))


def _psi_table(profile: RadialProfile) -> FourierTable:
    """(phi-hat)^2 tabulated out to where it falls below PSI_FLOOR."""
    rho_max = 100.0
    while rho_max <= 2000.0:
        n = int(40 * rho_max)  # ~37 nodes per phi-hat oscillation for c0=1
        hat = fourier_hat_radial(profile, rho_max, n=n)
        psi = hat.values ** 2
        tail = psi[int(0.95 * n):]
        if tail.max() < PSI_FLOOR:
            cut = np.argmax(psi < PSI_FLOOR) if np.any(psi < PSI_FLOOR) else n - 1
            # keep a margin beyond the first crossing
            cut = min(n - 1, int(1.2 * cut) + 1)
            rho = hat.rho[:cut + 1]
            vals = psi[:cut + 1]
            return FourierTable(rho=rho, values=vals,
                                spline=CubicSpline(rho, vals))
        rho_max *= 2.0
    raise TableRejectedError("phi-hat decays too slowly; no admissible cutoff")


@dataclass
class AuxTable:
    """Tabulated f1..f5 with tail coefficients for x > x_max.

    Attributes
    ----------
    grid : ndarray
        Increasing nodes 0 = x_0 < ... < x_max.
    f1..f5 : ndarray
        Nodal values; f3 = f1 - 1, f4 = f2 - f3, f5 = f2 - 2 f3 exactly.
    tail_m2 : float
        Second moment of the kernel, controls the x^-2 tails.
    m1 : float
        First moment, used by the integral identities and rate predictions.
    kernel_id : str
        Provenance label of the generating profile.
    """

    grid: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    f5: np.ndarray
    tail_m2: float
    m1: float
    kernel_id: str = "unknown"
    _splines: dict = field(default_factory=dict, repr=False)

    def spline(self, which: str) -> CubicSpline:
        if which not in self._splines:
            self._splines[which] = CubicSpline(self.grid, getattr(self, which))
        return self._splines[which]

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])


def build_aux_table(profile: RadialProfile, x_max: float = 40.0, n: int = 4096,
                    m1: Optional[float] = None,
                    identity_tol: float = 1e-6) -> AuxTable:
    """Tabulate f1..f5 for a radial kernel profile.

    The oscillatory radial integrals are computed on composite Gauss panels,
    one Bessel period per panel with 16 nodes, blocks of x sharing a grid
    sized for the block's fastest oscillation.  Raises TableRejectedError if
    the Appendix-style identity checks fail.
    """
    if not getattr(profile, "radial", True):
        raise NonRadialProfileError("build_aux_table requires a radial profile")
    psi = _psi_table(profile)
    rho_max = psi.rho[-1]
    x = np.linspace(0.0, x_max, n)
    f1 = np.zeros(n)
    f2 = np.zeros(n)

    gl_x, gl_w = np.polynomial.legendre.leggauss(16)
    block = 256
    for lo in range(0, n, block):
        xb = x[lo:lo + block]
        x_top = max(float(xb.max()), 1.0)
        n_pan = int(np.ceil(rho_max * x_top / (2.0 * np.pi)))
        edges = np.linspace(0.0, rho_max, n_pan + 1)
        half = 0.5 * (edges[1] - edges[0])
        mids = 0.5 * (edges[1:] + edges[:-1])
        rho = (mids[:, None] + half * gl_x[None, :]).ravel()
        w_psi = (half * gl_w[None, :] * np.ones((n_pan, 1))).ravel() * psi(rho)
        z = xb[:, None] * rho[None, :]
        f1[lo:lo + block] = 2.0 * ((jv(2, z) / rho[None, :]) @ w_psi)
        f2[lo:lo + block] = 2.0 * xb * (jv(1, z) @ w_psi) - 2.0 * f1[lo:lo + block]

    f3 = f1 - 1.0
    f4 = f2 - f3
    f5 = f2 - 2.0 * f3
    m2 = kernels.moment_m2(profile)
    if m1 is None:
        m1 = kernels.moment_m1(profile)

    table = AuxTable(grid=x, f1=f1, f2=f2, f3=f3, f4=f4, f5=f5,
                     tail_m2=float(m2), m1=float(m1), kernel_id=profile.label)

    problems = []
    if abs(f1[0]) > 1e-10 or abs(f2[0]) > 1e-10:
        problems.append(f"f1(0)={f1[0]:.2e}, f2(0)={f2[0]:.2e} not zero")
    i2 = integral_identity(table, "f2")
    i3 = integral_identity(table, "f3")
    if abs(i2 - 4.0 * m1) > identity_tol:
        problems.append(f"int f2 = {i2:.9f} vs 4*m1 = {4 * m1:.9f}")
    if abs(i3 + 4.0 * m1) > identity_tol:
        problems.append(f"int f3 = {i3:.9f} vs -4*m1 = {-4 * m1:.9f}")
    if problems:
        raise TableRejectedError("; ".join(problems))
    return table


def integral_identity(table: AuxTable, which: str) -> float:
    """Tail-corrected integral of f2 or f3 over the whole line.

    Both functions are even; the tail beyond x_max uses the m2-asymptotics
    f2 ~ 2 m2/x^2, f3 ~ -m2/x^2.
    """
    if which not in ("f2", "f3"):
        raise ValueError("integral identity applies to f2 or f3")
    base = 2.0 * table.tail_m2 if which == "f2" else -table.tail_m2
    body = table.spline(which).integrate(0.0, table.x_max)
    return float(2.0 * (body + base / table.x_max))


def eval_f(table: AuxTable, which: str, x) -> np.ndarray:
    """Evaluate f_i at x >= 0: spline on the grid, m2-asymptotics beyond."""
    if which not in F_NAMES:
        raise ValueError(f"unknown function {which!r}")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    inside = x <= table.x_max
    if np.any(inside):
        out[inside] = table.spline(which)(x[inside])
    if not np.all(inside):
        xt = x[~inside]
        m2 = table.tail_m2
        tails = {
            "f1": 1.0 - m2 / xt ** 2,
            "f2": 2.0 * m2 / xt ** 2,
            "f3": -m2 / xt ** 2,
            "f4": 3.0 * m2 / xt ** 2,
            "f5": 4.0 * m2 / xt ** 2,
        }
        out[~inside] = tails[which]
    return float(out[0]) if scalar else out


def check_decay(table: AuxTable) -> dict:
    """Report sup over the grid of (1+x^{k+2}) |f^{(k)}| for f2, f3, k=0,1,2.

    Derivatives are centered finite differences on the grid.  Also reports the
    improved-weight suprema (1+x^4)|f| relevant for m2 = 0 kernels.
    """
    x = table.grid
    report = {}
    for name in ("f2", "f3"):
        f = getattr(table, name)
        d1 = np.gradient(f, x)
        d2 = np.gradient(d1, x)
        for k, fk in enumerate((f, d1, d2)):
            weighted = (1.0 + np.abs(x) ** (k + 2)) * np.abs(fk)
            idx = int(np.argmax(weighted))
            report[f"{name}_k{k}"] = {"sup": float(weighted[idx]),
                                      "at_index": idx, "at_x": float(x[idx]),
                                      "finite": bool(np.isfinite(weighted[idx]))}
        improved = (1.0 + x ** 4) * np.abs(f)
        report[f"{name}_improved_weight"] = {"sup": float(improved.max()),
                                             "finite": bool(np.isfinite(improved.max()))}
    return report


def save_table(table: AuxTable, path: str) -> None:
    """Serialize an AuxTable to CSV with a provenance header line."""
    with open(path, "w") as fh:
        fh.write(f"# kernel_id={table.kernel_id} x_max={table.x_max:.17g} "
                 f"n={len(table.grid)} m1={table.m1:.17g} m2={table.tail_m2:.17g}\n")
        fh.write("x,f1,f2,f3,f4,f5\n")
        data = np.column_stack([table.grid, table.f1, table.f2,
                                table.f3, table.f4, table.f5])
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def load_table(path: str) -> AuxTable:
    """Load an AuxTable written by save_table."""
    with open(path) as fh:
        header = fh.readline().lstrip("# ").split()
        meta = dict(item.split("=", 1) for item in header)
        body = fh.read()
    data = np.loadtxt(io.StringIO(body), delimiter=",", skiprows=1)
    return AuxTable(grid=data[:, 0], f1=data[:, 1], f2=data[:, 2],
                    f3=data[:, 3], f4=data[:, 4], f5=data[:, 5],
                    tail_m2=float(meta["m2"]), m1=float(meta["m1"]),
                    kernel_id=meta["kernel_id"])
