"""Spectral representation of closed strings X: T -> R^2 and their geometry.

Fourier convention: g_k = int_T g(s) e^{-iks} ds and
g(s) = (2 pi)^{-1} sum_k g_k e^{iks}, so Parseval reads
||g||_{L^2}^2 = (2 pi)^{-1} sum |g_k|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize


class DegenerateParameterizationError(ValueError):
    """|Y'(s)| vanishes (or nearly so) at a sample point."""


@dataclass(frozen=True)
class Contour:
    """Closed curve stored as truncated Fourier coefficients.

    coeffs has shape (2K+1, 2), row j holding the mode k = j - K for the two
    components; reality requires coeffs[-k] = conj(coeffs[k]).
    """

    coeffs: np.ndarray
    K: int
    collocation_count: int = 0

    def __post_init__(self):
        if self.coeffs.shape != (2 * self.K + 1, 2):
            raise ValueError("coeffs must have shape (2K+1, 2)")
        if self.collocation_count == 0:
            object.__setattr__(self, "collocation_count", 4 * self.K + 1)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def mode(self, k: int) -> np.ndarray:
        return self.coeffs[k + self.K]

    def derivative(self, order: int = 1) -> "Contour":
        mult = (1j * self.modes.astype(complex)) ** order
        return replace(self, coeffs=self.coeffs * mult[:, None])

    def values(self, M: Optional[int] = None, shift: float = 0.0) -> np.ndarray:
        """Real values at the M collocation points s_j = 2 pi j / M + shift."""
        M = M or self.collocation_count
        if M < 2 * self.K + 1:
            raise ValueError("collocation grid must resolve the truncation")
        c = self.coeffs
        if shift != 0.0:
            c = c * np.exp(1j * self.modes * shift)[:, None]
        buf = np.zeros((M, 2), dtype=complex)
        k = self.modes
        buf[k % M] = c
        return (M / (2.0 * np.pi)) * np.fft.ifft(buf, axis=0).real

    def evaluate(self, s) -> np.ndarray:
        """Evaluate at arbitrary parameters s (vectorized over s)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        phase = np.exp(1j * s[:, None] * self.modes[None, :])
        vals = (phase @ self.coeffs).real / (2.0 * np.pi)
        return vals

    def is_real(self, tol: float = 1e-10) -> bool:
        flipped = np.conj(self.coeffs[::-1])
        scale = max(1.0, np.abs(self.coeffs).max())
        return bool(np.abs(self.coeffs - flipped).max() <= tol * scale)


def from_values(vals: np.ndarray, K: int) -> Contour:
    """Truncated Fourier coefficients of samples on the uniform M-grid."""
    M = vals.shape[0]
    hat = (2.0 * np.pi / M) * np.fft.fft(vals, axis=0)
    k = np.arange(-K, K + 1)
    return Contour(coeffs=hat[k % M], K=K, collocation_count=M)


def grid(M: int, shift: float = 0.0) -> np.ndarray:
    return 2.0 * np.pi * np.arange(M) / M + shift


@dataclass(frozen=True)
class ElasticityLaw:
    """Generalized stiffness S(p, s) in the force density ds(S Y')."""

    kind: str = "hookean"  # hookean | curvature | linear | custom
    k: float = 1.0
    p0: float = 1.0
    func: Optional[Callable] = None

    def S(self, p, s):
        p = np.asarray(p, dtype=float)
        if self.kind == "hookean":
            return np.full_like(p, self.k)
        if self.kind == "curvature":
            return self.k / p
        if self.kind == "linear":
            return self.k - self.k * self.p0 / p
        if self.kind == "custom":
            return self.func(p, s)
        raise ValueError(f"unknown elasticity kind {self.kind!r}")

    @property
    def is_hookean(self) -> bool:
        return self.kind == "hookean"


HOOKEAN = ElasticityLaw()


@dataclass(frozen=True)
class SecantSample:
    """Secant quantities at (s, tau): A = Y'(s+tau).(Y(s+tau)-Y(s)),
    B the same against the perpendicular, D the chord length."""

    A: float
    B: float
    D: float
    s: float
    tau: float


def perp(v: np.ndarray) -> np.ndarray:
    """Counter-clockwise rotation by pi/2 of (..., 2) vectors."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def secants(contour: Contour, s: float, tau: float) -> SecantSample:
    """A, B, D of the secant from s to s + tau."""
    y0 = contour.evaluate(s)[0]
    y1 = contour.evaluate(s + tau)[0]
    yp1 = contour.derivative().evaluate(s + tau)[0]
    d = y1 - y0
    return SecantSample(A=float(yp1 @ d), B=float(yp1 @ perp(d)),
                        D=float(np.hypot(*d)), s=s, tau=tau)


def sobolev_norm(contour_or_coeffs, gamma: float,
                 homogeneous: bool = True, K: Optional[int] = None) -> float:
    """||X||_{H-dot^gamma} = ((2 pi)^{-1} sum_{k!=0} |k|^{2 gamma} |X_k|^2)^{1/2}.

    The inhomogeneous variant adds the k=0 term with unit weight.  Accepts a
    Contour or a raw (2K+1, 2) coefficient array.
    """
    if isinstance(contour_or_coeffs, Contour):
        coeffs, K = contour_or_coeffs.coeffs, contour_or_coeffs.K
    else:
        coeffs = contour_or_coeffs
        if K is None:
            K = (coeffs.shape[0] - 1) // 2
    k = np.arange(-K, K + 1, dtype=float)
    weights = np.zeros_like(k)
    nz = k != 0
    weights[nz] = np.abs(k[nz]) ** (2.0 * gamma)
    if not homogeneous:
        weights[~nz] = 1.0
    total = np.sum(weights[:, None] * np.abs(coeffs) ** 2)
    return float(np.sqrt(total / (2.0 * np.pi)))


def _torus_distance(tau):
    tau = np.abs(np.mod(tau, 2.0 * np.pi))
    return np.minimum(tau, 2.0 * np.pi - tau)


def well_stretched_lambda(contour: Contour, grid_n: int = 512,
                          refine: bool = True) -> float:
    """min over s1 != s2 of |X(s1)-X(s2)| / d_T(s1, s2).

    Coarse search over all grid pairs, then local derivative-free descent
    around the minimizing pair.  Returns a numerical lower estimate; values
    near zero signal (near-)self-intersection.
    """
    if grid_n < 64:
        raise ValueError("grid must have at least 64 points")
    grid_n = max(grid_n, 2 * contour.K + 1)
    vals = contour.values(grid_n)
    h = 2.0 * np.pi / grid_n
    best = np.inf
    best_pair = (0.0, h)
    for m in range(1, grid_n // 2 + 1):
        chord = np.linalg.norm(np.roll(vals, -m, axis=0) - vals, axis=1)
        ratio = chord / _torus_distance(m * h)
        j = int(np.argmin(ratio))
        if ratio[j] < best:
            best = float(ratio[j])
            best_pair = (j * h, m * h)
    if not refine:
        return best

    def objective(z):
        s1, tau = z
        tau_d = _torus_distance(tau)
        if tau_d < 1e-9:
            return best  # ratio tends to |Y'| >= lambda; ignore the diagonal
        p = contour.evaluate(np.array([s1, s1 + tau]))
        return float(np.linalg.norm(p[1] - p[0]) / tau_d)

    res = minimize(objective, x0=np.array(best_pair), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 400})
    return float(min(best, res.fun))


def derivative_magnitude(contour: Contour, M: Optional[int] = None,
                         shift: float = 0.0) -> np.ndarray:
    dv = contour.derivative().values(M, shift=shift)
    return np.linalg.norm(dv, axis=1)


def elastic_force(contour: Contour, law: ElasticityLaw = HOOKEAN,
                  M: Optional[int] = None, shift: float = 0.0) -> np.ndarray:
    """Force density F = ds(S(|Y'|, s) Y') sampled on the M-grid.

    Hookean reduces to the spectral second derivative; general laws sample
    S Y' at collocation points and differentiate spectrally.
    """
    M = M or contour.collocation_count
    if law.is_hookean:
        return law.k * contour.derivative(2).values(M, shift=shift)
    yp = contour.derivative().values(M, shift=shift)
    p = np.linalg.norm(yp, axis=1)
    if p.min() < 1e-12:
        raise DegenerateParameterizationError("|Y'| vanishes at a sample point")
    s_vals = law.S(p, grid(M, shift))
    tension = s_vals[:, None] * yp
    hat = np.fft.fft(tension, axis=0)
    k = np.fft.fftfreq(M, d=1.0 / M)
    return np.fft.ifft(1j * k[:, None] * hat, axis=0).real


def make_test_contour(kind: str, **params) -> Contour:
    """Factory for circle, ellipse, and seeded H^{2+theta} perturbed circles."""
    if kind == "circle":
        R = params.get("R", 1.0)
        K = params.get("K", 8)
        center = np.asarray(params.get("center", (0.0, 0.0)), dtype=float)
        coeffs = np.zeros((2 * K + 1, 2), dtype=complex)
        coeffs[K] = 2.0 * np.pi * center
        coeffs[K + 1] = np.pi * R * np.array([1.0, -1.0j])
        coeffs[K - 1] = np.conj(coeffs[K + 1])
        return Contour(coeffs=coeffs, K=K)
    if kind == "ellipse":
        a, b = params.get("a", 2.0), params.get("b", 1.0)
        K = params.get("K", 8)
        coeffs = np.zeros((2 * K + 1, 2), dtype=complex)
        coeffs[K + 1] = np.pi * np.array([a, -1.0j * b])
        coeffs[K - 1] = np.conj(coeffs[K + 1])
        return Contour(coeffs=coeffs, K=K)
    if kind == "perturbed_circle":
        theta = params.get("theta", 0.5)
        amp = params.get("amp", 0.1)
        seed = params.get("seed", 7)
        K = params.get("K", 64)
        # extra weight on modes >= boost_from makes the marginal-regularity
        # tail visible at moderate eps without hurting the stretching constant
        boost = params.get("rough_boost", 1.0)
        boost_from = params.get("boost_from", 8)
        decay = 2.5 + theta + 0.05
        rng = np.random.default_rng(seed)
        coeffs = np.zeros((2 * K + 1, 2), dtype=complex)
        coeffs[K + 1] = np.pi * np.array([1.0, -1.0j])
        coeffs[K - 1] = np.conj(coeffs[K + 1])
        for k in range(2, K + 1):
            phases = np.exp(2.0j * np.pi * rng.random(2))
            scale = amp * (boost if k >= boost_from else 1.0)
            c = 2.0 * np.pi * scale * k ** (-decay) * phases
            coeffs[K + k] += c
            coeffs[K - k] += np.conj(c)
        contour = Contour(coeffs=coeffs, K=K)
        if well_stretched_lambda(contour, 256, refine=False) < 1e-6:
            raise ValueError("perturbation produced a (near) self-intersection")
        return contour
    raise ValueError(f"unknown contour kind {kind!r}")


def save_contour(contour: Contour, path: str) -> None:
    """CSV rows (k, Re X1_k, Im X1_k, Re X2_k, Im X2_k)."""
    rows = np.column_stack([
        contour.modes,
        contour.coeffs[:, 0].real, contour.coeffs[:, 0].imag,
        contour.coeffs[:, 1].real, contour.coeffs[:, 1].imag,
    ])
    np.savetxt(path, rows, delimiter=",",
               header="k,ReX1,ImX1,ReX2,ImX2", fmt="%.17g")


def load_contour(path: str) -> Contour:
    rows = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    k = rows[:, 0].astype(int)
    K = int(np.max(np.abs(k)))
    coeffs = np.zeros((2 * K + 1, 2), dtype=complex)
    coeffs[k + K, 0] = rows[:, 1] + 1j * rows[:, 2]
    coeffs[k + K, 1] = rows[:, 3] + 1j * rows[:, 4]
    contour = Contour(coeffs=coeffs, K=K)
    if not contour.is_real(tol=1e-8):
        raise ValueError("contour file violates the reality constraint")
    return contour
