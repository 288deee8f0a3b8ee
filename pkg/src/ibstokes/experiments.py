"""Convergence studies: static and dynamic regularization-error rates.

Each study measures error norms on a geometric grid of regularization
parameters, fits log-log slopes by least squares, and compares them with the
predicted exponents.  Logarithmic corrections are not fitted separately; they
are absorbed into widened slope tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import contour as ct
from . import dynamics as dyn
from . import kernels
from . import stepper as st
from .auxfun import AuxTable
from .contour import Contour, ElasticityLaw, HOOKEAN


class InvalidStudyError(ValueError):
    """Study configuration cannot produce a meaningful fit."""


class StudyAbortError(RuntimeError):
    """A trajectory violated its monitored assumptions mid-study."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class RateReport:
    """Fitted convergence rate for one error norm.

    Attributes
    ----------
    name : str
        Which norm was measured.
    abscissae : ndarray
        Strictly decreasing regularization parameters (or mode counts).
    values : ndarray
        Measured norms, positive.
    slope, intercept, r_squared : float
        Least-squares fit of ln(value) against ln(abscissa).
    predicted : float or None
        Expected exponent, None when no power law is claimed.
    log_corrected : bool
        Whether the prediction carries a log factor folded into tolerance.
    tolerance : float or None
        Allowed |slope - predicted|.
    passed : bool or None
        Fit-versus-prediction verdict (None when predicted is None).
    extras : dict
        Study-specific diagnostics (monotonicity, monitors, raw slopes...).
    """

    name: str
    abscissae: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    predicted: Optional[float] = None
    log_corrected: bool = False
    tolerance: Optional[float] = None
    passed: Optional[bool] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "abscissae": list(map(float, self.abscissae)),
            "values": list(map(float, self.values)),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "predicted": self.predicted,
            "log_corrected": self.log_corrected,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "extras": {k: (v if not isinstance(v, np.ndarray)
                           else list(map(float, v)))
                       for k, v in self.extras.items()},
        }


def rate_fit(points: Sequence) -> tuple:
    """Least-squares slope of ln(value) vs ln(abscissa).

    Returns (slope, intercept, r_squared).  Raises InvalidStudyError for
    fewer than 3 points or nonpositive values.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise InvalidStudyError("rate fit needs at least 3 points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidStudyError("rate fit needs positive abscissae and values")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(res[0]) if res.size else float(np.sum((A @ [slope, intercept] - ly) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(intercept), float(min(1.0, r2))


def _report(name, eps, vals, predicted, tolerance, log_corrected=False,
            extras=None, one_sided=False) -> RateReport:
    """one_sided gates check slope >= predicted - tolerance only; used for
    rates that are upper bounds on the error (faster decay is a pass)."""
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(vals, dtype=float)
    slope, intercept, r2 = rate_fit(np.column_stack([eps, vals]))
    passed = None
    if predicted is not None and tolerance is not None:
        if one_sided:
            passed = bool(slope >= predicted - tolerance)
        else:
            passed = bool(abs(slope - predicted) <= tolerance)
    extras = dict(extras or {})
    extras.setdefault("monotone",
                      bool(np.all(np.diff(vals) <= 1e-12 + 0.02 * vals[:-1])))
    return RateReport(name=name, abscissae=eps, values=vals, slope=slope,
                      intercept=intercept, r_squared=r2, predicted=predicted,
                      log_corrected=log_corrected, tolerance=tolerance,
                      passed=passed, extras=extras)


def default_eps_grid(lam: float, count: int = 6, ratio: float = 2.0 ** -0.5,
                     top_fraction: float = 0.1) -> np.ndarray:
    """Geometric grid of regularization parameters, largest = lam/10."""
    if count < 3:
        raise InvalidStudyError("need at least 3 grid points")
    return top_fraction * lam * ratio ** np.arange(count)


def _grid_l2(values: np.ndarray) -> float:
    """L^2(ds) norm of grid samples by the rectangle rule."""
    M = values.shape[0]
    return float(np.sqrt(2.0 * np.pi / M * np.sum(values ** 2)))


def correction_field(contour: Contour, law: ElasticityLaw, m1: float,
                     eps: float, M: Optional[int] = None) -> np.ndarray:
    """Leading-term correction (m1 eps / pi) (F.Y')/|Y'|^3 Y' on the grid."""
    M = M or contour.collocation_count
    Yp = contour.derivative().values(M)
    F = ct.elastic_force(contour, law, M)
    p2 = np.sum(Yp * Yp, axis=1)
    coef = np.sum(F * Yp, axis=1) / p2 ** 1.5
    return (m1 * eps / np.pi) * coef[:, None] * Yp


def static_error_study(contour: Contour, law: ElasticityLaw, table: AuxTable,
                       eps_list: Optional[Sequence[float]] = None,
                       theta: float = 0.5,
                       n_quad: Optional[int] = None) -> dict:
    """Rates of ||U^eps - U|| in L^2, homogeneous H^1, and the normal part.

    The error field is evaluated directly (no cancellation of two large
    velocities).  Predicted exponents: L^2 -> 1 when the kernel's first
    moment and the tangential force are both active, else 1 + theta with a
    log correction; H^1 -> theta; normal component -> 1 + theta.
    """
    if eps_list is None:
        eps_list = default_eps_grid(ct.well_stretched_lambda(contour))
    eps_list = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    if eps_list.size < 3:
        raise InvalidStudyError("need at least 3 regularization parameters")
    M = contour.collocation_count
    Yp = contour.derivative().values(M)
    normal = dyn.perp(Yp) / np.linalg.norm(Yp, axis=1)[:, None]
    l2, h1, nrm = [], [], []
    for eps in eps_list:
        E = dyn.velocity_error_direct(contour, law, eps, table, n_quad=n_quad)
        l2.append(E.norm(0.0))
        h1.append(E.norm(1.0, homogeneous=True))
        nrm.append(float(np.sqrt(2.0 * np.pi / M *
                                 np.sum(np.sum(E.values * normal, axis=1) ** 2))))
    # the O(eps) term is active only when the predicted correction is a
    # non-negligible part of the measured error at the largest eps
    corr = correction_field(contour, law, table.m1, float(eps_list[0]), M)
    first_order = _grid_l2(corr) > 0.1 * l2[0]
    l2_pred, l2_log = (1.0, False) if first_order else (1.0 + theta, True)
    l2_tol = 0.15 if first_order else 0.25
    # only the active first-order term has a sharp (two-sided) rate; the
    # other exponents are upper bounds, so faster decay still passes
    return {
        "l2": _report("l2", eps_list, l2, l2_pred, l2_tol, l2_log,
                      one_sided=not first_order,
                      extras={"first_order_term_active": bool(first_order)}),
        "h1": _report("h1", eps_list, h1, theta, 0.2, one_sided=True),
        "normal": _report("normal", eps_list, nrm, 1.0 + theta, 0.25,
                          log_corrected=True, one_sided=True),
    }


def leading_term_check(contour: Contour, law: ElasticityLaw, table: AuxTable,
                       eps_list: Optional[Sequence[float]] = None,
                       theta: float = 0.5,
                       n_quad: Optional[int] = None) -> RateReport:
    """Slope of the corrected error ||(U^eps - U) + correction||_{L^2}.

    Removing the predicted first-order term should raise the observed L^2
    rate from ~1 to at least 1 + theta (up to log factors).
    """
    if eps_list is None:
        eps_list = default_eps_grid(ct.well_stretched_lambda(contour))
    eps_list = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    M = contour.collocation_count
    raw, corrected = [], []
    for eps in eps_list:
        E = dyn.velocity_error_direct(contour, law, eps, table, n_quad=n_quad)
        corr = correction_field(contour, law, table.m1, float(eps), M)
        raw.append(E.norm(0.0))
        corrected.append(_grid_l2(E.values + corr))
    report = _report("corrected_l2", eps_list, corrected,
                     1.0 + theta, 0.25, log_corrected=True)
    raw_slope, _, _ = rate_fit(np.column_stack([eps_list, raw]))
    report.extras["raw_slope"] = raw_slope
    report.extras["raw_values"] = np.asarray(raw)
    # acceptance is one-sided: the corrected rate must not fall short
    report.passed = bool(report.slope >= 1.0 + theta - 0.25)
    return report


def _snapshot_errors(traj_ref: st.Trajectory, traj: st.Trajectory,
                     gammas: dict) -> dict:
    """Sup over common snapshots of Sobolev distances between trajectories."""
    n = min(len(traj_ref.contours), len(traj.contours))
    out = {name: 0.0 for name in gammas}
    for i in range(n):
        diff = ct.Contour(coeffs=traj.contours[i].coeffs -
                          traj_ref.contours[i].coeffs,
                          K=traj_ref.contours[i].K)
        for name, (gamma, homogeneous) in gammas.items():
            out[name] = max(out[name],
                            ct.sobolev_norm(diff, gamma,
                                            homogeneous=homogeneous))
    return out


def _check_monitors(traj: st.Trajectory, lam0: float, label: str) -> None:
    if traj.status != "completed":
        raise StudyAbortError(
            f"{label}: trajectory ended with status {traj.status!r} "
            f"at t = {traj.stop_time:g}",
            diagnostics={"status": traj.status, "stop_time": traj.stop_time,
                         "lam": traj.diagnostics["lam"]})
    lam_min = float(traj.diagnostics["lam"].min())
    if lam_min < 0.5 * lam0:
        raise StudyAbortError(
            f"{label}: well-stretched constant fell to {lam_min:g} "
            f"< lambda0/2 = {0.5 * lam0:g}",
            diagnostics={"lam": traj.diagnostics["lam"]})


def dynamic_error_study(contour0: Contour, table: AuxTable,
                        eps_list: Optional[Sequence[float]] = None,
                        T: float = 0.5, theta: float = 0.5,
                        dt: float = 2e-3, stride: int = 25,
                        law: ElasticityLaw = HOOKEAN,
                        n_quad: Optional[int] = None) -> dict:
    """Rates of sup_t ||X^eps - X|| in H^{1/2}, homogeneous H^1 and H^2.

    The exact and regularized problems are evolved with identical stepping;
    the well-stretched constant (>= lambda0/2) and the H^{2+theta} norm are
    monitored along every trajectory and a breach aborts the study.
    """
    lam0 = ct.well_stretched_lambda(contour0)
    if eps_list is None:
        eps_list = default_eps_grid(lam0)
    eps_list = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    if eps_list.size < 3:
        raise InvalidStudyError("need at least 3 regularization parameters")
    base = dict(dt=dt, T=T, scheme="etd2", diagnostics_stride=stride,
                law=law, theta=theta, lambda_floor=0.5 * lam0, n_quad=n_quad)
    ref = st.evolve(contour0, st.EvolveConfig(variant="exact", **base))
    _check_monitors(ref, lam0, "exact")
    gammas = {"h_half": (0.5, False), "h1": (1.0, True), "h2": (2.0, True)}
    errs = {name: [] for name in gammas}
    h2theta_max = float(ref.diagnostics["h_norm"].max())
    for eps in eps_list:
        cfg = st.EvolveConfig(variant="regularized", eps=float(eps), **base)
        traj = st.evolve(contour0, cfg, {"aux": table})
        _check_monitors(traj, lam0, f"regularized eps={eps:g}")
        h2theta_max = max(h2theta_max, float(traj.diagnostics["h_norm"].max()))
        sup = _snapshot_errors(ref, traj, gammas)
        for name in gammas:
            errs[name].append(sup[name])
    low_pred = 1.0 if abs(table.m1) > 1e-8 else 1.0 + theta
    extras = {"h2theta_max": h2theta_max, "lambda0": lam0, "T": T, "dt": dt}
    return {
        "h_half": _report("h_half", eps_list, errs["h_half"], low_pred, 0.3,
                          log_corrected=True, extras=dict(extras)),
        "h1": _report("h1", eps_list, errs["h1"], low_pred, 0.3,
                      log_corrected=True, extras=dict(extras)),
        "h2": _report("h2", eps_list, errs["h2"], theta, 0.3,
                      log_corrected=True, extras=dict(extras)),
    }


def eps_N_study(contour0: Contour, eps: float, N_list: Sequence[int],
                moll: "dyn.MollifiedStokeslet",
                table: Optional[AuxTable] = None,
                T: float = 0.4, dt: float = 2e-3, stride: int = 25,
                theta: float = 0.5,
                n_quad: Optional[int] = None) -> RateReport:
    """Error of the (eps, N)-regularized problem versus the mode count N.

    Measures sup_t ||X^{eps,N} - X|| in homogeneous H^1 (H^2 in extras)
    against the exact trajectory.  The error should plateau once N passes
    the scale where projection error drops below the eps-regularization
    error; when an aux table is supplied, the N = K entry is compared with
    the pure-eps trajectory error.
    """
    lam0 = ct.well_stretched_lambda(contour0)
    N_list = np.asarray(sorted(set(int(n) for n in N_list)), dtype=int)
    if N_list.size < 3:
        raise InvalidStudyError("need at least 3 mode counts")
    if N_list.max() > contour0.K:
        raise InvalidStudyError("N exceeds the contour bandwidth")
    base = dict(dt=dt, T=T, scheme="etd2", diagnostics_stride=stride,
                theta=theta, lambda_floor=0.5 * lam0, n_quad=n_quad)
    ref = st.evolve(contour0, st.EvolveConfig(variant="exact", **base))
    _check_monitors(ref, lam0, "exact")
    gammas = {"h1": (1.0, True), "h2": (2.0, True)}
    h1_errs, h2_errs = [], []
    for N in N_list:
        cfg = st.EvolveConfig(variant="projected", eps=eps, N=int(N), **base)
        traj = st.evolve(contour0, cfg, {"moll": moll})
        _check_monitors(traj, lam0, f"projected N={N}")
        sup = _snapshot_errors(ref, traj, gammas)
        h1_errs.append(sup["h1"])
        h2_errs.append(sup["h2"])
    h1_errs = np.asarray(h1_errs)
    extras = {"h2_values": np.asarray(h2_errs), "eps": eps, "T": T, "dt": dt}
    # plateau: relative change of the H^1 error across the last doubling
    for i in range(N_list.size - 1, 0, -1):
        if 2 * N_list[i - 1] == N_list[i]:
            extras["plateau_change"] = float(
                abs(h1_errs[i] - h1_errs[i - 1]) / h1_errs[i - 1])
            break
    if table is not None:
        cfg = st.EvolveConfig(variant="regularized", eps=eps, **base)
        traj = st.evolve(contour0, cfg, {"aux": table})
        _check_monitors(traj, lam0, "regularized comparison")
        sup = _snapshot_errors(ref, traj, gammas)
        extras["eps_study_h1"] = sup["h1"]
        i_full = int(np.argmax(N_list == contour0.K)) \
            if contour0.K in N_list else None
        if i_full is not None:
            extras["full_N_rel_gap"] = float(
                abs(h1_errs[i_full] - sup["h1"]) / sup["h1"])
    slope, intercept, r2 = rate_fit(
        np.column_stack([N_list.astype(float), np.maximum(h1_errs, 1e-300)]))
    return RateReport(name="eps_N_h1", abscissae=N_list.astype(float),
                      values=h1_errs, slope=slope, intercept=intercept,
                      r_squared=r2, predicted=None, tolerance=None,
                      extras=extras)


def segment_velocity(x, f=(1.0, 1.0)) -> np.ndarray:
    """Closed-form Stokes velocity of a constant force on [-1,1] x {0}.

    With u = x1 - t running over [x1 - 1, x1 + 1] the primitives are
    elementary; the log partial integral stays finite on the segment itself.
    Vectorized over points x of shape (..., 2).
    """
    x = np.asarray(x, dtype=float)
    f1, f2 = float(f[0]), float(f[1])
    x1, x2 = x[..., 0], x[..., 1]

    def primitives(u):
        r2 = u * u + x2 * x2
        log_r2 = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        # x2 -> 0 limits: the arctan terms carry an x2 factor and vanish
        at = np.where(x2 != 0.0,
                      np.arctan(u / np.where(x2 != 0.0, x2, 1.0)), 0.0)
        j_log = u * log_r2 - 2.0 * u + 2.0 * x2 * at
        j_c = x2 * at
        j_b = 0.5 * x2 * log_r2
        return j_log, j_c, j_b

    hi = primitives(x1 + 1.0)
    lo = primitives(x1 - 1.0)
    j_log, j_c, j_b = (h - l for h, l in zip(hi, lo))
    j_a = 2.0 - j_c
    u1 = -0.5 * f1 * j_log + f1 * j_a + f2 * j_b
    u2 = -0.5 * f2 * j_log + f1 * j_b + f2 * j_c
    return np.stack([u1, u2], axis=-1) / (4.0 * np.pi)


def mollified_segment_velocity(profile: kernels.RadialProfile, eps: float,
                               f=(1.0, 1.0), n_r: int = 96,
                               n_theta: int = 96) -> np.ndarray:
    """(varphi_eps * u)(0) for the segment flow, varphi = phi * phi.

    Polar quadrature around the origin; the angular integral is split at
    theta = 0 and pi where the integrand loses smoothness across the
    segment axis.
    """
    varphi = kernels.self_convolve(profile)
    gl_r, gw_r = np.polynomial.legendre.leggauss(n_r)
    gl_t, gw_t = np.polynomial.legendre.leggauss(n_theta)
    R = varphi.support_radius
    r = 0.5 * R * (gl_r + 1.0)
    wr = 0.5 * R * gw_r * r * varphi.eval(r)
    out = np.zeros(2)
    for a, b in ((0.0, np.pi), (np.pi, 2.0 * np.pi)):
        th = 0.5 * (a + b) + 0.5 * (b - a) * gl_t
        wt = 0.5 * (b - a) * gw_t
        pts = -eps * r[:, None, None] * np.stack(
            [np.cos(th), np.sin(th)], axis=-1)[None, :, :]
        vals = segment_velocity(pts, f)
        out += np.einsum("i,j,ijc->c", wr, wt, vals)
    return out


def model_problem_check(profile: kernels.RadialProfile,
                        eps_list: Optional[Sequence[float]] = None,
                        f=(1.0, 1.0)) -> dict:
    """Mollification error of the straight-segment flow at the origin.

    The tangential component of (varphi_eps * u - u)(0) should equal
    -(m1 eps / pi) f1 up to O(eps^2); the normal component should be
    O(eps^2) outright.
    """
    if eps_list is None:
        eps_list = 0.1 * (2.0 ** -0.5) ** np.arange(6)
    eps_list = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    m1 = kernels.moment_m1(profile)
    u0 = segment_velocity(np.zeros(2), f)
    errors = np.array([mollified_segment_velocity(profile, e, f) - u0
                       for e in eps_list])
    tang, norm = np.abs(errors[:, 0]), np.abs(errors[:, 1])
    out = {}
    extras = {"u0": u0, "u0_exact": np.array([f[0] / np.pi,
                                              f[1] / (2.0 * np.pi)]),
              "m1": m1, "signed_tangential": errors[:, 0]}
    if abs(m1) > 1e-8 and abs(f[0]) > 0:
        target = -m1 * f[0] / np.pi
        ratio = errors[-1, 0] / eps_list[-1]  # smallest eps
        rep = _report("tangential", eps_list, tang, 1.0, 0.15,
                      extras=dict(extras))
        rep.extras["coefficient"] = float(ratio)
        rep.extras["coefficient_target"] = float(target)
        rep.extras["coefficient_rel_err"] = float(
            abs(ratio - target) / abs(target))
        rep.passed = bool(rep.passed and
                          rep.extras["coefficient_rel_err"] < 0.05)
        out["tangential"] = rep
    elif tang.max() < 1e-12 * max(1.0, abs(f[0]) + abs(f[1])):
        # identically zero by symmetry; a slope fit would act on roundoff
        rep = RateReport(name="tangential", abscissae=eps_list, values=tang,
                         slope=float("nan"), intercept=float("nan"),
                         r_squared=0.0, predicted=None, tolerance=None,
                         passed=True, extras=dict(extras))
        rep.extras["below_floor"] = True
        out["tangential"] = rep
    else:
        out["tangential"] = _report("tangential", eps_list, tang, 2.0, 0.2,
                                    extras=dict(extras))
    out["normal"] = _report("normal", eps_list, norm, 2.0, 0.2)
    return out
