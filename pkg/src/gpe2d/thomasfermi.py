"""Thomas-Fermi (kinetic-free) approximation of the two-component ground state.

Dropping the Laplacian leaves a linear system for the two densities inside
the common support.  Its solution is described by two families of circles:
the single-species supports of radius ``r_i = sqrt(2 mu_i)`` around the trap
centres ``x_i``, and shifted circles of radius ``R_i`` around ``y_i`` that
bound the region where both coupled densities stay nonnegative.

Only isotropic unit traps (``m_i * omega_ij**2 == 1``) are handled.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .model import SystemParams

__all__ = [
    "OverlapClass",
    "Classification",
    "TFCoefficients",
    "TFGeometry",
    "SingularCoupling",
    "UnsupportedAnisotropy",
    "NoSolution",
    "tf_coefficients",
    "tf_classify",
    "tf_geometry",
    "tf_density",
    "tf_masses",
    "tf_solve_mu",
    "tf_report",
]

BOUNDARY_BAND = 1e-12


class SingularCoupling(ValueError):
    """det(theta) or one of the alphas vanishes."""


class UnsupportedAnisotropy(ValueError):
    """Trap is not the unit isotropic oscillator."""


class NoSolution(RuntimeError):
    """Normalisation conditions could not be solved for the chemical potentials."""


class OverlapClass(enum.Enum):
    NO_OVERLAP = "NoOverlap"
    PARTIAL_OVERLAP = "PartialOverlap"
    FULL_OVERLAP = "FullOverlap"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Classification:
    kind: OverlapClass
    on_boundary: bool = False

    def __str__(self):
        return f"{self.kind}{' (boundary)' if self.on_boundary else ''}"


@dataclass(frozen=True, eq=False)
class TFCoefficients:
    """Scaled inverse coupling ``w = theta / (2 det theta)`` and the alphas."""

    w: np.ndarray
    alpha: tuple
    det_theta: float

    @property
    def strong_coupling(self) -> bool:
        return self.det_theta < 0


@dataclass
class TFDiagnostics:
    clamped: int = 0


@dataclass(frozen=True, eq=False)
class TFGeometry:
    mu: tuple
    r: tuple
    R_squared: tuple
    y: np.ndarray
    centers: np.ndarray
    coeffs: TFCoefficients
    classification: Classification
    diagnostics: TFDiagnostics = field(default_factory=TFDiagnostics)

    @property
    def R(self) -> tuple:
        """Shifted radii; NaN where ``R_i**2 < 0`` (the circle is empty)."""
        return tuple(math.sqrt(v) if v >= 0 else math.nan for v in self.R_squared)

    @property
    def overlap_class(self) -> OverlapClass:
        return self.classification.kind

    @property
    def strong_coupling(self) -> bool:
        return self.coeffs.strong_coupling


def _require_unit_traps(params: SystemParams):
    k = params.m[:, None] * params.omega**2
    if not np.allclose(k, 1.0, rtol=0, atol=1e-14):
        raise UnsupportedAnisotropy(
            f"Thomas-Fermi module needs m_i * omega_ij^2 = 1, got {k.tolist()}"
        )


def tf_coefficients(theta) -> TFCoefficients:
    theta = np.asarray(theta, dtype=float)
    det = float(theta[0, 0] * theta[1, 1] - theta[0, 1] * theta[1, 0])
    if det == 0.0:
        raise SingularCoupling("det(theta) = 0")
    w = theta / (2.0 * det)
    alpha = (float(w[1, 1] - w[0, 1]), float(w[0, 0] - w[0, 1]))
    for i, a in enumerate(alpha):
        if a == 0.0:
            raise SingularCoupling(f"alpha_{i + 1} = 0")
    w.flags.writeable = False
    return TFCoefficients(w, alpha, det)


def tf_classify(mu, centers) -> Classification:
    """Overlap class of the two support disks of radius sqrt(2 mu_i).

    A squared distance within the boundary band of a threshold is reported
    as the class on the near side (the smaller-distance one) with the
    boundary flag set.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(~(mu > 0)):
        raise ValueError(f"chemical potentials must be positive, got {mu.tolist()}")
    c = np.asarray(centers, dtype=float)
    d2 = float(np.sum((c[0] - c[1]) ** 2))
    r1, r2 = np.sqrt(2.0 * mu)
    lo, hi = (r1 - r2) ** 2, (r1 + r2) ** 2

    def near(t):
        return abs(d2 - t) <= BOUNDARY_BAND * max(1.0, t)

    if near(lo):
        return Classification(OverlapClass.FULL_OVERLAP, True)
    if near(hi):
        return Classification(OverlapClass.PARTIAL_OVERLAP, True)
    if d2 < lo:
        return Classification(OverlapClass.FULL_OVERLAP)
    if d2 < hi:
        return Classification(OverlapClass.PARTIAL_OVERLAP)
    return Classification(OverlapClass.NO_OVERLAP)


def tf_geometry(params: SystemParams, mu) -> TFGeometry:
    _require_unit_traps(params)
    co = tf_coefficients(params.theta)
    w, alpha = co.w, co.alpha
    x = np.asarray(params.centers, dtype=float)
    mu = tuple(float(m) for m in mu)
    delta = x[0] - x[1]
    # increment form
    y = np.array([x[0] + (w[0, 1] / alpha[0]) * delta,
                  x[1] - (w[0, 1] / alpha[1]) * delta])
    # quotient form
    yq = np.array([(w[1, 1] * x[0] - w[0, 1] * x[1]) / (w[1, 1] - w[0, 1]),
                   (w[0, 0] * x[1] - w[0, 1] * x[0]) / (w[0, 0] - w[0, 1])])
    scale = max(1.0, float(np.max(np.abs(x))))
    if np.max(np.abs(y - yq)) > 1e-10 * scale:
        raise ArithmeticError(f"shifted centres disagree between forms: {y} vs {yq}")

    r = tuple(math.sqrt(2.0 * m) for m in mu)
    wjj = (w[1, 1], w[0, 0])
    R2 = []
    for i in range(2):
        j = 1 - i
        a = alpha[i]
        xi2, xj2, yi2 = (float(np.dot(v, v)) for v in (x[i], x[j], y[i]))
        explicit = (2 * wjj[i] * mu[i] - 2 * w[0, 1] * mu[j] + w[0, 1] * xj2 - wjj[i] * xi2) / a + yi2
        compact = (r[i] ** 2 + (2 * w[0, 1] / a) * (mu[i] - mu[j])
                   + (w[0, 1] / a) * (xj2 - yi2) - (wjj[i] / a) * (xi2 - yi2))
        if abs(explicit - compact) > 1e-9 * max(1.0, abs(explicit)):
            raise ArithmeticError(f"R_{i + 1}^2 forms disagree: {explicit} vs {compact}")
        R2.append(float(explicit))
    y.flags.writeable = False
    x.flags.writeable = False
    return TFGeometry(mu, r, tuple(R2), y, x, co, tf_classify(mu, x))


def _density_sq(geom: TFGeometry, theta_diag, component, pts, diag: TFDiagnostics | None):
    """Squared density at ``pts`` (..., 2)."""
    x, y = geom.centers, geom.y
    alpha = geom.coeffs.alpha
    r2 = [geom.r[k] ** 2 for k in range(2)]
    single = [r2[k] - np.sum((pts - x[k]) ** 2, axis=-1) for k in range(2)]
    coupled = [alpha[k] * (geom.R_squared[k] - np.sum((pts - y[k]) ** 2, axis=-1))
               for k in range(2)]
    in_d = [s >= 0 for s in single]
    in_o = in_d[0] & in_d[1] & (coupled[0] >= 0) & (coupled[1] >= 0)
    i = component
    val = np.where(in_o, coupled[i], np.where(in_d[i], single[i] / (2.0 * theta_diag[i]), 0.0))
    neg = val < 0
    if diag is not None and np.any(neg):
        diag.clamped += int(np.count_nonzero(neg))
    return np.where(neg, 0.0, val)


def tf_density(geom: TFGeometry, params: SystemParams, component: int, point):
    """Thomas-Fermi amplitude of ``component`` (0-based) at ``point``.

    ``point`` may be a single ``(x1, x2)`` pair or an array of shape (..., 2).
    Negative radicands (rounding at region edges, or strong coupling) are
    clamped to zero and counted in ``geom.diagnostics.clamped``.
    """
    if component not in (0, 1):
        raise IndexError(f"component must be 0 or 1, got {component}")
    pts = np.asarray(point, dtype=float)
    theta_diag = (params.theta[0, 0], params.theta[1, 1])
    out = np.sqrt(_density_sq(geom, theta_diag, component, pts, geom.diagnostics))
    return float(out) if out.ndim == 0 else out


# -- normalisation ----------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _ray_circle(center, radius_sq, origin, direction):
    """Positive ray parameters where origin + s*direction meets the circle."""
    if not radius_sq > 0:
        return ()
    o = origin - center
    b = float(np.dot(o, direction))
    c = float(np.dot(o, o)) - radius_sq
    disc = b * b - c
    if disc <= 0:
        return ()
    sq = math.sqrt(disc)
    return tuple(s for s in (-b - sq, -b + sq) if s > 0)


def _component_mass(geom: TFGeometry, theta_diag, i: int, tol: float) -> float:
    """Integral of the squared density of component i in polar coordinates about x_i.

    Along each ray the squared density is a quadratic polynomial between the
    crossings with the region boundaries, so fixed Gauss-Legendre is exact per
    segment; the angular integral is adaptive.
    """
    xi = geom.centers[i]
    ri = geom.r[i]
    circles = [(geom.centers[1 - i], geom.r[1 - i] ** 2),
               (geom.y[0], geom.R_squared[0]), (geom.y[1], geom.R_squared[1])]

    def radial(phi):
        d = np.array([math.cos(phi), math.sin(phi)])
        cuts = {0.0, ri}
        for c, rsq in circles:
            cuts.update(s for s in _ray_circle(c, rsq, xi, d) if s < ri)
        cuts = np.array(sorted(cuts))
        a, b = cuts[:-1], cuts[1:]
        half = 0.5 * (b - a)
        s = 0.5 * (a + b)[:, None] + half[:, None] * _GL_NODES[None, :]
        pts = xi + s[..., None] * d
        f = _density_sq(geom, theta_diag, i, pts, None) * s
        return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * f))

    # split the angle at the directions towards the other centres to help quad
    brk = [0.0]
    for c in (geom.centers[1 - i], geom.y[0], geom.y[1]):
        v = c - xi
        if np.dot(v, v) > 0:
            brk.append(math.atan2(v[1], v[0]) % (2 * math.pi))
    brk = sorted(set(brk)) + [2 * math.pi]
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        if b - a <= 0:
            continue
        val, _ = integrate.quad(radial, a, b, epsabs=tol, epsrel=tol, limit=400)
        total += val
    return total


def tf_masses(params: SystemParams, mu, tol: float = 1e-12) -> tuple:
    """Masses of the two Thomas-Fermi densities at chemical potentials ``mu``."""
    geom = tf_geometry(params, mu)
    td = (params.theta[0, 0], params.theta[1, 1])
    return tuple(_component_mass(geom, td, i, tol) for i in range(2))


def _decoupled_mu(params: SystemParams) -> tuple:
    return tuple(math.sqrt(params.N[i] * params.theta[i, i] / math.pi) for i in range(2))


def tf_solve_mu(params: SystemParams, rtol: float = 1e-10, max_iter: int = 60,
                mu_max: float = 1e8) -> tuple:
    """Chemical potentials for which both densities carry mass N_i.

    Uncoupled systems use the closed form ``mu_i = sqrt(N_i theta_ii / pi)``;
    otherwise a damped Newton iteration on the two masses with a
    finite-difference Jacobian is started from that closed form.
    """
    _require_unit_traps(params)
    if not (params.theta[0, 0] > 0 and params.theta[1, 1] > 0):
        raise ValueError("Thomas-Fermi needs positive intra-species couplings")
    mu0 = _decoupled_mu(params)
    if params.theta[0, 1] == 0:
        return mu0
    tf_coefficients(params.theta)  # raises SingularCoupling early
    N = np.asarray(params.N, dtype=float)

    def resid(m):
        return np.asarray(tf_masses(params, m), dtype=float) / N - 1.0

    mu = np.array(mu0)
    F = resid(mu)
    for _ in range(max_iter):
        if np.max(np.abs(F)) <= rtol:
            return tuple(float(m) for m in mu)
        J = np.empty((2, 2))
        for k in range(2):
            h = 1e-6 * mu[k]
            mp, mm = mu.copy(), mu.copy()
            mp[k] += h
            mm[k] -= h
            J[:, k] = (resid(mp) - resid(mm)) / (2 * h)
        try:
            step = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise NoSolution(f"singular mass Jacobian at mu={mu.tolist()}") from exc
        t = 1.0
        norm = np.max(np.abs(F))
        while True:
            trial = mu + t * step
            if np.all(trial > 0) and np.all(trial <= mu_max):
                Ft = resid(trial)
                if np.max(np.abs(Ft)) < norm or t < 1e-3:
                    break
            t *= 0.5
            if t < 1e-8:
                raise NoSolution(f"no admissible step from mu={mu.tolist()}")
        mu, F = trial, Ft
    if np.max(np.abs(F)) <= rtol:
        return tuple(float(m) for m in mu)
    raise NoSolution(f"mass residual {np.max(np.abs(F)):.3e} after {max_iter} iterations")


def tf_report(geom: TFGeometry) -> str:
    lines = []
    for i in range(2):
        lines.append(f"mu{i + 1} = {geom.mu[i]:.17g}")
        lines.append(f"r{i + 1} = {geom.r[i]:.17g}")
        lines.append(f"R{i + 1} = {geom.R[i]:.17g}")
        lines.append(f"R{i + 1}_squared = {geom.R_squared[i]:.17g}")
        lines.append(f"y{i + 1} = {geom.y[i][0]:.17g} {geom.y[i][1]:.17g}")
    lines.append(f"class = {geom.overlap_class}")
    lines.append(f"boundary = {str(geom.classification.on_boundary).lower()}")
    lines.append(f"strong_coupling = {str(geom.strong_coupling).lower()}")
    lines.append(f"clamped = {geom.diagnostics.clamped}")
    return "\n".join(lines) + "\n"
