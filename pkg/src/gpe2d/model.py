"""System parameters and coefficient-space fields."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisSpec, TensorBasis2D

__all__ = [
    "SystemParams",
    "CoefficientField",
    "StateReport",
    "DegenerateState",
    "potential_value",
    "synthesize_on_grid",
    "normalize",
    "write_coefficients",
    "read_coefficients",
]


class DegenerateState(ValueError):
    """A field with no mass cannot be normalized."""


def _as_pair(value, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(2, float(arr))
    if arr.shape != (2,):
        raise ValueError(f"{name} must have two entries, got shape {arr.shape}")
    return arr


def _as_matrix(value, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((2, 2), float(arr))
    if arr.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Physical parameters of the two-component system (hbar = 1).

    ``omega[i, j]`` and ``centers[i, j]`` are the trap frequency and center of
    component ``i`` along axis ``j``.  ``theta`` is symmetric; ``theta[0, 1]``
    is the inter-species coupling (kappa).
    """

    m: np.ndarray = field(default_factory=lambda: np.ones(2))
    theta: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    omega: np.ndarray = field(default_factory=lambda: np.ones((2, 2)))
    centers: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    N: np.ndarray = field(default_factory=lambda: np.ones(2))
    rho: float = 1.0

    def __post_init__(self):
        m = _as_pair(self.m, "m")
        N = _as_pair(self.N, "N")
        theta = _as_matrix(self.theta, "theta")
        omega = _as_matrix(self.omega, "omega")
        centers = _as_matrix(self.centers, "centers")
        if theta[0, 1] != theta[1, 0]:
            raise ValueError("theta must be symmetric (theta12 == theta21)")
        if np.any(theta < 0) or not np.all(np.isfinite(theta)):
            raise ValueError("theta entries must be finite and nonnegative")
        if np.any(omega <= 0) or not np.all(np.isfinite(omega)):
            raise ValueError("omega entries must be positive")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise ValueError("m entries must be positive")
        if np.any(N <= 0) or not np.all(np.isfinite(N)):
            raise ValueError("N entries must be positive")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        if not 0.0 <= float(self.rho) <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        for name, arr in (("m", m), ("N", N), ("theta", theta),
                          ("omega", omega), ("centers", centers)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def kappa(self) -> float:
        return float(self.theta[0, 1])

    @property
    def n_components(self) -> int:
        return len(self.m)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def with_kappa(self, kappa: float) -> "SystemParams":
        theta = np.array(self.theta)
        theta[0, 1] = theta[1, 0] = kappa
        return self.replace(theta=theta)

    def potential_coefficients(self, component: int, axis: int) -> tuple[float, float, float]:
        """``(c0, c1, c2)`` with V_i restricted to one axis = c0 + c1 x + c2 x^2."""
        k = 0.5 * self.m[component] * self.omega[component, axis] ** 2
        c = self.centers[component, axis]
        return (k * c * c, -2.0 * k * c, k)

    def to_dict(self) -> dict:
        return {
            "m": self.m.tolist(), "theta": self.theta.tolist(), "omega": self.omega.tolist(),
            "centers": self.centers.tolist(), "N": self.N.tolist(), "rho": self.rho,
        }

    def __repr__(self):
        return f"SystemParams({self.to_dict()})"


def potential_value(params: SystemParams, component: int, point) -> float:
    """Harmonic trap V_i at ``point``; ``component`` is 0-based."""
    if component not in (0, 1):
        raise IndexError(f"component must be 0 or 1, got {component}")
    p = np.asarray(point, dtype=float)
    d = p - params.centers[component]
    w2 = params.omega[component] ** 2
    return float(0.5 * params.m[component] * np.sum(w2 * d * d))


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Hermite coefficients of one component, shape ``(L1, L2)``."""

    coeffs: np.ndarray
    basis: TensorBasis2D
    target_mass: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c.reshape(self.basis.shape)
        if c.shape != self.basis.shape:
            raise ValueError(f"coefficient shape {c.shape} != basis shape {self.basis.shape}")
        if not self.target_mass > 0:
            raise ValueError("target_mass must be positive")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "target_mass", float(self.target_mass))

    @classmethod
    def mode(cls, basis: TensorBasis2D, l1: int, l2: int, target_mass: float = 1.0):
        """Field ``sqrt(N) * Hf_{l1, l2}``."""
        L1, L2 = basis.shape
        if not (0 <= l1 < L1 and 0 <= l2 < L2):
            raise ValueError(f"mode ({l1}, {l2}) outside basis {basis.shape}")
        c = np.zeros(basis.shape)
        c[l1, l2] = np.sqrt(target_mass)
        return cls(c, basis, target_mass)

    @property
    def mass(self) -> float:
        return float(np.sum(self.coeffs**2))

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.ravel()

    def with_coeffs(self, coeffs) -> "CoefficientField":
        return CoefficientField(coeffs, self.basis, self.target_mass)

    def node_samples(self) -> np.ndarray:
        """Field values on the quartic quadrature grid, shape (n1, n2)."""
        b = self.basis
        return b.node_values_x.T @ self.coeffs @ b.node_values_y


def normalize(field: CoefficientField) -> CoefficientField:
    """Rescale so that the sum of squared coefficients equals the target mass."""
    mass = field.mass
    if not mass > 0:
        raise DegenerateState("cannot normalize an all-zero field")
    return field.with_coeffs(field.coeffs * np.sqrt(field.target_mass / mass))


def synthesize_on_grid(field: CoefficientField, x1, x2) -> np.ndarray:
    """Evaluate the field on the lattice ``x1 x x2``.

    Returns an array of shape ``(len(x2), len(x1))``: row = fixed x2, matching
    the density grid file layout.
    """
    hx, hy = field.basis.values(x1, x2)
    return (hx.T @ field.coeffs @ hy).T


@dataclass
class StateReport:
    energy: float
    energies_per_component: tuple
    chemical_potentials: tuple
    overlap_integral: float
    residual_norm: float
    iterations: int
    converged: bool
    stages: int = 0

    def to_dict(self) -> dict:
        return {
            "energy": float(self.energy),
            "energies_per_component": [float(e) for e in self.energies_per_component],
            "chemical_potentials": [float(mu) for mu in self.chemical_potentials],
            "overlap_integral": float(self.overlap_integral),
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "stages": int(self.stages),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateReport":
        return cls(
            energy=d["energy"],
            energies_per_component=tuple(d["energies_per_component"]),
            chemical_potentials=tuple(d["chemical_potentials"]),
            overlap_integral=d["overlap_integral"],
            residual_norm=d["residual_norm"],
            iterations=d["iterations"],
            converged=d["converged"],
            stages=d.get("stages", 0),
        )


_COEFF_MAGIC = "gpe2d-coeffs v1"


def write_coefficients(field: CoefficientField, path) -> None:
    b = field.basis
    L1, L2 = b.shape
    lines = [
        f"{_COEFF_MAGIC} L1={L1} L2={L2} beta1={b.spec_x.beta!r} "
        f"beta2={b.spec_y.beta!r} N={field.target_mass!r}"
    ]
    for l1 in range(L1):
        for l2 in range(L2):
            lines.append(f"{l1} {l2} {field.coeffs[l1, l2]:.16e}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_coefficients(path, basis: TensorBasis2D | None = None) -> CoefficientField:
    """Read a coefficient file; builds a basis from the header when not given."""
    text = Path(path).read_text().splitlines()
    header = text[0]
    if not header.startswith(_COEFF_MAGIC):
        raise ValueError(f"{path}: not a gpe2d coefficient file")
    meta = dict(tok.split("=", 1) for tok in header[len(_COEFF_MAGIC):].split())
    L1, L2 = int(meta["L1"]), int(meta["L2"])
    beta1, beta2 = float(meta["beta1"]), float(meta["beta2"])
    if basis is None:
        basis = TensorBasis2D(BasisSpec(L1, beta1), BasisSpec(L2, beta2))
    elif basis.shape != (L1, L2) or (basis.spec_x.beta, basis.spec_y.beta) != (beta1, beta2):
        raise ValueError(f"{path}: header does not match the supplied basis")
    coeffs = np.zeros((L1, L2))
    seen = 0
    for line in text[1:]:
        if not line.strip():
            continue
        a, b, v = line.split()
        coeffs[int(a), int(b)] = float(v)
        seen += 1
    if seen != L1 * L2:
        raise ValueError(f"{path}: expected {L1 * L2} entries, found {seen}")
    return CoefficientField(coeffs, basis, float(meta["N"]))
