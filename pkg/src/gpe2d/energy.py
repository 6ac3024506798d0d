"""Discrete energy, gradient and chemical potentials in the Hermite basis.

For component i with coefficient matrix Phi_i the truncated energy is

    E_i = sum(lam / m_i * Phi_i**2)
          + rho * int (V_i - ((b1^2 x1)^2 + (b2^2 x2)^2) / (2 m_i)) phi_i^2
          + theta_ii / 2 * int phi_i^4

and the total adds ``theta_12 * int phi_1^2 phi_2^2``.  The first term is the
reference oscillator ``(1/2m)(-Lap + (b1^2 x1)^2 + (b2^2 x2)^2)`` diagonalised
by the basis, the second is the (quadratic) trap mismatch, integrated
exactly through per-axis matrices, and the quartic terms use the tensor
Gauss-Hermite rule on which they are exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis2D
from .model import CoefficientField, SystemParams

__all__ = [
    "EnergyBreakdown",
    "EnergyModel",
    "BasisMismatch",
    "total_energy",
    "gradient",
    "chemical_potentials",
    "overlap_integral",
]


class BasisMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_plus_trap: tuple
    potential_correction: tuple
    quartic: tuple
    coupling: float
    total: float

    @property
    def per_component(self) -> tuple:
        """E_i: everything except the inter-species coupling."""
        return tuple(
            k + p + q
            for k, p, q in zip(self.kinetic_plus_trap, self.potential_correction, self.quartic)
        )

    @property
    def uncoupled(self) -> float:
        """E_infinity: the total without the coupling term."""
        return float(sum(self.per_component))


class EnergyModel:
    """Energy of a two-component state for fixed basis and parameters.

    Works on raw coefficient matrices; ``phis`` is a sequence of ``(L1, L2)``
    arrays, one per component.
    """

    def __init__(self, basis: TensorBasis2D, params: SystemParams):
        self.basis = basis
        self.params = params
        b1, b2 = basis.spec_x.beta, basis.spec_y.beta
        self._hx = basis.node_values_x
        self._hy = basis.node_values_y
        self._hx2 = self._hx**2
        self._hy2 = self._hy**2
        self._w = basis.weights2d
        self.eig = []
        self.pot = []
        for i in range(params.n_components):
            mi = params.m[i]
            self.eig.append(basis.eigenvalues / mi)
            mats = []
            for axis, beta in ((0, b1), (1, b2)):
                c0, c1, c2 = params.potential_coefficients(i, axis)
                c2 = c2 - beta**4 / (2.0 * mi)
                mats.append(basis.potential_matrix(axis, (c0, c1, c2)))
            self.pot.append(tuple(mats))

    def with_params(self, params: SystemParams) -> "EnergyModel":
        """Reuse cached matrices when only rho/theta change."""
        p = self.params
        if (np.array_equal(p.m, params.m) and np.array_equal(p.omega, params.omega)
                and np.array_equal(p.centers, params.centers)):
            new = object.__new__(EnergyModel)
            new.__dict__.update(self.__dict__)
            new.params = params
            return new
        return EnergyModel(self.basis, params)

    # -- building blocks ----------------------------------------------------
    def samples(self, phi):
        return self._hx.T @ phi @ self._hy

    def _pot_apply(self, i, phi):
        ax, ay = self.pot[i]
        return ax @ phi + phi @ ay.T

    def _project(self, nodal):
        """Coefficients ``int nodal * Hf_a Hf_b`` for nodal = f / Gaussian^2."""
        return self._hx @ (self._w * nodal) @ self._hy.T

    # -- energy -------------------------------------------------------------
    def breakdown(self, phis) -> EnergyBreakdown:
        p = self.params
        psi = [self.samples(phi) for phi in phis]
        dens = [s * s for s in psi]
        kin, pot, quart = [], [], []
        for i, phi in enumerate(phis):
            kin.append(float(np.sum(self.eig[i] * phi * phi)))
            pot.append(p.rho * float(np.sum(phi * self._pot_apply(i, phi))))
            quart.append(float(0.5 * p.theta[i, i] * np.sum(self._w * dens[i] * dens[i])))
        coupling = 0.0
        n = len(phis)
        for i in range(n):
            for j in range(i + 1, n):
                coupling += float(p.theta[i, j] * np.sum(self._w * dens[i] * dens[j]))
        total = sum(kin) + sum(pot) + sum(quart) + coupling
        return EnergyBreakdown(tuple(kin), tuple(pot), tuple(quart), coupling, total)

    def energy(self, phis) -> float:
        return self.breakdown(phis).total

    def energy_difference(self, phis, new_phis) -> float:
        """``E(new_phis) - E(phis)`` without cancellation between the two totals."""
        p = self.params
        psi = [self.samples(phi) for phi in phis]
        dens, ddens = [], []
        diff = 0.0
        for i, (phi, new) in enumerate(zip(phis, new_phis)):
            delta, plus = new - phi, new + phi
            diff += float(np.sum(self.eig[i] * delta * plus))
            diff += p.rho * float(np.sum(delta * self._pot_apply(i, plus)))
            dpsi = self.samples(delta)
            dd = dpsi * (2.0 * psi[i] + dpsi)  # new^2 - old^2 at the nodes
            d0 = psi[i] * psi[i]
            diff += 0.5 * p.theta[i, i] * float(np.sum(self._w * dd * (dd + 2.0 * d0)))
            dens.append(d0)
            ddens.append(dd)
        n = len(phis)
        for i in range(n):
            for j in range(i + 1, n):
                if p.theta[i, j]:
                    cross = ddens[i] * (dens[j] + ddens[j]) + dens[i] * ddens[j]
                    diff += p.theta[i, j] * float(np.sum(self._w * cross))
        return diff

    def overlap(self, phis) -> float:
        d1 = self.samples(phis[0]) ** 2
        d2 = self.samples(phis[1]) ** 2
        return float(np.sum(self._w * d1 * d2))

    def chemical_potentials(self, phis) -> tuple:
        """mu_i from N_i mu_i = E_i + theta_ii/2 int phi_i^4 + sum_j theta_ij int phi_i^2 phi_j^2."""
        p = self.params
        psi = [self.samples(phi) for phi in phis]
        dens = [s * s for s in psi]
        mus = []
        for i, phi in enumerate(phis):
            quartic = float(np.sum(self._w * dens[i] * dens[i]))
            e_i = (float(np.sum(self.eig[i] * phi * phi))
                   + p.rho * float(np.sum(phi * self._pot_apply(i, phi)))
                   + 0.5 * p.theta[i, i] * quartic)
            cross = sum(p.theta[i, j] * float(np.sum(self._w * dens[i] * dens[j]))
                        for j in range(len(phis)) if j != i)
            mass = float(np.sum(phi * phi))
            mus.append((e_i + 0.5 * p.theta[i, i] * quartic + cross) / mass)
        return tuple(mus)

    # -- derivatives --------------------------------------------------------
    def gradient(self, phis) -> list[np.ndarray]:
        grads, _ = self.gradient_and_diagonal(phis, diagonal=False)
        return grads

    def gradient_and_diagonal(self, phis, diagonal=True):
        """dE/dPhi_i and, optionally, the diagonal of d2E/dPhi_i^2."""
        p = self.params
        n = len(phis)
        psi = [self.samples(phi) for phi in phis]
        dens = [s * s for s in psi]
        grads, diags = [], []
        for i, phi in enumerate(phis):
            nodal = p.theta[i, i] * dens[i]
            for j in range(n):
                if j != i:
                    nodal = nodal + p.theta[i, j] * dens[j]
            g = 2.0 * self.eig[i] * phi + 2.0 * p.rho * self._pot_apply(i, phi)
            g = g + 2.0 * self._project(nodal * psi[i])
            grads.append(g)
            if diagonal:
                ax, ay = self.pot[i]
                d = 2.0 * self.eig[i] + 2.0 * p.rho * (np.diag(ax)[:, None] + np.diag(ay)[None, :])
                # 3 theta_ii phi_i^2 + theta_ij phi_j^2 against Hf_k^2
                nodal_d = nodal + 2.0 * p.theta[i, i] * dens[i]
                d = d + 2.0 * (self._hx2 @ (self._w * nodal_d) @ self._hy2.T)
                diags.append(d)
        return grads, diags


def _check(fields) -> TensorBasis2D:
    basis = fields[0].basis
    for f in fields[1:]:
        if not basis.matches(f.basis):
            raise BasisMismatch("fields do not share a basis")
    return basis


def _coeffs(fields):
    return [f.coeffs for f in fields]


def total_energy(fields, params: SystemParams) -> EnergyBreakdown:
    return EnergyModel(_check(fields), params).breakdown(_coeffs(fields))


def gradient(fields, params: SystemParams) -> list[np.ndarray]:
    """``dE/dphi`` for each component, as ``(L1, L2)`` arrays."""
    return EnergyModel(_check(fields), params).gradient(_coeffs(fields))


def chemical_potentials(fields, params: SystemParams) -> tuple:
    return EnergyModel(_check(fields), params).chemical_potentials(_coeffs(fields))


def overlap_integral(fields) -> float:
    """Quadrature value of ``int phi_1^2 phi_2^2`` (exact in the basis)."""
    basis = _check(fields)
    w = basis.weights2d
    d = [f.node_samples() ** 2 for f in fields]
    return float(np.sum(w * d[0] * d[1]))
