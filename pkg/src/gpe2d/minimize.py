"""Constrained minimisation of the discrete energy on the mass spheres.

Modified Newton iteration with a diagonal Jacobian: at every iteration the
Lagrange multipliers are set to the current chemical potentials, the
gradient ``g`` and diagonal ``J`` of the Lagrangian

    E(phi; lam) = E(phi) + sum_i lam_i (N_i - |phi_i|^2)

are formed, the step ``d = -g / J`` (with ``|J|`` floored) is backtracked on
``E(phi; lam)`` evaluated at the renormalised trial point.  Parameters are
reached by continuation: first rho from 0 to its target with theta = 0,
then all theta_ij jointly, each stage warm-started from the previous one.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .basis import TensorBasis2D
from .energy import EnergyModel
from .model import CoefficientField, StateReport, SystemParams

__all__ = [
    "SolverConfig",
    "InitialGuess",
    "NonConvergence",
    "LineSearchFailure",
    "CollapsedToGround",
    "solve_ground",
    "solve_excited",
    "solve_continued",
    "newton_step",
    "update_multiplier",
    "continuation_schedule",
    "parity_masks",
    "stationarity_residual",
]

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """Iteration limit reached at the final stage.

    The best available ``fields`` and ``report`` are attached.
    """

    def __init__(self, msg, fields=None, report=None):
        super().__init__(msg)
        self.fields = fields
        self.report = report


class LineSearchFailure(RuntimeError):
    pass


class CollapsedToGround(UserWarning):
    """An excited-state run returned the ground state."""


@dataclass
class SolverConfig:
    max_newton_iters: int = 20000
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    continuation_steps_rho: int = 5
    continuation_steps_theta: int = 20
    diag_floor: float = 1e-12
    stage_tol: float = 1e-5
    max_halvings: int = 6

    def __post_init__(self):
        for f in dc_fields(self):
            v = getattr(self, f.name)
            if not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v!r}")
        if not self.armijo_c < 1:
            raise ValueError("armijo_c must be < 1")
        if not self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must be < 1")


@dataclass(frozen=True)
class InitialGuess:
    """Starting mode ``(l1, l2)`` for each component."""

    mode_indices: tuple = ((0, 0), (0, 0))

    def validate(self, basis: TensorBasis2D):
        L1, L2 = basis.shape
        for l1, l2 in self.mode_indices:
            if not (0 <= l1 < L1 and 0 <= l2 < L2):
                raise ValueError(f"guess mode ({l1}, {l2}) outside basis {basis.shape}")

    def fields(self, basis: TensorBasis2D, params: SystemParams):
        self.validate(basis)
        return tuple(
            CoefficientField.mode(basis, l1, l2, params.N[i])
            for i, (l1, l2) in enumerate(self.mode_indices)
        )


# -- single iteration -------------------------------------------------------

def _normalize(phis, N):
    return [phi * np.sqrt(n / np.sum(phi * phi)) for phi, n in zip(phis, N)]


def _lagrangian_parts(model: EnergyModel, phis, lam):
    grads, diags = model.gradient_and_diagonal(phis)
    g = [gr - 2.0 * l * phi for gr, l, phi in zip(grads, lam, phis)]
    J = [d - 2.0 * l for d, l in zip(diags, lam)]
    return g, J


def _merit_change(model, phis, new, lam):
    """Change of E(phi; lam) between ``phis`` and ``new``, cancellation-free."""
    diff = model.energy_difference(phis, new)
    for l, a, b in zip(lam, phis, new):
        diff -= l * float(np.sum((b - a) * (b + a)))
    return diff


def _step_direction(g, J, floor):
    out = []
    for gi, Ji in zip(g, J):
        s = np.where(Ji < 0, -1.0, 1.0)
        out.append(-gi / (np.maximum(np.abs(Ji), floor) * s))
    return out


def _newton_update(model, phis, lam, config, g=None, J=None, masks=None):
    """One backtracked step; returns (new phis, step length, merit change)."""
    N = model.params.N
    if g is None:
        g, J = _lagrangian_parts(model, phis, lam)
    d = _step_direction(g, J, config.diag_floor)
    if masks is not None:
        d = [di * mi for di, mi in zip(d, masks)]
    slope = sum(float(np.sum(gi * di)) for gi, di in zip(g, d))
    if slope == 0.0:
        return [phi.copy() for phi in phis], 1.0, 0.0
    t = 1.0
    for _ in range(config.max_backtracks):
        trial = _normalize([phi + t * di for phi, di in zip(phis, d)], N)
        change = _merit_change(model, phis, trial, lam)
        if np.isfinite(change) and change <= config.armijo_c * t * slope:
            return trial, t, change
        t *= config.backtrack_factor
    raise LineSearchFailure(
        f"no acceptable step after {config.max_backtracks} backtracks (slope {slope:.3e})"
    )


def update_multiplier(fields, params: SystemParams) -> tuple:
    """Lagrange multipliers set to the chemical potentials of ``fields``."""
    model = EnergyModel(fields[0].basis, params)
    return model.chemical_potentials([f.coeffs for f in fields])


def newton_step(fields, params: SystemParams, lam, config: SolverConfig | None = None):
    """One modified-Newton step at fixed multipliers ``lam``.

    Returns ``(new_fields, accepted_step_size)``.
    """
    config = config or SolverConfig()
    model = EnergyModel(fields[0].basis, params)
    new, t, _ = _newton_update(model, [f.coeffs for f in fields], lam, config)
    return tuple(f.with_coeffs(c) for f, c in zip(fields, new)), t


def stationarity_residual(fields, params: SystemParams) -> list[np.ndarray]:
    """Half the Lagrangian gradient with lam = mu, per component."""
    model = EnergyModel(fields[0].basis, params)
    phis = [f.coeffs for f in fields]
    mus = model.chemical_potentials(phis)
    grads = model.gradient(phis)
    return [0.5 * g - mu * phi for g, mu, phi in zip(grads, mus, phis)]


# -- iteration to a stationary point ----------------------------------------

def _iterate(model: EnergyModel, phis, tol, config: SolverConfig, masks=None):
    """Newton iterations until the projected gradient norm is <= tol.

    Returns (phis, residual, iterations, converged).
    """
    phis = _normalize(phis, model.params.N)
    res = np.inf
    for it in range(config.max_newton_iters + 1):
        lam = model.chemical_potentials(phis)
        g, J = _lagrangian_parts(model, phis, lam)
        if masks is not None:
            g = [gi * mi for gi, mi in zip(g, masks)]
        res = float(np.sqrt(sum(np.sum(gi * gi) for gi in g)))
        if res <= tol:
            return phis, res, it, True
        if it == config.max_newton_iters:
            break
        phis, _, _ = _newton_update(model, phis, lam, config, g, J, masks)
    return phis, res, config.max_newton_iters, False


# -- continuation -----------------------------------------------------------

def continuation_schedule(params_target: SystemParams, config: SolverConfig | None = None,
                          start: SystemParams | None = None) -> list[SystemParams]:
    """Ordered parameter stages from rho = theta = 0 to ``params_target``.

    Stage one ramps rho with theta = 0, stage two ramps every theta_ij by a
    common factor s in (0, 1].  ``start`` is accepted for symmetry with
    warm-started sweeps but the default starts from the linear oscillator.
    """
    config = config or SolverConfig()
    theta = np.asarray(params_target.theta)
    rho_target = params_target.rho
    zero = np.zeros_like(theta)
    stages = []
    n_rho = config.continuation_steps_rho
    for k in range(1, n_rho + 1):
        stages.append(params_target.replace(rho=rho_target * k / n_rho, theta=zero))
    if np.any(theta != 0):
        n_th = config.continuation_steps_theta
        for k in range(1, n_th + 1):
            stages.append(params_target.replace(rho=rho_target, theta=theta * (k / n_th)))
    return stages


def _blend(a: SystemParams, b: SystemParams, frac: float) -> SystemParams:
    if frac >= 1.0:
        return b
    return b.replace(
        rho=a.rho + frac * (b.rho - a.rho),
        theta=np.asarray(a.theta) + frac * (np.asarray(b.theta) - np.asarray(a.theta)),
    )


def _follow(model: EnergyModel, phis, start: SystemParams, path, config: SolverConfig,
            final_tol: float, masks=None):
    """Walk ``path`` of parameters, halving increments on line-search failure."""
    current = start
    total_iters = 0
    res, converged = np.inf, False
    for k, target in enumerate(path):
        tol = final_tol if k == len(path) - 1 else config.stage_tol
        halvings = 0
        frac = 1.0
        while True:
            trial = _blend(current, target, frac)
            m = model.with_params(trial)
            try:
                new, res, its, converged = _iterate(m, phis, tol if frac >= 1.0 else config.stage_tol,
                                                    config, masks)
            except LineSearchFailure:
                halvings += 1
                if halvings > config.max_halvings:
                    raise
                frac *= 0.5
                log.debug("line search failed; halving increment to %g", frac)
                continue
            total_iters += its
            phis, current = new, trial
            if frac >= 1.0:
                break
            frac = 1.0
        log.debug("stage %d rho=%g kappa=%g res=%.2e its=%d", k, target.rho,
                  target.kappa, res, its)
    return phis, res, total_iters, converged, len(path)


def _fix_sign(model: EnergyModel, phis):
    out = []
    for phi in phis:
        s = model.samples(phi)
        k = np.unravel_index(np.argmax(np.abs(s)), s.shape)
        out.append(-phi if s[k] < 0 else phi)
    return out


def _report(model: EnergyModel, phis, res, iters, converged, stages) -> StateReport:
    br = model.breakdown(phis)
    return StateReport(
        energy=float(br.total),
        energies_per_component=tuple(float(e) for e in br.per_component),
        chemical_potentials=tuple(float(m) for m in model.chemical_potentials(phis)),
        overlap_integral=model.overlap(phis),
        residual_norm=res,
        iterations=iters,
        converged=converged,
        stages=stages,
    )


def _finish(model, basis, params, phis, res, iters, converged, stages):
    phis = _fix_sign(model, phis)
    fields = tuple(CoefficientField(phi, basis, params.N[i]) for i, phi in enumerate(phis))
    report = _report(model, phis, res, iters, converged, stages)
    if not converged:
        raise NonConvergence(
            f"residual {res:.3e} after {iters} iterations", fields=fields, report=report
        )
    return fields, report


def parity_masks(params: SystemParams, basis: TensorBasis2D, guess: InitialGuess):
    """0/1 masks keeping the parity sector of ``guess`` along symmetric axes.

    An axis is symmetric when every trap is centred at zero on it; the
    coupled equations then map each parity sector to itself, so coefficients
    of the other sector only ever hold rounding noise.  Returns None when no
    axis is symmetric.
    """
    axes = [j for j in range(2) if np.all(params.centers[:, j] == 0.0)]
    if not axes:
        return None
    L1, L2 = basis.shape
    idx = (np.arange(L1)[:, None], np.arange(L2)[None, :])
    masks = []
    for mode in guess.mode_indices:
        keep = np.ones(basis.shape, dtype=bool)
        for j in axes:
            keep &= (idx[j] % 2) == (mode[j] % 2)
        masks.append(keep.astype(float))
    return masks


def _run(params, basis, config, guess, masks=None):
    config = config or SolverConfig()
    basis.check()
    start_fields = guess.fields(basis, params)
    start = params.replace(rho=0.0, theta=np.zeros((2, 2)))
    model = EnergyModel(basis, start)
    path = continuation_schedule(params, config)
    phis, res, iters, converged, stages = _follow(
        model, [f.coeffs for f in start_fields], start, path, config, config.grad_tol, masks
    )
    return _finish(model.with_params(params), basis, params, phis, res, iters, converged, stages)


def solve_ground(params: SystemParams, basis: TensorBasis2D, config: SolverConfig | None = None):
    """Ground state by continuation from the oscillator ground state.

    Returns ``(fields, report)``; raises NonConvergence (with the partial
    result attached) when the final stage does not reach ``grad_tol``.
    """
    return _run(params, basis, config, InitialGuess())


def solve_excited(params: SystemParams, basis: TensorBasis2D, config: SolverConfig | None = None,
                  guess: InitialGuess = InitialGuess(((1, 0), (0, 0))),
                  ground_energy: float | None = None, preserve_parity: bool = True):
    """Critical point reached from the oscillator eigenstates in ``guess``.

    With ``preserve_parity`` the iteration stays in the parity sector of the
    guess along every axis on which all traps are centred (see
    ``parity_masks``); otherwise rounding noise in the other sector can grow
    and drag the run down to the ground state.  With ``ground_energy`` given,
    a result that does not lie above it emits a CollapsedToGround warning.
    """
    config = config or SolverConfig()
    masks = parity_masks(params, basis, guess) if preserve_parity else None
    fields, report = _run(params, basis, config, guess, masks)
    if ground_energy is not None and report.energy <= ground_energy + 1e-8 * max(1.0, abs(ground_energy)):
        warnings.warn(
            f"excited run collapsed to the ground state (E={report.energy:.10g})",
            CollapsedToGround, stacklevel=2,
        )
    return fields, report


def solve_continued(fields, params_from: SystemParams, params_to: SystemParams,
                    config: SolverConfig | None = None, steps: int = 1):
    """Warm-started solve: ramp linearly from ``params_from`` to ``params_to``."""
    config = config or SolverConfig()
    basis = fields[0].basis
    model = EnergyModel(basis, params_from)
    path = [_blend(params_from, params_to, k / steps) for k in range(1, steps + 1)]
    phis, res, iters, converged, stages = _follow(
        model, [f.coeffs for f in fields], params_from, path, config, config.grad_tol
    )
    return _finish(model.with_params(params_to), basis, params_to, phis, res, iters,
                   converged, stages)
