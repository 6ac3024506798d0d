"""Strong inter-species coupling: kappa sweeps and segregated upper bounds.

``run_kappa_sweep`` follows the ground state along increasing kappa with warm
starts.  ``build_segregated_trial`` produces a pair with (numerically) disjoint
supports; its uncoupled energy bounds every ground energy of the sweep from
above.  ``check_limit_properties`` turns those facts into checks.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis2D, hermite_function_values
from .energy import EnergyModel
from .minimize import (
    LineSearchFailure,
    NonConvergence,
    SolverConfig,
    solve_continued,
    solve_ground,
)
from .model import CoefficientField, SystemParams

__all__ = [
    "SweepRecord",
    "SegregatedTrial",
    "LimitReport",
    "MaskCollapse",
    "PropertyViolation",
    "run_kappa_sweep",
    "kappa_path",
    "build_segregated_trial",
    "check_limit_properties",
    "write_sweep_csv",
    "read_sweep_csv",
]

log = logging.getLogger(__name__)

CSV_HEADER = ["kappa", "energy", "overlap", "weighted_overlap", "mu1", "mu2", "converged"]


class MaskCollapse(ValueError):
    """The cutoff removed almost all of a component's mass."""


class PropertyViolation(AssertionError):
    def __init__(self, failures):
        self.failures = failures
        super().__init__("; ".join(f"({k}) {msg}" for k, msg in failures))


@dataclass(frozen=True)
class SweepRecord:
    kappa: float
    energy: float
    overlap: float
    weighted_overlap: float
    mu: tuple
    converged: bool

    @classmethod
    def from_report(cls, kappa, report, converged=None):
        ov = float(report.overlap_integral)
        return cls(float(kappa), float(report.energy), ov, float(kappa) * ov,
                   tuple(report.chemical_potentials),
                   report.converged if converged is None else converged)


# -- sweep ------------------------------------------------------------------

def kappa_path(k_from: float, k_to: float, per_decade: int = 8) -> list:
    """Intermediate kappas (excluding ``k_from``, including ``k_to``).

    Geometric with ``per_decade`` points per decade; a start at zero first
    moves linearly to ``min(k_to, 1)``.
    """
    if k_to <= k_from:
        raise ValueError("kappa path must increase")
    path = []
    if k_from == 0.0:
        first = min(k_to, 1.0)
        path.append(first)
        k_from = first
    if k_to > k_from:
        n = max(1, math.ceil(per_decade * math.log10(k_to / k_from)))
        ratio = (k_to / k_from) ** (1.0 / n)
        path.extend(k_from * ratio**k for k in range(1, n))
        path.append(k_to)
    return path


def run_kappa_sweep(base_params: SystemParams, kappas, basis: TensorBasis2D,
                    config: SolverConfig | None = None, per_decade: int = 8,
                    keep_fields: bool = False):
    """Ground states for each kappa, each warm-started from the previous one.

    Returns a list of SweepRecord (and the fields per record when
    ``keep_fields``).  A record that fails to converge is flagged and the
    sweep continues from the best available state.
    """
    kappas = [float(k) for k in kappas]
    if not kappas:
        raise ValueError("empty kappa grid")
    if kappas[0] < 0 or any(b <= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be nonnegative and strictly increasing")
    config = config or SolverConfig()
    records, kept = [], []

    params = base_params.with_kappa(kappas[0])
    try:
        fields, report = solve_ground(params, basis, config)
        ok = True
    except NonConvergence as exc:
        fields, report, ok = exc.fields, exc.report, False
    records.append(SweepRecord.from_report(kappas[0], report, ok))
    kept.append(fields)

    for k_prev, k_next in zip(kappas, kappas[1:]):
        ok = True
        current = base_params.with_kappa(k_prev)
        for k in kappa_path(k_prev, k_next, per_decade):
            target = base_params.with_kappa(k)
            try:
                fields, report = solve_continued(fields, current, target, config)
            except NonConvergence as exc:
                fields, report = exc.fields, exc.report
                ok = k != k_next
            except LineSearchFailure as exc:
                log.warning("kappa %g: %s", k, exc)
                ok = False
                report = None
                break
            current = target
        if report is None:
            nan = math.nan
            records.append(SweepRecord(k_next, nan, nan, nan, (nan, nan), False))
        else:
            records.append(SweepRecord.from_report(k_next, report, ok))
        kept.append(fields)
        log.info("kappa=%g energy=%.12g overlap=%.3e", k_next, records[-1].energy,
                 records[-1].overlap)
    return (records, kept) if keep_fields else records


# -- segregated trial -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SegregatedTrial:
    fields: tuple
    energy: float
    max_product_ratio: float
    product_tolerance: float = 1e-8

    @property
    def disjoint(self) -> bool:
        """Whether |phi1 phi2| stays below the tolerance on the quadrature grid."""
        return self.max_product_ratio <= self.product_tolerance


def _ramp(t):
    """C^1 step: 0 for t <= 0, 1 for t >= 1, cubic in between."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _mask_matrix(spec, mask, breaks, panel=0.25, order=10):
    """``M[k, l] = int Hf_k(x) mask(x) Hf_l(x) dx`` by composite Gauss-Legendre."""
    L = spec.L
    extent = (math.sqrt(2.0 * L + 1.0) + 8.0) / spec.beta
    edges = set(np.arange(-extent, extent + panel / 2, panel).tolist())
    edges.update(b for b in breaks if -extent < b < extent)
    edges = np.array(sorted(edges))
    g, gw = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    x = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * g).ravel()
    w = (0.5 * (b - a)[:, None] * gw).ravel()
    h = hermite_function_values(spec, x)
    return (h * (w * mask(x))) @ h.T


def build_segregated_trial(params: SystemParams, basis: TensorBasis2D, split_axis: int = 0,
                           split_coordinate: float = 0.0, width: float = 1.0,
                           config: SolverConfig | None = None, uncoupled=None) -> SegregatedTrial:
    """Masked uncoupled ground states on opposite sides of a split line.

    Component 1 keeps the side of the line holding its trap centre (the
    positive side when both centres coincide), component 2 the other side.
    Each mask rises from 0 at the line to 1 at distance ``width``, so the
    two masks have disjoint supports.  The masked states are projected back
    onto the basis and renormalised; ``energy`` is the uncoupled energy of
    the result.  ``uncoupled`` may pass precomputed kappa = 0 ground fields.
    """
    if split_axis not in (0, 1):
        raise ValueError("split_axis must be 0 or 1")
    if not width > 0:
        raise ValueError("width must be positive")
    free = params.with_kappa(0.0)
    if uncoupled is None:
        uncoupled, _ = solve_ground(free, basis, config)
    s = float(split_coordinate)
    c1, c2 = params.centers[0, split_axis], params.centers[1, split_axis]
    sign1 = 1.0 if c1 >= c2 else -1.0
    spec = basis.spec_x if split_axis == 0 else basis.spec_y
    breaks = (s - width, s, s + width)
    out = []
    for i, sign in enumerate((sign1, -sign1)):
        M = _mask_matrix(spec, lambda x, sg=sign: _ramp(sg * (x - s) / width), breaks)
        phi = uncoupled[i].coeffs
        masked = M @ phi if split_axis == 0 else phi @ M.T
        mass = float(np.sum(masked**2))
        if mass < 1e-3 * params.N[i]:
            raise MaskCollapse(
                f"component {i + 1} keeps mass {mass:.3e} < 1e-3 N after masking"
            )
        out.append(CoefficientField(masked * math.sqrt(params.N[i] / mass), basis, params.N[i]))
    model = EnergyModel(basis, free)
    phis = [f.coeffs for f in out]
    energy = model.breakdown(phis).uncoupled
    p1, p2 = (np.abs(model.samples(p)) for p in phis)
    ratio = float(np.max(p1 * p2) / (np.max(p1) * np.max(p2)))
    return SegregatedTrial(tuple(out), float(energy), ratio)


# -- limit checks -----------------------------------------------------------

@dataclass(frozen=True)
class LimitReport:
    nondecreasing: bool
    below_trial: bool
    overlap_decay: bool
    overlap_exponent: float
    mu_bounded: bool
    mu_bound: tuple
    failures: tuple

    @property
    def ok(self) -> bool:
        return not self.failures


def check_limit_properties(records, trial: SegregatedTrial, N=(1.0, 1.0),
                           raise_on_failure: bool = True) -> LimitReport:
    """Check the strong-coupling limit properties of a sweep.

    (a) energies nondecreasing in kappa (1e-7 slack), (b) every energy at most
    the trial energy + 1e-6, (c) overlap decreasing with a log-log slope of at
    most -0.5 over the top decade (or the last two records when the top
    decade holds only one), (d) chemical potentials finite and below
    twice ``3 * E_trial / N_i``.
    """
    recs = sorted(records, key=lambda r: r.kappa)
    pos = [r.kappa for r in recs if r.kappa > 0]
    if len(recs) < 3 or not pos or max(pos) / min(pos) < 100.0:
        raise ValueError("need at least 3 records spanning two decades of kappa")
    failures = []
    e = np.array([r.energy for r in recs])
    k = np.array([r.kappa for r in recs])
    ov = np.array([r.overlap for r in recs])

    drops = np.nonzero(np.diff(e) < -1e-7)[0]
    a = not len(drops) and bool(np.all(np.isfinite(e)))
    if not a:
        failures.append(("a", "energy decreases at kappa " +
                         ", ".join(f"{k[j + 1]:g}" for j in drops)))

    over = [r.kappa for r in recs if not r.energy <= trial.energy + 1e-6]
    b = not over
    if not b:
        failures.append(("b", f"energy above trial bound {trial.energy:.10g} at kappa {over}"))

    top = (k >= k[-1] / 10.0) & (k > 0) & (ov > 0)
    if np.count_nonzero(top) < 2:
        # sparse grid: fall back to the last two positive records
        top = np.zeros_like(top)
        top[np.nonzero((k > 0) & (ov > 0))[0][-2:]] = True
    slope = math.nan
    if np.count_nonzero(top) >= 2:
        slope = float(np.polyfit(np.log(k[top]), np.log(ov[top]), 1)[0])
    c = bool(np.all(np.diff(ov) <= 0)) and slope <= -0.5
    if not c:
        failures.append(("c", f"overlap not decaying fast enough (slope {slope:.3g})"))

    bound = tuple(2.0 * 3.0 * trial.energy / n for n in N)
    mus = np.array([r.mu for r in recs])
    d = bool(np.all(np.isfinite(mus))) and all(
        float(np.max(mus[:, i])) < bound[i] for i in range(2))
    if not d:
        failures.append(("d", f"chemical potentials exceed {bound}"))

    report = LimitReport(a, b, c, slope, d, bound, tuple(failures))
    if failures and raise_on_failure:
        raise PropertyViolation(failures)
    return report


# -- CSV --------------------------------------------------------------------

def write_sweep_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([f"{r.kappa:.17g}", f"{r.energy:.17g}", f"{r.overlap:.17g}",
                        f"{r.weighted_overlap:.17g}", f"{r.mu[0]:.17g}", f"{r.mu[1]:.17g}",
                        str(r.converged).lower()])


def read_sweep_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    out = []
    for row in rows[1:]:
        k, e, ov, wov, m1, m2, conv = row
        out.append(SweepRecord(float(k), float(e), float(ov), float(wov),
                               (float(m1), float(m2)), conv == "true"))
    return out
