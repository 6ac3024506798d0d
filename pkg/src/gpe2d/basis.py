"""Hermite functions and Gauss-Hermite quadrature.

The 1D Hermite functions are

    Hf_l(x) = H_l(x) exp(-beta^2 x^2 / 2),

with H_l orthonormal polynomials for the weight exp(-beta^2 x^2).  They are
eigenfunctions of ``0.5 * (-d^2/dx^2 + (beta^2 x)^2)`` with eigenvalue
``beta^2 (l + 1/2)``.

Two quadrature rules are built per axis:

* the *quartic* rule, ``2L - 1`` nodes for the weight ``exp(-2 beta^2 x^2)``.
  Any product of four Hermite functions of degree ``< L`` is integrated
  exactly by it.
* the *quadratic* rule, ``L + 1`` nodes for the weight ``exp(-beta^2 x^2)``.
  Products of two Hermite functions times a polynomial of degree ``<= 2``
  (the harmonic potentials) are integrated exactly by it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "BasisSpec",
    "QuadratureRule",
    "TensorBasis2D",
    "DegenerateBasis",
    "QuadratureFailure",
    "hermite_eigenvalue",
    "hermite_function_values",
    "hermite_polynomial_values",
    "gauss_hermite_rule",
    "quadratic_rule",
    "gaussian_moment",
    "check_exactness",
]

# log-magnitude below which Hermite function values are flushed to zero
_LOG_UNDERFLOW = -700.0
_RESCALE = 1e150


class DegenerateBasis(ValueError):
    """The basis is too small or its quadrature fails the exactness check."""


class QuadratureFailure(RuntimeError):
    """Node computation did not converge."""


@dataclass(frozen=True)
class BasisSpec:
    L: int
    beta: float = 1.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_nodes(self) -> int:
        return 2 * self.L - 1


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule for ``int f(x) exp(-weight_exponent * x^2) dx``.

    ``scaled_weights`` are ``weights * exp(weight_exponent * nodes**2)``; they
    integrate plain functions and never underflow.
    """

    nodes: np.ndarray
    weights: np.ndarray
    weight_exponent: float
    scaled_weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> float:
        """Apply the rule to samples of the polynomial part at the nodes."""
        return float(np.dot(self.weights, values))


def hermite_eigenvalue(l: int, beta: float = 1.0) -> float:
    """Eigenvalue ``beta^2 (l + 1/2)`` of the reference harmonic operator."""
    return beta**2 * (l + 0.5)


def hermite_polynomial_values(spec: BasisSpec, points) -> np.ndarray:
    """Orthonormal polynomials H_l (weight exp(-beta^2 x^2)), shape (L, npts).

    No exponential factor; only use at moderate ``|beta x|``.
    """
    t = spec.beta * np.atleast_1d(np.asarray(points, dtype=float))
    out = np.empty((spec.L, t.size))
    out[0] = np.sqrt(spec.beta) * np.pi**-0.25
    if spec.L > 1:
        out[1] = np.sqrt(2.0) * t * out[0]
    for l in range(2, spec.L):
        out[l] = np.sqrt(2.0 / l) * t * out[l - 1] - np.sqrt((l - 1) / l) * out[l - 2]
    return out


def _hermite_functions_std(n: int, t: np.ndarray) -> np.ndarray:
    """Hermite functions for beta = 1, shape (n, len(t)).

    Three-term recurrence carried with a per-point log scale so that neither
    the polynomial nor the Gaussian factor over/underflows.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((n, t.size))
    logscale = -0.5 * t * t
    prev = np.zeros_like(t)
    cur = np.full_like(t, np.pi**-0.25)

    def emit(l, vals):
        with np.errstate(divide="ignore"):
            logmag = np.log(np.abs(vals)) + logscale
        keep = logmag >= _LOG_UNDERFLOW
        out[l, keep] = vals[keep] * np.exp(logscale[keep])

    emit(0, cur)
    for l in range(1, n):
        nxt = np.sqrt(2.0 / l) * t * cur - np.sqrt((l - 1) / l) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            prev[big] /= _RESCALE
            cur[big] /= _RESCALE
            logscale[big] += np.log(_RESCALE)
        emit(l, cur)
    return out


def hermite_function_values(spec: BasisSpec, points) -> np.ndarray:
    """Values of the Hermite functions Hf_0 .. Hf_{L-1}; shape (L, npts).

    Far-field values whose magnitude is below exp(-700) are returned as 0.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    return np.sqrt(spec.beta) * _hermite_functions_std(spec.L, spec.beta * points)


def _standard_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and scaled weights of the n-point rule for weight exp(-t^2).

    Golub-Welsch eigenvalues of the Jacobi matrix, one Newton polish on the
    orthonormal polynomial, weights from the Christoffel function.
    """
    if n == 1:
        return np.zeros(1), np.array([np.sqrt(np.pi)])
    offdiag = np.sqrt(np.arange(1, n) / 2.0)
    try:
        t = eigh_tridiagonal(np.zeros(n), offdiag, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise QuadratureFailure(f"tridiagonal eigensolve failed for n={n}") from exc
    if not np.all(np.isfinite(t)):
        raise QuadratureFailure(f"non-finite nodes for n={n}")

    # Newton polish: p_n / p_n' with p_n' = sqrt(2 n) p_{n-1}
    h = _hermite_functions_std(n + 1, t)
    t = t - h[n] / (np.sqrt(2.0 * n) * h[n - 1])
    t = 0.5 * (t - t[::-1])  # exact symmetry

    h = _hermite_functions_std(n, t)
    scaled = 1.0 / np.sum(h * h, axis=0)
    scaled = 0.5 * (scaled + scaled[::-1])
    return t, scaled


def _scaled_rule(n: int, a: float) -> QuadratureRule:
    """n-point rule for weight exp(-a x^2)."""
    t, scaled = _standard_rule(n)
    s = np.sqrt(a)
    x = t / s
    scaled = scaled / s
    with np.errstate(under="ignore"):
        w = scaled * np.exp(-t * t)
    return QuadratureRule(nodes=x, weights=w, weight_exponent=a, scaled_weights=scaled)


def gauss_hermite_rule(spec: BasisSpec) -> QuadratureRule:
    """The ``2L - 1`` node rule for the weight exp(-2 beta^2 x^2)."""
    return _scaled_rule(spec.n_nodes, 2.0 * spec.beta**2)


def quadratic_rule(spec: BasisSpec) -> QuadratureRule:
    """The ``L + 1`` node rule for the weight exp(-beta^2 x^2)."""
    return _scaled_rule(spec.L + 1, spec.beta**2)


def gaussian_moment(p: int, a: float) -> float:
    """``int x^p exp(-a x^2) dx`` over the real line."""
    from scipy.special import gamma

    if p % 2:
        return 0.0
    return gamma((p + 1) / 2.0) / a ** ((p + 1) / 2.0)


def check_exactness(rule: QuadratureRule, max_degree: int, rtol: float = 1e-9) -> float:
    """Worst relative moment error over even degrees ``<= max_degree``.

    Moments are compared in log space, so large rules do not overflow.
    Raises DegenerateBasis when the error exceeds ``rtol``.
    """
    from scipy.special import gammaln, logsumexp

    a = rule.weight_exponent
    x = rule.nodes[rule.nodes != 0.0]
    logw = np.log(rule.scaled_weights[rule.nodes != 0.0]) - a * x * x
    worst = 0.0
    for p in range(0, max_degree + 1, 2):
        log_exact = gammaln((p + 1) / 2.0) - (p + 1) / 2.0 * np.log(a)
        if p == 0:
            approx = np.sum(rule.weights) / np.exp(log_exact)
        else:
            approx = np.exp(logsumexp(logw + p * np.log(np.abs(x))) - log_exact)
        worst = max(worst, abs(approx - 1.0))
    if not worst <= rtol:
        raise DegenerateBasis(
            f"quadrature with {len(rule)} nodes misses moments up to degree "
            f"{max_degree} (rel. err {worst:.2e})"
        )
    return worst


@dataclass(frozen=True, eq=False)
class TensorBasis2D:
    """Tensor-product Hermite basis with cached node tables.

    Coefficient arrays have shape ``(L1, L2)``; index ``[l1, l2]`` multiplies
    ``Hf_{l1}(x1) Hf_{l2}(x2)``.  Flattened files use row-major order.
    """

    spec_x: BasisSpec
    spec_y: BasisSpec
    rule_x: QuadratureRule = field(init=False)
    rule_y: QuadratureRule = field(init=False)
    node_values_x: np.ndarray = field(init=False)
    node_values_y: np.ndarray = field(init=False)

    def __post_init__(self):
        for name, spec in (("rule_x", self.spec_x), ("rule_y", self.spec_y)):
            object.__setattr__(self, name, gauss_hermite_rule(spec))
        object.__setattr__(
            self, "node_values_x", hermite_function_values(self.spec_x, self.rule_x.nodes)
        )
        object.__setattr__(
            self, "node_values_y", hermite_function_values(self.spec_y, self.rule_y.nodes)
        )

    @classmethod
    def build(cls, L1: int, L2: int | None = None, beta1: float = 1.0,
              beta2: float | None = None) -> "TensorBasis2D":
        L2 = L1 if L2 is None else L2
        beta2 = beta1 if beta2 is None else beta2
        return cls(BasisSpec(L1, beta1), BasisSpec(L2, beta2))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec_x.L, self.spec_y.L)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        lx = hermite_eigenvalue(np.arange(self.spec_x.L), self.spec_x.beta)
        ly = hermite_eigenvalue(np.arange(self.spec_y.L), self.spec_y.beta)
        return lx[:, None] + ly[None, :]

    @cached_property
    def weights2d(self) -> np.ndarray:
        """Scaled tensor weights: integrate plain functions sampled at nodes."""
        return np.outer(self.rule_x.scaled_weights, self.rule_y.scaled_weights)

    def matches(self, other: "TensorBasis2D") -> bool:
        return self is other or (self.spec_x == other.spec_x and self.spec_y == other.spec_y)

    def check(self, rtol: float = 1e-9) -> None:
        """Raise DegenerateBasis if quartic products are not integrated exactly."""
        for spec, rule in ((self.spec_x, self.rule_x), (self.spec_y, self.rule_y)):
            check_exactness(rule, 4 * spec.L - 4, rtol)

    def potential_matrix(self, axis: int, coeffs) -> np.ndarray:
        """Matrix ``<Hf_a| c0 + c1 x + c2 x^2 |Hf_b>`` for one axis, exact."""
        spec = self.spec_x if axis == 0 else self.spec_y
        rule = quadratic_rule(spec)
        P = hermite_function_values(spec, rule.nodes)
        c0, c1, c2 = coeffs
        q = c0 + c1 * rule.nodes + c2 * rule.nodes**2
        return (P * (rule.scaled_weights * q)) @ P.T

    def values(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis Hermite function tables at arbitrary grid coordinates."""
        return (hermite_function_values(self.spec_x, x1),
                hermite_function_values(self.spec_y, x2))
