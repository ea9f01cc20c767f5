"""Fixed quadrature rules for the Sommerfeld-integral split.

The propagating part lives on a finite interval (Gauss-Legendre);
the evanescent part is a semi-infinite integral with exponential decay
(generalized Gauss-Laguerre, the e^{-t y} factor supplying the weight
after rescaling t -> t / y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre, roots_genlaguerre

__all__ = ["QuadratureRule", "gauss_legendre", "gauss_laguerre_generalized", "SommerfeldRules"]


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    count: int
    a_param: float = 0.0  # generalized-Laguerre weight exponent; 0 for Legendre

    def apply(self, f) -> complex:
        """Integrate a callable sampled at the nodes."""
        return np.sum(self.weights * f(self.nodes))


def gauss_legendre(count: int, a: float, b: float) -> QuadratureRule:
    """Count-point Gauss-Legendre rule affinely mapped to [a, b].

    Exact for polynomials up to degree 2*count - 1.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not a < b:
        raise ValueError("invalid interval: need a < b")
    x, w = roots_legendre(count)
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * x
    weights = half * w
    return QuadratureRule(nodes=nodes, weights=weights, kind=f"legendre-on-[{a:g},{b:g}]", count=count)


def gauss_laguerre_generalized(count: int, a_param: float = 0.0) -> QuadratureRule:
    """Count-point generalized Gauss-Laguerre rule.

    Integrates f against the weight t^a_param e^{-t} on [0, inf);
    exact for polynomial f up to degree 2*count - 1.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if a_param < 0:
        raise ValueError("a_param must be >= 0")
    x, w = roots_genlaguerre(count, a_param)
    return QuadratureRule(nodes=x, weights=w, kind=f"generalized-laguerre({a_param:g})",
                          count=count, a_param=a_param)


@dataclass(frozen=True)
class SommerfeldRules:
    """Node-count bundle for the propagating/evanescent split.

    The counts are tunables; 64/64 reproduces the reference accuracy
    tables in the convergence tests.
    """

    propagating: QuadratureRule
    evanescent: QuadratureRule

    @classmethod
    def default(cls, prop_count: int = 64, evan_count: int = 64,
                a_param: float = 0.0) -> "SommerfeldRules":
        return cls(
            propagating=gauss_legendre(prop_count, 0.0, np.pi),
            evanescent=gauss_laguerre_generalized(evan_count, a_param),
        )
