"""Local entropies and distance-from-GHZ measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import BipartiteState, TripartiteState, _gaps

GHZ_TOL = 1e-3


def _binary_entropy(p):
    """Vectorized binary entropy in bits with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return np.clip(h, 0.0, 1.0)


def binary_entropy(p: float) -> float:
    """-(p log2 p + (1 - p) log2 (1 - p)), the local information of a qubit."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p!r}")
    return float(_binary_entropy(p))


@dataclass(frozen=True)
class DistanceTriple:
    d_p: float
    d_s: float
    d_2: float

    def is_ghz(self, tol: float = GHZ_TOL) -> bool:
        return self.d_p < tol


def _distances_from_gaps(gaps):
    # with p = 1/2 + g: sum p - 3/2 = sum g and 3/4 - sum p(1-p) = sum g^2,
    # both free of cancellation near the GHZ point
    d_p = np.sum(gaps, axis=-1)
    d_2 = np.sum(gaps**2, axis=-1)
    d_s = 3.0 - np.sum(_binary_entropy(0.5 + gaps), axis=-1)
    return d_p, np.maximum(d_s, 0.0), d_2


def distances(state: TripartiteState) -> DistanceTriple:
    d_p, d_s, d_2 = _distances_from_gaps(_gaps(state.amps))
    return DistanceTriple(float(d_p), float(d_s), float(d_2))


def _largest_schmidt_weight(amps4):
    """Largest squared Schmidt coefficient of normalized 2-qubit amplitudes."""
    amps4 = np.asarray(amps4, dtype=complex)
    det = amps4[..., 0] * amps4[..., 3] - amps4[..., 1] * amps4[..., 2]
    # lambda_max * lambda_min = |det|^2 and the two sum to one
    disc = np.clip(0.25 - np.abs(det) ** 2, 0.0, None)
    return 0.5 + np.sqrt(disc)


def _entanglement_entropy(amps4):
    return _binary_entropy(_largest_schmidt_weight(amps4))


def _single_shot_yield(amps4):
    # Procrustean filtering of one copy succeeds with probability 2 lambda_min
    amps4 = np.asarray(amps4, dtype=complex)
    det = amps4[..., 0] * amps4[..., 3] - amps4[..., 1] * amps4[..., 2]
    return 2.0 * np.abs(det) ** 2 / _largest_schmidt_weight(amps4)


def entanglement_entropy(residue: BipartiteState) -> float:
    """Entropy of entanglement of a two-qubit residue, in ebits."""
    return float(_entanglement_entropy(residue.amps))
