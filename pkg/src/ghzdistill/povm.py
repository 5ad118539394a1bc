"""Single ancilla-assisted POVM step on one qubit.

The ancilla starts in |0> and is coupled to the measured qubit by

    |+>|0> -> alpha |+>|0> + sqrt(1 - alpha^2) |+>|1>
    |->|0> -> |->|0>
    |+>|1> -> sqrt(1 - alpha^2) |+>|0> - alpha |+>|1>
    |->|1> -> |->|1>

after which the ancilla is read out.  Outcome 0 ("success") applies the
Kraus operator ``alpha |+><+| + |-><-|``; outcome 1 leaves the qubit in |+>
and the other two qubits in the normalized co-state of |+>.  Here |+>, |->
are the qubit's Schmidt vectors, optionally rotated by an angle theta.

The step is computed directly from the Kraus operators; no ancilla is
simulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .state import (
    PAIR_OF,
    BipartiteState,
    TripartiteState,
    _check_subsystem,
    _local_basis,
    _merge,
    _split,
)


def alpha_big_step(p: float) -> float:
    """Coupling that brings the measured qubit to p = 1/2 on success."""
    if not 0.5 <= p <= 1.0:
        raise ValueError(f"p must lie in [1/2, 1], got {p!r}")
    return math.sqrt((1.0 - p) / p)


def alpha_for_target(p: float, p_target: float) -> float:
    """Coupling that takes local probability ``p`` to ``p_target`` on success.

    Solves p_target = alpha^2 p / (alpha^2 p + 1 - p).
    """
    if not 0.5 <= p_target <= p <= 1.0:
        raise ValueError(f"need 1/2 <= p_target <= p <= 1, got p={p!r}, p_target={p_target!r}")
    if p_target == p:
        return 1.0
    return math.sqrt(p_target * (1.0 - p) / (p * (1.0 - p_target)))


def _alpha_big_step(gap):
    p = 0.5 + gap
    return np.sqrt(np.clip((1.0 - p) / p, 0.0, 1.0))


@dataclass(frozen=True)
class MeasurementBasis:
    """Basis for the POVM: the Schmidt basis rotated by ``theta`` radians.

    |+~> = cos(theta)|+> + sin(theta)|->,  |-~> = -sin(theta)|+> + cos(theta)|->.
    ``theta = 0`` is the Schmidt basis; ``theta = pi/4`` gives (|+> +- |->)/sqrt 2
    up to sign.  Rotation depends on the relative phase of |+> and |->: |+>
    has a real positive entry where its reduced density matrix has the larger
    diagonal element, and |-> = (-conj(v1), conj(v0)).
    """

    theta: float = 0.0

    @classmethod
    def schmidt(cls) -> "MeasurementBasis":
        return cls(0.0)

    @classmethod
    def rotated(cls, theta: float) -> "MeasurementBasis":
        return cls(float(theta))

    @property
    def is_schmidt(self) -> bool:
        return self.theta == 0.0

    def __str__(self):
        return "schmidt" if self.is_schmidt else f"rotated({self.theta:.6g})"


SCHMIDT = MeasurementBasis()


def _basis_vectors(amps, k, theta):
    gap, plus, minus = _local_basis(amps, k)
    if theta == 0.0:
        return gap, plus, minus
    c, s = math.cos(theta), math.sin(theta)
    return gap, c * plus + s * minus, -s * plus + c * minus


def _povm(amps, k, alpha, theta=0.0):
    """Batched POVM step on qubit ``k`` (0-based).

    Returns ``(success_amps, success_prob, residue_amps, failure_prob)``;
    residue amplitudes are normalized 4-vectors of the remaining pair.
    Entries whose branch has zero probability hold unnormalized zeros.
    """
    alpha = np.asarray(alpha, dtype=float)
    _, bp, _ = _basis_vectors(amps, k, theta)
    m = _split(amps, k)
    chi = np.einsum("...a,...ab->...b", bp.conj(), m)
    q = np.sum(np.abs(chi) ** 2, axis=-1)
    shrink = (1.0 - alpha)[..., None, None]
    succ = m - shrink * (bp[..., :, None] * chi[..., None, :])
    failure_prob = (1.0 - alpha**2) * q
    success_prob = 1.0 - failure_prob
    succ = _merge(succ, k)
    sn = np.sqrt(np.sum(np.abs(succ) ** 2, axis=-1))
    succ = succ / np.where(sn > 0, sn, 1.0)[..., None]
    qn = np.sqrt(q)
    residue = chi / np.where(qn > 0, qn, 1.0)[..., None]
    return succ, success_prob, residue, failure_prob


@dataclass(frozen=True, eq=False)
class PovmOutcome:
    """Both branches of a POVM step.

    ``failure_state`` is the full three-qubit failure branch, |+~>_i times
    the residue; it is a product across the measured qubit.
    """

    success_state: TripartiteState | None
    success_prob: float
    failure_residue: BipartiteState | None
    failure_prob: float
    measured_subsystem: int
    alpha: float
    basis: MeasurementBasis = SCHMIDT
    failure_state: TripartiteState | None = None


def povm_step(
    state: TripartiteState,
    i: int,
    alpha: float,
    basis: MeasurementBasis = SCHMIDT,
) -> PovmOutcome:
    """Apply the ancilla POVM to subsystem ``i`` and return both branches."""
    k = _check_subsystem(i)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    succ, ps, res, pf = _povm(state.amps, k, alpha, basis.theta)
    ps, pf = float(ps), float(pf)
    success_state = TripartiteState.from_amplitudes(succ) if ps > 0 else None
    residue = failure_state = None
    if pf > 0:
        residue = BipartiteState(PAIR_OF[i], res, pf)
        _, bp, _ = _basis_vectors(state.amps, k, basis.theta)
        failure_state = TripartiteState.from_amplitudes(_merge(np.outer(bp, res), k))
    return PovmOutcome(success_state, ps, residue, pf, i, float(alpha), basis, failure_state)
