"""Triple states, the golden-mean attractor and escaping from it.

A triple state has exactly three components in the product of the local
Schmidt bases, each pair of components differing in two qubits, e.g.
b|001> + c|010> + e|100>.  Schmidt-basis POVM steps map triple states to
triple states, so primary distillation never reaches a GHZ state from one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .povm import SCHMIDT, MeasurementBasis, PovmOutcome, _alpha_big_step, _povm, povm_step
from .state import (
    TripartiteState,
    _apply_1q,
    _gap_from_entries,
    _gaps,
    _local_basis,
    _orth,
    _split,
    _top_eigvec,
)

TRIPLE_TOL = 1e-9
SQRT5 = math.sqrt(5.0)
GOLDEN_WEIGHTS = (0.5, (SQRT5 - 1.0) / 4.0, (3.0 - SQRT5) / 4.0)

_POPCOUNT = np.array([bin(x).count("1") for x in range(8)])
# (-1)^(a+b) over the two spectator bits of a (2, 4) split
_PARITY = np.array([1.0, -1.0, -1.0, 1.0])


def _rotation_to(v: np.ndarray) -> np.ndarray:
    """Rows <v|, <v_perp| : maps the basis (v, v_perp) onto (|0>, |1>)."""
    return np.stack([v.conj(), _orth(v).conj()], axis=-2)


def _triple_frame(amps: np.ndarray) -> np.ndarray:
    """Amplitudes re-expressed in a product basis adapted to triple states.

    Two qubits go to their local Schmidt bases.  The qubit with the smallest
    spectral gap (the only one that can be degenerate in a triple state) is
    rotated to diagonalize sum_ab (-1)^(a+b) |v_ab><v_ab|, where v_ab are its
    conditional vectors given the other two qubits.  For a triple state that
    operator is diagonal in the triple basis and never degenerate.
    """
    amps = np.asarray(amps, dtype=complex)
    bases = [_local_basis(amps, k)[1] for k in range(3)]
    candidates = []
    for j in range(3):
        t = amps
        for k in range(3):
            if k != j:
                t = _apply_1q(t, k, _rotation_to(bases[k]))
        m = _split(t, j)
        wm = m * _PARITY
        a = np.einsum("...c,...c->...", wm[..., 0, :], m[..., 0, :].conj()).real
        d = np.einsum("...c,...c->...", wm[..., 1, :], m[..., 1, :].conj()).real
        b = np.einsum("...c,...c->...", wm[..., 0, :], m[..., 1, :].conj())
        v = _top_eigvec(a, d, b, _gap_from_entries(a, d, b))
        candidates.append(_apply_1q(t, j, _rotation_to(v)))
    choice = np.argmin(_gaps(amps), axis=-1)
    stacked = np.stack(candidates, axis=-2)
    return np.take_along_axis(stacked, choice[..., None, None], axis=-2)[..., 0, :]


def _triple_test(amps: np.ndarray, tol: float = TRIPLE_TOL):
    """Batched test; returns ``(is_triple, labels, residual, framed_amps)``."""
    framed = _triple_frame(amps)
    w = np.abs(framed) ** 2
    order = np.argsort(-w, axis=-1, kind="stable")
    top = np.sort(order[..., :3], axis=-1)
    rest = order[..., 3:]
    residual = np.sum(np.take_along_axis(w, rest, axis=-1), axis=-1)
    smallest = np.min(np.take_along_axis(w, top, axis=-1), axis=-1)
    h01 = _POPCOUNT[top[..., 0] ^ top[..., 1]]
    h02 = _POPCOUNT[top[..., 0] ^ top[..., 2]]
    h12 = _POPCOUNT[top[..., 1] ^ top[..., 2]]
    ok = (residual < tol) & (smallest > tol) & (h01 == 2) & (h02 == 2) & (h12 == 2)
    return ok, top, residual, framed


@dataclass(frozen=True)
class TripleStateReport:
    is_triple: bool
    support_pattern: tuple[str, str, str]
    residual: float


def is_triple_state(state: TripartiteState, tol: float = TRIPLE_TOL) -> TripleStateReport:
    """Decide whether ``state`` is a triple state, up to local unitaries."""
    ok, top, residual, _ = _triple_test(state.amps, tol)
    labels = tuple(format(int(x), "03b") for x in top)
    return TripleStateReport(bool(ok), labels, float(residual))


def amplitude_multiset(state: TripartiteState) -> np.ndarray:
    """Sorted (descending) amplitude magnitudes in the triple-adapted frame."""
    return np.sort(np.abs(_triple_frame(state.amps)))[::-1]


def golden_mean_state() -> TripartiteState:
    """sqrt(1/2)|001> + sqrt((sqrt5 - 1)/4)|010> + sqrt((3 - sqrt5)/4)|100>."""
    amps = np.zeros(8, dtype=complex)
    amps[0b001] = math.sqrt(GOLDEN_WEIGHTS[0])
    amps[0b010] = math.sqrt(GOLDEN_WEIGHTS[1])
    amps[0b100] = math.sqrt(GOLDEN_WEIGHTS[2])
    return TripartiteState(amps)


GOLDEN_MULTISET = np.array([math.sqrt(w) for w in GOLDEN_WEIGHTS] + [0.0] * 5)


def golden_distance(state: TripartiteState) -> float:
    """Euclidean distance between the amplitude multisets of ``state`` and the golden-mean state."""
    return float(np.linalg.norm(amplitude_multiset(state) - GOLDEN_MULTISET))


def random_triple_state(rng: np.random.Generator) -> TripartiteState:
    """Weights uniform on the 2-simplex, random phases, on the {001, 010, 100} pattern."""
    weights = rng.dirichlet(np.ones(3))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    amps = np.zeros(8, dtype=complex)
    amps[[0b001, 0b010, 0b100]] = np.sqrt(weights) * np.exp(1j * phases)
    return TripartiteState.from_amplitudes(amps)


def big_step(state: TripartiteState, i: int) -> TripartiteState:
    """Success branch of one big-step POVM on subsystem ``i``."""
    k = i - 1
    gap = _gaps(state.amps)[k]
    succ, _, _, _ = _povm(state.amps, k, _alpha_big_step(gap))
    return TripartiteState.from_amplitudes(succ)


def attractor_iterate(
    state: TripartiteState, n_cycles: int, tol: float = TRIPLE_TOL
) -> TripartiteState:
    """Run ``n_cycles`` full big-step cycles (subsystems 1, 2, 3) on a triple state."""
    if not is_triple_state(state, tol).is_triple:
        raise ValueError("attractor_iterate needs a triple state")
    for _ in range(n_cycles):
        for i in (1, 2, 3):
            state = big_step(state, i)
    return state


def escape_step(
    state: TripartiteState,
    theta: float = math.pi / 4,
    alpha: float = math.sqrt(0.5),
    subsystem: int = 1,
) -> PovmOutcome:
    """POVM in a basis rotated away from the Schmidt basis, to leave the triple family."""
    basis = MeasurementBasis.rotated(theta) if theta != 0.0 else SCHMIDT
    return povm_step(state, subsystem, alpha, basis)

