"""Three-qubit pure states, two-qubit residues and their local structure.

Amplitudes are stored in the fixed order a|000> + b|001> + ... + h|111>,
qubit 1 being the most significant bit.  Subsystems are numbered 1, 2, 3 in
the public API.

Most helpers prefixed with an underscore accept arrays with arbitrary
leading batch axes, shape ``(..., 8)``; the protocol engine relies on this to
run whole ensembles through the same arithmetic used for single states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NORM_TOL = 1e-12
DECOMP_TOL = 1e-10
READ_RENORM_TOL = 1e-6

# pair left behind when a subsystem is measured out, with qubit order of the
# remaining 4-vector
PAIR_OF = {1: (2, 3), 2: (1, 3), 3: (1, 2)}
PAIRS = ((1, 2), (2, 3), (1, 3))


def _check_subsystem(i: int) -> int:
    if i not in (1, 2, 3):
        raise ValueError(f"subsystem index must be 1, 2 or 3, got {i!r}")
    return i - 1


def _split(amps: np.ndarray, k: int) -> np.ndarray:
    """View ``(..., 8)`` amplitudes as ``(..., 2, 4)`` with qubit ``k`` (0-based) as rows."""
    t = amps.reshape(amps.shape[:-1] + (2, 2, 2))
    t = np.moveaxis(t, -3 + k, -3)
    return t.reshape(amps.shape[:-1] + (2, 4))


def _merge(mat: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`_split`."""
    t = mat.reshape(mat.shape[:-2] + (2, 2, 2))
    t = np.moveaxis(t, -3, -3 + k)
    return np.ascontiguousarray(t).reshape(mat.shape[:-2] + (8,))


def _density_entries(mat: np.ndarray):
    """Entries (rho00, rho11, rho01) of ``mat @ mat^dagger`` for ``(..., 2, m)``."""
    r0 = mat[..., 0, :]
    r1 = mat[..., 1, :]
    a = np.einsum("...j,...j->...", r0, r0.conj()).real
    d = np.einsum("...j,...j->...", r1, r1.conj()).real
    b = np.einsum("...j,...j->...", r0, r1.conj())
    return a, d, b


def _gap_from_entries(a, d, b):
    # larger eigenvalue is (a + d)/2 + gap; for unit trace p = 1/2 + gap
    return np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)


def _top_eigvec(a, d, b, gap):
    """Unit eigenvector of [[a, b], [b*, d]] for its larger eigenvalue.

    Deterministic: uses (p - d, b*) when a >= d and (b, p - a) otherwise,
    falling back to |0> for an exactly degenerate spectrum.
    """
    a, d, b, gap = np.broadcast_arrays(a, d, b, gap)
    mid = 0.5 * (a + d)
    lam = mid + gap
    v = np.empty(a.shape + (2,), dtype=complex)
    first = a >= d
    v[..., 0] = np.where(first, lam - d, b)
    v[..., 1] = np.where(first, np.conj(b), lam - a)
    nrm = np.sqrt(np.sum(np.abs(v) ** 2, axis=-1))
    degenerate = nrm < 1e-300
    nrm = np.where(degenerate, 1.0, nrm)
    v = v / nrm[..., None]
    v[degenerate] = (1.0, 0.0)
    return v


def _orth(v: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to the 2-vector ``v``."""
    w = np.empty_like(v)
    w[..., 0] = -np.conj(v[..., 1])
    w[..., 1] = np.conj(v[..., 0])
    return w


def _gaps(amps: np.ndarray) -> np.ndarray:
    """p_i - 1/2 for i = 1, 2, 3, shape ``(..., 3)``."""
    out = np.empty(amps.shape[:-1] + (3,))
    for k in range(3):
        out[..., k] = _gap_from_entries(*_density_entries(_split(amps, k)))
    return out


def _local_basis(amps: np.ndarray, k: int):
    """Gap and Schmidt vectors (|+>, |->) of qubit ``k`` (0-based)."""
    a, d, b = _density_entries(_split(amps, k))
    gap = _gap_from_entries(a, d, b)
    plus = _top_eigvec(a, d, b, gap)
    return gap, plus, _orth(plus)


def _apply_1q(amps: np.ndarray, k: int, u: np.ndarray) -> np.ndarray:
    """Apply a (batch of) 2x2 operator(s) ``u`` to qubit ``k``."""
    return _merge(u @ _split(amps, k), k)


def _normalized(v: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(np.abs(v) ** 2, axis=-1, keepdims=True))
    return v / n


@dataclass(frozen=True, eq=False)
class TripartiteState:
    """Normalized pure state of three qubits."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.shape != (8,):
            raise ValueError(f"expected 8 amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized (norm {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = True) -> "TripartiteState":
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValueError("zero vector is not a state")
            amps = amps / norm
        return cls(amps)

    @classmethod
    def basis(cls, label: str) -> "TripartiteState":
        """Computational basis state, e.g. ``basis("010")``."""
        amps = np.zeros(8, dtype=complex)
        amps[int(label, 2)] = 1.0
        return cls(amps)

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(2, 2, 2)

    def __repr__(self):
        body = ", ".join(f"{a:.4g}" for a in self.amps)
        return f"TripartiteState([{body}])"


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """Two-qubit pure state of a subsystem pair, carrying an ensemble weight."""

    pair: tuple[int, int]
    amps: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        pair = tuple(sorted(self.pair))
        if pair not in PAIRS:
            raise ValueError(f"invalid pair {self.pair!r}")
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise ValueError(f"expected 4 amplitudes, got {amps.size}")
        if abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise ValueError("residue not normalized")
        if self.weight < 0:
            raise ValueError("negative weight")
        amps.setflags(write=False)
        object.__setattr__(self, "pair", pair)
        object.__setattr__(self, "amps", amps)


@dataclass(frozen=True, eq=False)
class SchmidtView:
    """Schmidt form of a state with respect to one subsystem and the other two.

    ``state = sqrt(p) |+>|phi+> + sqrt(1 - p) |->|phi->`` with ``p >= 1/2``.
    The co-states are 4-vectors ordered as in :data:`PAIR_OF`.
    """

    subsystem: int
    p: float
    plus_vec: np.ndarray
    minus_vec: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    gap: float = field(default=0.0, repr=False)

    def reconstruct(self) -> np.ndarray:
        mat = np.sqrt(self.p) * np.outer(self.plus_vec, self.phi_plus) + np.sqrt(
            1.0 - self.p
        ) * np.outer(self.minus_vec, self.phi_minus)
        return _merge(mat, self.subsystem - 1)


def reduced_density(state: TripartiteState, i: int) -> np.ndarray:
    """Reduced density matrix of subsystem ``i``, other two traced out."""
    k = _check_subsystem(i)
    m = _split(state.amps, k)
    return m @ m.conj().T


def local_probability(state: TripartiteState, i: int) -> float:
    """Larger eigenvalue p_i of the reduced density matrix of subsystem ``i``."""
    k = _check_subsystem(i)
    return 0.5 + float(_gap_from_entries(*_density_entries(_split(state.amps, k))))


def local_probabilities(state: TripartiteState) -> np.ndarray:
    return 0.5 + _gaps(state.amps)


def _complement(v: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to the unit 4-vector ``v``."""
    for e in np.eye(4, dtype=complex):
        w = e - np.vdot(v, e) * v
        n = np.linalg.norm(w)
        if n > 0.5:
            return w / n
    raise AssertionError("unreachable")


def schmidt_decompose(state: TripartiteState, i: int) -> SchmidtView:
    """Schmidt decomposition of ``state`` across subsystem ``i`` versus the rest."""
    k = _check_subsystem(i)
    gap, plus, minus = _local_basis(state.amps, k)
    gap = float(gap)
    p = 0.5 + gap
    m = _split(state.amps, k)
    phi_p = plus.conj() @ m
    phi_m = minus.conj() @ m
    phi_p = phi_p / np.linalg.norm(phi_p)
    nm = np.linalg.norm(phi_m)
    if nm < 1e-8:
        # 1 - p is (numerically) zero; any orthonormal co-state will do
        phi_m = _complement(phi_p)
    else:
        phi_m = phi_m / nm
    return SchmidtView(i, p, plus, minus, phi_p, phi_m, gap)


def haar_amplitudes(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed amplitudes: i.i.d. complex Gaussians, normalized."""
    shape = (8,) if size is None else (size, 8)
    z = rng.standard_normal(shape + (2,))
    amps = z[..., 0] + 1j * z[..., 1]
    return _normalized(amps)


def haar_random_state(rng: np.random.Generator) -> TripartiteState:
    return TripartiteState(haar_amplitudes(rng))


def is_product(state: TripartiteState, tol: float = 1e-9) -> int | None:
    """Smallest subsystem ``i`` with the state a product across i|jk, else None."""
    for k, gap in enumerate(_gaps(state.amps)):
        if 0.5 + gap > 1.0 - tol:
            return k + 1
    return None


def apply_local_unitary(state: TripartiteState, i: int, u) -> TripartiteState:
    k = _check_subsystem(i)
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=DECOMP_TOL):
        raise ValueError("operator is not a 2x2 unitary")
    return TripartiteState.from_amplitudes(_apply_1q(state.amps, k, u))


def phase_distance(x, y) -> float:
    """min over phi of ||x - exp(i phi) y||, for vectors or states."""
    x = getattr(x, "amps", x)
    y = getattr(y, "amps", y)
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    overlap = np.vdot(y, x)
    # align the phase first; sqrt(2 - 2|overlap|) would lose half the digits
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(x - phase * y))


def ghz_state() -> TripartiteState:
    amps = np.zeros(8, dtype=complex)
    amps[0] = np.sqrt(0.5)
    amps[7] = -np.sqrt(0.5)
    return TripartiteState(amps)


def product_state(i: int, chi, zeta) -> TripartiteState:
    """|chi>_i |zeta>_jk with ``zeta`` ordered as in :data:`PAIR_OF`."""
    k = _check_subsystem(i)
    chi = np.asarray(chi, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    return TripartiteState.from_amplitudes(_merge(np.outer(chi, zeta), k))


# --- serialization --------------------------------------------------------


def state_to_json(state: TripartiteState) -> str:
    return json.dumps([[float(a.real), float(a.imag)] for a in state.amps])


def _parse_amplitudes(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape != (8, 2):
        raise ValueError(f"expected 8 [re, im] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite amplitude")
    return arr[:, 0] + 1j * arr[:, 1]


def state_from_data(data) -> TripartiteState:
    amps = _parse_amplitudes(data)
    norm = np.linalg.norm(amps)
    if abs(norm - 1.0) >= READ_RENORM_TOL:
        raise ValueError(f"state norm {norm:.9g} deviates from 1 by more than {READ_RENORM_TOL}")
    return TripartiteState(amps / norm)


def state_from_json(text: str) -> TripartiteState:
    return state_from_data(json.loads(text))


def load_state(path) -> TripartiteState:
    return state_from_json(Path(path).read_text())


def load_states(path) -> list[TripartiteState]:
    """Read either one state or a JSON list of states."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list) or not data:
        raise ValueError("state file must hold a non-empty JSON array")
    if isinstance(data[0], list) and data[0] and isinstance(data[0][0], list):
        return [state_from_data(d) for d in data]
    return [state_from_data(data)]


def save_state(state: TripartiteState, path) -> None:
    Path(path).write_text(state_to_json(state) + "\n")
