"""Best single-qubit measurement for leaving the other two qubits entangled.

Measuring qubit ``k`` in the basis

    |m0> = cos(t/2)|0> + e^{i f} sin(t/2)|1>,  |m1> = -e^{-i f} sin(t/2)|0> + cos(t/2)|1>

leaves the remaining pair in one of two pure states.  The objective is the
probability-weighted EPR yield of those two states; it is maximized over
(t, f) by a grid scan followed by a batched compass search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import _binary_entropy
from .state import _split

ASYMPTOTIC = "asymptotic"
SINGLE_SHOT = "single-shot"
EPR_MODES = (ASYMPTOTIC, SINGLE_SHOT)

# pair index in (N12, N23, N31) order for the pair left when qubit k is measured
PAIR_INDEX = (1, 2, 0)
IMPROVE_TOL = 1e-14


@dataclass(frozen=True)
class SearchConfig:
    grid: int = 64
    refine: bool = True
    min_step: float = 1e-9
    chunk: int = 128


def _yield_unnormalized(chi, epr_mode):
    """pr * Y(chi / sqrt(pr)) for unnormalized 4-vectors ``chi``."""
    pr = np.sum(np.abs(chi) ** 2, axis=-1)
    det2 = np.abs(chi[..., 0] * chi[..., 3] - chi[..., 1] * chi[..., 2]) ** 2
    safe = np.where(pr > 1e-300, pr, 1.0)
    # lambda_max * lambda_min = |det|^2 / pr^2 after normalization
    prod = np.clip(det2 / safe**2, 0.0, 0.25)
    lam = 0.5 + np.sqrt(0.25 - prod)
    if epr_mode == ASYMPTOTIC:
        y = _binary_entropy(lam)
    elif epr_mode == SINGLE_SHOT:
        y = 2.0 * prod / lam
    else:
        raise ValueError(f"unknown EPR mode {epr_mode!r}")
    return np.where(pr > 1e-300, pr * y, 0.0)


def _objective(m, theta, phi, epr_mode):
    """m: (n, 2, 4); theta, phi: (n, g).  Returns (n, g)."""
    c = np.cos(theta / 2)[..., None]
    s = np.sin(theta / 2)[..., None]
    e = np.exp(1j * phi)[..., None]
    r0 = m[:, None, 0, :]
    r1 = m[:, None, 1, :]
    chi0 = c * r0 + np.conj(e) * s * r1
    chi1 = -e * s * r0 + c * r1
    return _yield_unnormalized(chi0, epr_mode) + _yield_unnormalized(chi1, epr_mode)


def outcome_states(amps: np.ndarray, k: int, theta: float, phi: float):
    """Probabilities and normalized pair states for the two outcomes (single state)."""
    m = _split(np.asarray(amps, dtype=complex), k)
    c, s, e = np.cos(theta / 2), np.sin(theta / 2), np.exp(1j * phi)
    chis = [c * m[0] + np.conj(e) * s * m[1], -e * s * m[0] + c * m[1]]
    out = []
    for chi in chis:
        pr = float(np.vdot(chi, chi).real)
        out.append((pr, chi / np.sqrt(pr) if pr > 0 else chi))
    return out


def _refine(m, theta, phi, val, epr_mode, h0, min_step, max_iter=600):
    n = len(theta)
    h = np.full(n, h0)
    moves = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)], float)
    for _ in range(max_iter):
        live = h >= min_step
        if not live.any():
            break
        idx = np.flatnonzero(live)
        th = theta[idx, None] + h[idx, None] * moves[:, 0]
        ph = phi[idx, None] + h[idx, None] * moves[:, 1]
        cand = _objective(m[idx], th, ph, epr_mode)
        best = np.argmax(cand, axis=-1)
        bval = cand[np.arange(len(idx)), best]
        # ignore round-off gains, which would otherwise stall the step halving
        better = bval > val[idx] + IMPROVE_TOL
        up = idx[better]
        theta[up] = th[better, best[better]]
        phi[up] = ph[better, best[better]]
        val[up] = bval[better]
        h[idx[~better]] *= 0.5
    return theta, phi, val


def best_measurements(amps: np.ndarray, k: int, epr_mode: str = ASYMPTOTIC, search: SearchConfig = SearchConfig()):
    """Maximize the expected pair yield over measurements of qubit ``k``.

    ``amps`` has shape (n, 8).  Returns arrays (value, theta, phi), each (n,).
    """
    amps = np.asarray(amps, dtype=complex).reshape(-1, 8)
    n = len(amps)
    g = search.grid
    tg, pg = np.meshgrid(np.linspace(0.0, np.pi, g), np.linspace(0.0, 2 * np.pi, g, endpoint=False), indexing="ij")
    tg, pg = tg.ravel(), pg.ravel()
    value = np.empty(n)
    theta = np.empty(n)
    phi = np.empty(n)
    for lo in range(0, n, search.chunk):
        m = _split(amps[lo : lo + search.chunk], k)
        cnt = len(m)
        vals = _objective(m, np.broadcast_to(tg, (cnt, tg.size)), np.broadcast_to(pg, (cnt, pg.size)), epr_mode)
        best = np.argmax(vals, axis=-1)
        th, ph, v = tg[best].copy(), pg[best].copy(), vals[np.arange(cnt), best]
        if search.refine:
            th, ph, v = _refine(m, th, ph, v, epr_mode, np.pi / max(g - 1, 1), search.min_step)
        value[lo : lo + cnt], theta[lo : lo + cnt], phi[lo : lo + cnt] = v, th, ph
    return value, theta, phi


def allocate(best: np.ndarray, mode: str = "per-state") -> np.ndarray:
    """Split copies of each state among the three measured qubits.

    ``best`` is (n, 3): expected pairs per copy when measuring qubit k.
    Returns fractions (n, 3).  ``per-state`` maximizes the GHZ count of the
    state on its own: with y_k = x_k best_k the optimum balances the two
    most productive measurements (y_a = y_b), worth
    best_a best_b / (best_a + best_b).  ``greedy`` sends everything to the
    single best measurement.
    """
    best = np.asarray(best, dtype=float)
    n = len(best)
    x = np.zeros((n, 3))
    greedy = np.argmax(best, axis=-1)
    if mode == "greedy":
        x[np.arange(n), greedy] = 1.0
        return x
    if mode != "per-state":
        raise ValueError(f"unknown allocation {mode!r}")
    pairs = ((0, 1), (1, 2), (0, 2))
    denom = np.stack([best[:, a] + best[:, b] for a, b in pairs], axis=-1)
    num = np.stack([best[:, a] * best[:, b] for a, b in pairs], axis=-1)
    worth = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    choice = np.argmax(worth, axis=-1)
    rows = np.arange(n)
    for c, (a, b) in enumerate(pairs):
        sel = (choice == c) & (worth[rows, c] > 0)
        x[sel, a] = best[sel, b] / denom[sel, c]
        x[sel, b] = best[sel, a] / denom[sel, c]
    none = worth[rows, choice] <= 0
    x[none, greedy[none]] = 1.0
    return x


def pair_counts(best: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """(N12, N23, N31) from per-qubit yields and allocation fractions."""
    n = np.zeros_like(best)
    for k in range(3):
        n[:, PAIR_INDEX[k]] += fractions[:, k] * best[:, k]
    return n
