"""Primary and secondary GHZ distillation, and the EPR-first baseline.

Primary distillation cycles through subsystems 1, 2, 3 applying the POVM of
:mod:`ghzdistill.povm` and follows the success branch until
D_p = sum(p_i) - 3/2 drops below ``d_tol``.  Runs are in expectation mode:
the weight of every failure branch is booked into a residue pool instead of
sampling outcomes, so the yield of a single input state is exact.

Two primary variants:

* big step: alpha = sqrt((1 - p_i)/p_i) drives p_i to 1/2 in one step;
* infinitesimal: a weak POVM of fixed strength alpha = 1 - epsilon on each
  subsystem in turn, never pushing p_i below 1/2.

Secondary distillation turns the pooled residues into EPR pairs (entropy of
entanglement, or single-copy Procrustean filtering) and pairs of EPRs shared
by different parties into GHZ states.

All runs go through :func:`_drive`, which processes a whole batch of input
states in lock step; the single-state functions are batches of one.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assistance import (
    ASYMPTOTIC,
    EPR_MODES,
    PAIR_INDEX,
    SINGLE_SHOT,
    SearchConfig,
    allocate,
    best_measurements,
    outcome_states,
    pair_counts,
)
from .measures import GHZ_TOL, _distances_from_gaps, _entanglement_entropy, _single_shot_yield
from .povm import SCHMIDT, PovmOutcome, _alpha_big_step, _povm, alpha_big_step, povm_step
from .special import TRIPLE_TOL, _triple_test
from .state import PAIR_OF, PAIRS, BipartiteState, TripartiteState, _gaps

PRODUCT_TOL = 1e-9
TRIPLE_DP_MARGIN = 1e-6
PAIR_NAMES = ("12", "23", "31")


class Terminal(enum.Enum):
    CONVERGED = "converged"
    TRIPLE = "triple"
    PRODUCT = "product"
    MAX_STEPS = "max_steps"


_TERMINALS = list(Terminal)


class Protocol(enum.Enum):
    BIG_STEP = "big-step"
    INFINITESIMAL = "infinitesimal"
    BASELINE = "baseline"


@dataclass(frozen=True)
class DistillConfig:
    """Knobs shared by single runs and ensembles."""

    d_tol: float = GHZ_TOL
    max_iters: int = 50
    epsilon: float = 1e-3
    max_steps: int = 10**6
    epr_mode: str = ASYMPTOTIC
    triple_tol: float = TRIPLE_TOL
    product_tol: float = PRODUCT_TOL
    allocation: str = "per-state"
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        if not self.d_tol > 0:
            raise ValueError("d_tol must be positive")
        if self.max_iters < 1 or self.max_steps < 1:
            raise ValueError("max_iters and max_steps must be >= 1")
        if not 0 < self.epsilon <= 0.05:
            raise ValueError("epsilon must lie in (0, 0.05]")
        if self.epr_mode not in EPR_MODES:
            raise ValueError(f"epr_mode must be one of {EPR_MODES}")
        if self.allocation not in ("per-state", "greedy"):
            raise ValueError("allocation must be 'per-state' or 'greedy'")


@dataclass(frozen=True)
class StepRecord:
    step: int
    subsystem: int
    alpha: float
    basis: str
    success_prob: float
    d_p: float
    d_s: float
    d_2: float
    local_products: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "subsystem": self.subsystem,
                "alpha": self.alpha,
                "success_prob": self.success_prob,
                "d_p": self.d_p,
                "d_s": self.d_s,
                "d_2": self.d_2,
            }
        )


@dataclass
class TrajectoryRecord:
    steps: list[StepRecord]
    cumulative_success_prob: float
    terminal: Terminal
    cycles: int
    initial_products: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_jsonl(self) -> str:
        return "".join(s.to_json() + "\n" for s in self.steps)


@dataclass
class ResiduePool:
    """Weighted two-qubit residues collected from discarded branches."""

    residues: list[BipartiteState] = field(default_factory=list)

    def add(self, residue: BipartiteState) -> None:
        self.residues.append(residue)

    def by_pair(self) -> dict[tuple[int, int], list[BipartiteState]]:
        out = {p: [] for p in PAIRS}
        for r in self.residues:
            out[r.pair].append(r)
        return out

    @property
    def total_weight(self) -> float:
        return math.fsum(r.weight for r in self.residues)

    def __len__(self):
        return len(self.residues)


@dataclass(frozen=True)
class YieldReport:
    protocol: Protocol
    primary_yield: float
    epr_counts: tuple[float, float, float]
    secondary_ghz: float
    terminal: Terminal | None = None

    @property
    def total_yield(self) -> float:
        return self.primary_yield + self.secondary_ghz


def combine_eprs(n12: float, n23: float, n31: float) -> float:
    """GHZ states obtainable from EPR pairs shared by the three party pairs.

    Each GHZ consumes two EPRs from different pairs: (n12 + n23 + n31)/2 when
    no count exceeds the sum of the other two, otherwise the sum of the two
    smaller counts.
    """
    if min(n12, n23, n31) < 0:
        raise ValueError("EPR counts must be non-negative")
    return float(_combine(np.array([n12, n23, n31], dtype=float)))


def _combine(n):
    # sorting makes the result exactly symmetric and avoids total - max cancellation
    n = np.sort(n, axis=-1)
    small = n[..., 0] + n[..., 1]
    return np.minimum(0.5 * (small + n[..., 2]), small)


def _pair_yield(amps4, epr_mode):
    if epr_mode == ASYMPTOTIC:
        return _entanglement_entropy(amps4)
    if epr_mode == SINGLE_SHOT:
        return _single_shot_yield(amps4)
    raise ValueError(f"unknown EPR mode {epr_mode!r}")


def secondary_yield(pool: ResiduePool, epr_mode: str = ASYMPTOTIC) -> tuple[float, float, float]:
    """Expected EPR pairs (N12, N23, N31) distillable from the pool."""
    counts = [[], [], []]
    for r in pool.residues:
        counts[PAIRS.index(r.pair)].append(r.weight * float(_pair_yield(r.amps, epr_mode)))
    return tuple(math.fsum(c) for c in counts)


# --- batched engine -------------------------------------------------------


@dataclass
class BatchResult:
    """Per-state outcomes of a batched primary run (arrays of length n)."""

    primary: np.ndarray
    epr: np.ndarray  # (n, 3) in (N12, N23, N31) order
    terminal: np.ndarray  # indices into list(Terminal)
    cycles: np.ndarray
    steps: np.ndarray
    final: np.ndarray  # (n, 8)

    @property
    def secondary(self) -> np.ndarray:
        return _combine(self.epr)

    @property
    def total(self) -> np.ndarray:
        return self.primary + self.secondary


def _extract_pairs(amps, weight, cfg, on_residue=None, index=None):
    """Book the weight of unconverged states as EPR pairs via measurement.

    Copies of each state are split among measurements of the three qubits as
    in the baseline, so the result feeds more than one pair.
    """
    n = len(amps)
    best = np.empty((n, 3))
    angles = []
    for k in range(3):
        v, th, ph = best_measurements(amps, k, cfg.epr_mode, cfg.search)
        best[:, k] = v
        angles.append((th, ph))
    frac = allocate(best, cfg.allocation)
    if on_residue is not None:
        for row in range(n):
            for k in range(3):
                if frac[row, k] <= 0:
                    continue
                th, ph = angles[k][0][row], angles[k][1][row]
                for pr, chi in outcome_states(amps[row], k, th, ph):
                    if pr > 0:
                        on_residue(index[row], k, weight[row] * frac[row, k] * pr, chi)
    return weight[:, None] * pair_counts(best, frac)


def _drive(amps, variant: Protocol, cfg: DistillConfig, on_step=None, on_residue=None) -> BatchResult:
    """Run primary distillation on a batch of states, shape (n, 8).

    ``on_step(index, k, alpha, success_prob, new_amps)`` and
    ``on_residue(index, k, weight, amps4)`` observe the run; ``index`` holds
    the batch positions concerned.
    """
    amps = np.array(amps, dtype=complex).reshape(-1, 8)
    n = len(amps)
    weight = np.ones(n)
    epr = np.zeros((n, 3))
    terminal = np.full(n, -1)
    cycles = np.zeros(n, dtype=int)
    steps = np.zeros(n, dtype=int)
    active = np.arange(n)
    infinitesimal = variant is Protocol.INFINITESIMAL
    slot = 0

    def finish(idx, term):
        terminal[idx] = _TERMINALS.index(term)
        cycles[idx] = -(-slot // 3)

    while active.size:
        k = slot % 3
        a = amps[active]
        gaps = _gaps(a)
        keep = np.ones(active.size, dtype=bool)
        conv = gaps.sum(-1) < cfg.d_tol
        finish(active[conv], Terminal.CONVERGED)
        keep &= ~conv
        if k == 0:
            prod = keep & (gaps.max(-1) > 0.5 - cfg.product_tol)
            finish(active[prod], Terminal.PRODUCT)
            keep &= ~prod
            # triple states all have D_p >= 1/2, so only those need the full test
            cand = keep & (gaps.sum(-1) > 0.5 - TRIPLE_DP_MARGIN)
            if cand.any():
                trip = np.zeros(active.size, dtype=bool)
                trip[cand] = _triple_test(a[cand], cfg.triple_tol)[0]
                finish(active[trip], Terminal.TRIPLE)
                keep &= ~trip
            if not infinitesimal and slot // 3 >= cfg.max_iters:
                finish(active[keep], Terminal.MAX_STEPS)
                keep[:] = False
        if infinitesimal:
            over = keep & (steps[active] >= cfg.max_steps)
            finish(active[over], Terminal.MAX_STEPS)
            keep &= ~over
        active = active[keep]
        if not active.size:
            break
        a = a[keep]
        g = gaps[keep, k]
        alpha = _alpha_big_step(g)
        if infinitesimal:
            apply = np.ones(active.size, dtype=bool)
            alpha = np.maximum(alpha, 1.0 - cfg.epsilon)
        else:
            # a subsystem already within d_tol/3 of 1/2 is left alone; with
            # the d_tol/3 threshold skipping everything implies convergence
            apply = g >= cfg.d_tol / 3
        if apply.any():
            idx = active[apply]
            al = alpha[apply]
            succ, ps, res, pf = _povm(a[apply], k, al)
            lost = weight[idx] * pf
            epr[idx, PAIR_INDEX[k]] += lost * _pair_yield(res, cfg.epr_mode)
            if on_residue is not None:
                for j, row in enumerate(idx):
                    if lost[j] > 0:
                        on_residue(row, k, lost[j], res[j])
            weight[idx] *= ps
            amps[idx] = succ
            steps[idx] += 1
            if on_step is not None:
                on_step(idx, k, al, ps, succ)
        slot += 1

    primary = np.where(terminal == _TERMINALS.index(Terminal.CONVERGED), weight, 0.0)
    # unconverged weight is not lost: product states hand over their pair,
    # the rest is measured out into pairs like the baseline does
    prod = np.flatnonzero(terminal == _TERMINALS.index(Terminal.PRODUCT))
    if prod.size:
        k_split = np.argmax(_gaps(amps[prod]), axis=-1)
        for k in range(3):
            sel = prod[k_split == k]
            if not sel.size:
                continue
            _, _, res, _ = _povm(amps[sel], k, np.zeros(sel.size))
            epr[sel, PAIR_INDEX[k]] += weight[sel] * _pair_yield(res, cfg.epr_mode)
            if on_residue is not None:
                for j, row in enumerate(sel):
                    on_residue(row, k, weight[row], res[j])
    rest = np.flatnonzero(
        (terminal == _TERMINALS.index(Terminal.TRIPLE)) | (terminal == _TERMINALS.index(Terminal.MAX_STEPS))
    )
    if rest.size:
        epr[rest] += _extract_pairs(amps[rest], weight[rest], cfg, on_residue, rest)
    return BatchResult(primary, epr, terminal, cycles, steps, amps)


def run_primary_batch(amps, variant: Protocol, cfg: DistillConfig = DistillConfig()) -> BatchResult:
    if variant is Protocol.BASELINE:
        raise ValueError("baseline has no primary stage")
    return _drive(amps, variant, cfg)


# --- single-state API -----------------------------------------------------


def _products_from_gaps(gaps):
    return tuple(float(0.25 - g * g) for g in gaps)


def _run_single(state: TripartiteState, variant: Protocol, cfg: DistillConfig):
    records: list[StepRecord] = []
    pool = ResiduePool()
    cumulative = [1.0]

    def on_step(idx, k, alpha, ps, succ):
        gaps = _gaps(succ[0])
        d_p, d_s, d_2 = _distances_from_gaps(gaps)
        cumulative[0] *= float(ps[0])
        records.append(
            StepRecord(
                len(records) + 1,
                k + 1,
                float(alpha[0]),
                str(SCHMIDT),
                float(ps[0]),
                float(d_p),
                float(d_s),
                float(d_2),
                _products_from_gaps(gaps),
            )
        )

    def on_residue(row, k, w, amps4):
        pool.add(BipartiteState(PAIR_OF[k + 1], amps4 / np.linalg.norm(amps4), float(w)))

    res = _drive(state.amps[None, :], variant, cfg, on_step, on_residue)
    term = _TERMINALS[res.terminal[0]]
    traj = TrajectoryRecord(records, cumulative[0], term, int(res.cycles[0]), _products_from_gaps(_gaps(state.amps)))
    return traj, TripartiteState.from_amplitudes(res.final[0]), pool


def run_big_step(
    state: TripartiteState, d_tol: float = GHZ_TOL, max_iters: int = 50, cfg: DistillConfig | None = None
):
    """Big-step primary distillation of one state.

    Returns ``(trajectory, final_state, residue_pool)``.  The primary yield is
    ``trajectory.cumulative_success_prob`` when the run converged, else 0.
    """
    cfg = cfg or DistillConfig()
    cfg = replace(cfg, d_tol=d_tol, max_iters=max_iters)
    return _run_single(state, Protocol.BIG_STEP, cfg)


def run_infinitesimal(
    state: TripartiteState,
    epsilon: float = 1e-3,
    d_tol: float = GHZ_TOL,
    max_steps: int = 10**6,
    cfg: DistillConfig | None = None,
):
    """Primary distillation by weak POVMs of strength ``epsilon``.

    Each step multiplies the |+> amplitude of the measured qubit by
    alpha = 1 - epsilon (or less, just enough to stop at p = 1/2).
    """
    cfg = cfg or DistillConfig()
    cfg = replace(cfg, epsilon=epsilon, d_tol=d_tol, max_steps=max_steps)
    return _run_single(state, Protocol.INFINITESIMAL, cfg)


@dataclass
class SampledRun:
    """One run with sampled measurement outcomes.

    ``residue`` is set when a failure outcome ended the run; otherwise
    ``terminal`` says why the success chain stopped.
    """

    steps: list[StepRecord]
    terminal: Terminal | None
    final_state: TripartiteState | None
    residue: BipartiteState | None

    @property
    def produced_ghz(self) -> bool:
        return self.terminal is Terminal.CONVERGED


def sample_run(
    state: TripartiteState, variant: Protocol, rng: np.random.Generator, cfg: DistillConfig | None = None
) -> SampledRun:
    """Run primary distillation drawing each POVM outcome at random."""
    if variant is Protocol.BASELINE:
        raise ValueError("baseline has no primary stage")
    cfg = cfg or DistillConfig()
    infinitesimal = variant is Protocol.INFINITESIMAL
    amps = state.amps.copy()
    steps: list[StepRecord] = []
    slot = 0
    while True:
        k = slot % 3
        gaps = _gaps(amps)
        if gaps.sum() < cfg.d_tol:
            return SampledRun(steps, Terminal.CONVERGED, TripartiteState.from_amplitudes(amps), None)
        if k == 0:
            if gaps.max() > 0.5 - cfg.product_tol:
                return SampledRun(steps, Terminal.PRODUCT, TripartiteState.from_amplitudes(amps), None)
            if gaps.sum() > 0.5 - TRIPLE_DP_MARGIN and _triple_test(amps, cfg.triple_tol)[0]:
                return SampledRun(steps, Terminal.TRIPLE, TripartiteState.from_amplitudes(amps), None)
            if not infinitesimal and slot // 3 >= cfg.max_iters:
                return SampledRun(steps, Terminal.MAX_STEPS, TripartiteState.from_amplitudes(amps), None)
        if infinitesimal and len(steps) >= cfg.max_steps:
            return SampledRun(steps, Terminal.MAX_STEPS, TripartiteState.from_amplitudes(amps), None)
        slot += 1
        alpha = float(_alpha_big_step(gaps[k]))
        if infinitesimal:
            alpha = max(alpha, 1.0 - cfg.epsilon)
        elif gaps[k] < cfg.d_tol / 3:
            continue
        succ, ps, res, pf = _povm(amps, k, alpha)
        if rng.random() >= float(ps):
            return SampledRun(steps, None, None, BipartiteState(PAIR_OF[k + 1], res, 1.0))
        amps = succ
        after = _gaps(amps)
        d_p, d_s, d_2 = _distances_from_gaps(after)
        steps.append(
            StepRecord(
                len(steps) + 1, k + 1, alpha, str(SCHMIDT), float(ps),
                float(d_p), float(d_s), float(d_2), _products_from_gaps(after),
            )
        )


def infinitesimal_step(state: TripartiteState, i: int, epsilon: float = 1e-3) -> PovmOutcome:
    """One weak Schmidt-basis POVM on subsystem ``i``, as used by :func:`run_infinitesimal`."""
    p = 0.5 + float(_gaps(state.amps)[i - 1])
    return povm_step(state, i, max(1.0 - epsilon, alpha_big_step(min(p, 1.0))))


def primary_yield(traj: TrajectoryRecord) -> float:
    return traj.cumulative_success_prob if traj.terminal is Terminal.CONVERGED else 0.0


def full_pipeline(state: TripartiteState, variant: Protocol, cfg: DistillConfig | None = None) -> YieldReport:
    """Primary distillation followed by secondary distillation of the residues."""
    cfg = cfg or DistillConfig()
    if variant is Protocol.BASELINE:
        return baseline_epr_first(state, cfg)
    if variant is Protocol.BIG_STEP:
        traj, _, pool = run_big_step(state, cfg.d_tol, cfg.max_iters, cfg)
    else:
        traj, _, pool = run_infinitesimal(state, cfg.epsilon, cfg.d_tol, cfg.max_steps, cfg)
    counts = secondary_yield(pool, cfg.epr_mode)
    return YieldReport(variant, primary_yield(traj), counts, combine_eprs(*counts), traj.terminal)


def baseline_batch(amps, cfg: DistillConfig = DistillConfig()) -> np.ndarray:
    """EPR counts (n, 3) of the baseline for a batch of states."""
    amps = np.asarray(amps, dtype=complex).reshape(-1, 8)
    return _extract_pairs(amps, np.ones(len(amps)), cfg)


def baseline_epr_first(state: TripartiteState, cfg: DistillConfig | None = None) -> YieldReport:
    """EPR-first baseline: measure one qubit to leave the best possible pair.

    For each qubit the measurement basis maximizing the expected EPR yield of
    the remaining pair is found; copies of the state are then split between
    measured qubits (see :func:`ghzdistill.assistance.allocate`) and the
    pairs combined into GHZ states.
    """
    cfg = cfg or DistillConfig()
    counts = baseline_batch(state.amps, cfg)[0]
    n = tuple(float(c) for c in counts)
    return YieldReport(Protocol.BASELINE, 0.0, n, combine_eprs(*n))


def best_measurement(state: TripartiteState, i: int, cfg: DistillConfig | None = None):
    """(expected pairs, theta, phi) of the best measurement of subsystem ``i``."""
    cfg = cfg or DistillConfig()
    v, th, ph = best_measurements(state.amps[None, :], i - 1, cfg.epr_mode, cfg.search)
    return float(v[0]), float(th[0]), float(ph[0])
