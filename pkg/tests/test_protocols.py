import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzdistill.assistance import SINGLE_SHOT, _objective, allocate
from ghzdistill.protocols import (
    DistillConfig,
    Protocol,
    ResiduePool,
    Terminal,
    _drive,
    baseline_epr_first,
    best_measurement,
    combine_eprs,
    full_pipeline,
    infinitesimal_step,
    primary_yield,
    run_big_step,
    run_infinitesimal,
    sample_run,
    secondary_yield,
)
from ghzdistill.special import golden_mean_state, random_triple_state
from ghzdistill.state import (
    BipartiteState,
    TripartiteState,
    _split,
    ghz_state,
    haar_amplitudes,
    haar_random_state,
    phase_distance,
    product_state,
)

EPR = np.array([1, 0, 0, 1]) / math.sqrt(2)
counts = st.floats(0, 1e6, allow_nan=False)


def test_config_validation():
    with pytest.raises(ValueError):
        DistillConfig(d_tol=0)
    with pytest.raises(ValueError):
        DistillConfig(epsilon=0.1)
    with pytest.raises(ValueError):
        DistillConfig(epr_mode="bogus")
    with pytest.raises(ValueError):
        DistillConfig(max_iters=0)


def test_ghz_converges_immediately():
    traj, final, pool = run_big_step(ghz_state())
    assert traj.terminal is Terminal.CONVERGED
    assert traj.steps == [] and len(pool) == 0
    assert primary_yield(traj) == 1.0
    traj, _, _ = run_infinitesimal(ghz_state())
    assert traj.terminal is Terminal.CONVERGED and primary_yield(traj) == 1.0
    assert full_pipeline(ghz_state(), Protocol.BIG_STEP).total_yield == 1.0


def test_triple_input_terminates_as_triple():
    amps = np.zeros(8, dtype=complex)
    amps[[1, 2, 4]] = [0.5, 0.6, math.sqrt(1 - 0.61)]
    traj, _, pool = run_big_step(TripartiteState(amps))
    assert traj.terminal is Terminal.TRIPLE and primary_yield(traj) == 0.0
    report = full_pipeline(golden_mean_state(), Protocol.BIG_STEP)
    assert report.primary_yield == 0.0
    assert report.total_yield == report.secondary_ghz > 0
    assert pool.total_weight == pytest.approx(1.0, abs=1e-10)


def test_product_input():
    s = product_state(1, [1, 0], EPR)
    for variant in (Protocol.BIG_STEP, Protocol.INFINITESIMAL):
        r = full_pipeline(s, variant)
        assert r.terminal is Terminal.PRODUCT
        assert r.total_yield == 0.0
        assert r.epr_counts == pytest.approx((0.0, 1.0, 0.0))


def test_weight_conservation_and_cumulative_product(rng):
    for _ in range(100):
        s = haar_random_state(rng)
        traj, _, pool = run_big_step(s)
        assert traj.cumulative_success_prob == pytest.approx(math.prod(r.success_prob for r in traj.steps), rel=1e-12)
        assert 0 < traj.cumulative_success_prob <= 1
        primary = traj.cumulative_success_prob if traj.terminal is Terminal.CONVERGED else 0.0
        assert primary + pool.total_weight == pytest.approx(1.0, abs=1e-10)


def test_weight_conservation_for_unconverged_runs(rng):
    s = haar_random_state(rng)
    traj, _, pool = run_big_step(s, max_iters=1)
    assert traj.terminal is Terminal.MAX_STEPS
    assert pool.total_weight == pytest.approx(1.0, abs=1e-10)
    assert set(pool.by_pair()) == {(1, 2), (2, 3), (1, 3)}


def test_big_step_dp_monotone(rng):
    for _ in range(200):
        traj, _, _ = run_big_step(haar_random_state(rng))
        d = [r.d_p for r in traj.steps]
        assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))


def test_trajectory_jsonl_fields(rng):
    traj, _, _ = run_big_step(haar_random_state(rng))
    lines = traj.to_jsonl().splitlines()
    assert len(lines) == len(traj.steps) > 0
    rec = json.loads(lines[0])
    assert set(rec) == {"step", "subsystem", "alpha", "success_prob", "d_p", "d_s", "d_2"}
    assert rec["step"] == 1 and rec["subsystem"] == 1


def test_secondary_yield_examples():
    pool = ResiduePool()
    pool.add(BipartiteState((2, 3), EPR, 0.6))
    assert secondary_yield(pool) == pytest.approx((0.0, 0.6, 0.0))
    pool = ResiduePool([BipartiteState((1, 2), [1, 0, 0, 0], 0.3), BipartiteState((1, 3), [0, 1, 0, 0], 0.7)])
    assert secondary_yield(pool) == (0.0, 0.0, 0.0)
    pool = ResiduePool([BipartiteState((1, 2), [math.sqrt(0.8), 0, 0, math.sqrt(0.2)], 0.5)])
    # 0.5 * H(0.8), H evaluated with mpmath
    assert secondary_yield(pool)[0] == pytest.approx(0.36096404744368116, abs=1e-14)


def test_combine_examples():
    assert combine_eprs(10, 10, 10) == 15
    assert combine_eprs(0, 0, 0) == 0
    assert combine_eprs(10, 2, 3) == 5
    with pytest.raises(ValueError):
        combine_eprs(-1, 0, 0)


@given(counts, counts, counts, st.floats(0, 100))
@settings(max_examples=300)
def test_combine_symmetric_and_homogeneous(a, b, c, lam):
    v = combine_eprs(a, b, c)
    for perm in ((b, a, c), (c, b, a), (a, c, b)):
        assert combine_eprs(*perm) == pytest.approx(v, rel=1e-12, abs=1e-12)
    assert combine_eprs(lam * a, lam * b, lam * c) == pytest.approx(lam * v, rel=1e-9, abs=1e-6)


def test_combine_continuous_at_boundary():
    assert combine_eprs(5, 2, 3) == pytest.approx(5)
    assert combine_eprs(5 + 1e-12, 2, 3) == pytest.approx(5, abs=1e-11)


def test_baseline_examples():
    assert best_measurement(ghz_state(), 1)[0] == pytest.approx(1.0, abs=1e-9)
    r = baseline_epr_first(ghz_state())
    assert sum(r.epr_counts) == pytest.approx(1.0, abs=1e-9)
    assert r.total_yield == pytest.approx(0.5, abs=1e-9)
    assert r.primary_yield == 0.0
    r = baseline_epr_first(product_state(1, [1, 0], EPR))
    assert r.epr_counts == pytest.approx((0.0, 1.0, 0.0), abs=1e-9)
    assert r.total_yield == pytest.approx(0.0, abs=1e-9)


def test_baseline_measurement_is_local_maximum(rng):
    delta = 1e-4
    for _ in range(30):
        s = haar_random_state(rng)
        for i in (1, 2, 3):
            v, th, ph = best_measurement(s, i)
            m = _split(s.amps[None, :], i - 1)
            steps = np.array([(a, b) for a in (-delta, 0, delta) for b in (-delta, 0, delta)])
            vals = _objective(m, th + steps[None, :, 0], ph + steps[None, :, 1], "asymptotic")
            assert vals.max() <= v + 1e-9


def test_allocation_modes():
    best = np.array([[0.4, 0.4, 0.1], [0.0, 0.0, 0.7], [0.0, 0.0, 0.0]])
    x = allocate(best)
    np.testing.assert_allclose(x[0], [0.5, 0.5, 0.0])
    np.testing.assert_allclose(x[1], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(x.sum(axis=1), 1.0)
    np.testing.assert_allclose(allocate(best, "greedy")[0], [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        allocate(best, "global")


def test_single_shot_never_beats_asymptotic(rng):
    cfg = DistillConfig(epr_mode=SINGLE_SHOT)
    for _ in range(20):
        s = haar_random_state(rng)
        a = full_pipeline(s, Protocol.BIG_STEP)
        b = full_pipeline(s, Protocol.BIG_STEP, cfg)
        assert b.primary_yield == a.primary_yield
        assert all(y <= x + 1e-12 for x, y in zip(a.epr_counts, b.epr_counts))


def test_batch_matches_single_runs(rng):
    amps = haar_amplitudes(rng, 40)
    for variant in (Protocol.BIG_STEP, Protocol.INFINITESIMAL):
        batch = _drive(amps, variant, DistillConfig())
        for j in (0, 7, 39):
            r = full_pipeline(TripartiteState(amps[j]), variant)
            assert batch.primary[j] == pytest.approx(r.primary_yield, abs=1e-12)
            assert batch.secondary[j] == pytest.approx(r.secondary_ghz, abs=1e-12)


def test_infinitesimal_per_cycle_monotone(rng):
    # per step, a move on one qubit may lower another qubit's p(1 - p) at first
    # order in epsilon; over a full cycle the first-order terms cancel and only
    # the floor at p = 1/2 leaves an O(epsilon^2) remainder
    eps = 1e-3
    amps = haar_amplitudes(rng, 30)
    prev = {}
    nsteps = np.zeros(len(amps), dtype=int)
    worst = [0.0]

    def on_step(idx, k, alpha, ps, succ):
        from ghzdistill.state import _gaps

        prod = 0.25 - _gaps(succ) ** 2
        nsteps[idx] += 1
        for j, row in enumerate(idx):
            if nsteps[row] % 3 == 0:
                if row in prev:
                    worst[0] = max(worst[0], float((prev[row] - prod[j]).max()))
                prev[row] = prod[j]

    _drive(amps, Protocol.INFINITESIMAL, DistillConfig(epsilon=eps), on_step=on_step)
    assert worst[0] < eps**2


def test_infinitesimal_cycle_fixes_half_dp_triples(rng):
    for _ in range(50):
        w = rng.dirichlet(np.ones(3))
        while w.max() > 0.5:
            w = rng.dirichlet(np.ones(3))
        amps = np.zeros(8, dtype=complex)
        amps[[1, 2, 4]] = np.sqrt(w) * np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
        s0 = s = TripartiteState.from_amplitudes(amps)
        for n in range(30):
            s = infinitesimal_step(s, n % 3 + 1).success_state
        assert phase_distance(s, s0) < 1e-10


def test_infinitesimal_yield_beats_big_step_on_average(rng):
    amps = haar_amplitudes(rng, 60)
    big = _drive(amps, Protocol.BIG_STEP, DistillConfig())
    inf = _drive(amps, Protocol.INFINITESIMAL, DistillConfig())
    assert inf.total.mean() > big.total.mean()
    assert np.all(inf.terminal == 0)


def test_sampling_mode_agrees_with_expectation(rng):
    s = haar_random_state(rng)
    expected = full_pipeline(s, Protocol.BIG_STEP).primary_yield
    n = 4000
    hits = sum(sample_run(s, Protocol.BIG_STEP, rng).produced_ghz for _ in range(n))
    sigma = math.sqrt(n * expected * (1 - expected))
    assert abs(hits - n * expected) < 4 * sigma
    r = sample_run(ghz_state(), Protocol.INFINITESIMAL, rng)
    assert r.produced_ghz and r.steps == []


def test_random_triple_runs_produce_no_ghz(rng):
    for _ in range(20):
        assert full_pipeline(random_triple_state(rng), Protocol.INFINITESIMAL).primary_yield == 0.0
