import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ghzdistill.povm import (
    SCHMIDT,
    MeasurementBasis,
    alpha_big_step,
    alpha_for_target,
    povm_step,
)
from ghzdistill.state import (
    TripartiteState,
    ghz_state,
    haar_random_state,
    local_probability,
    phase_distance,
    schmidt_decompose,
)


def state_with_p1(p):
    amps = np.zeros(8, dtype=complex)
    amps[0b000] = math.sqrt(p / 2)
    amps[0b011] = math.sqrt(p / 2)
    amps[0b101] = math.sqrt(1 - p)
    return TripartiteState(amps)


def test_alpha_big_step_values():
    assert alpha_big_step(0.5) == 1.0
    assert alpha_big_step(1.0) == 0.0
    assert alpha_big_step(0.8) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        alpha_big_step(0.4)


def test_alpha_for_target_values(rng):
    assert alpha_for_target(0.7, 0.7) == 1.0
    for p in rng.uniform(0.5, 1.0, 100):
        assert alpha_for_target(p, 0.5) == pytest.approx(alpha_big_step(p), rel=1e-12)
    # root of alpha^2 p / (alpha^2 p + 1 - p) = 0.79 at p = 0.8, by bisection
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if mid**2 * 0.8 / (mid**2 * 0.8 + 0.2) < 0.79 else (lo, mid)
    assert alpha_for_target(0.8, 0.79) == pytest.approx(lo, abs=1e-12)
    # 40-digit mpmath evaluation of the closed form
    assert alpha_for_target(0.8, 0.79) == pytest.approx(0.9697815168769667, abs=1e-15)
    with pytest.raises(ValueError):
        alpha_for_target(0.7, 0.8)


def test_basis_labels():
    assert MeasurementBasis.schmidt().is_schmidt
    assert str(SCHMIDT) == "schmidt"
    assert not MeasurementBasis.rotated(0.3).is_schmidt


def test_ghz_big_step_is_identity():
    out = povm_step(ghz_state(), 1, alpha_big_step(0.5))
    assert out.success_prob == 1.0
    assert out.failure_prob == 0.0
    assert phase_distance(out.success_state, ghz_state()) < 1e-15


def test_big_step_p08():
    s = state_with_p1(0.8)
    out = povm_step(s, 1, alpha_big_step(0.8))
    assert out.success_prob == pytest.approx(0.4, abs=1e-14)
    assert out.failure_prob == pytest.approx(0.6, abs=1e-14)
    assert local_probability(out.success_state, 1) == pytest.approx(0.5, abs=1e-12)
    view = schmidt_decompose(s, 1)
    assert out.failure_residue.pair == (2, 3)
    assert phase_distance(out.failure_residue.amps, view.phi_plus) < 1e-12
    expected = np.kron(view.plus_vec, view.phi_plus)
    assert phase_distance(out.failure_state, expected) < 1e-12


def test_bad_alpha():
    with pytest.raises(ValueError):
        povm_step(ghz_state(), 1, 1.2)


def test_ancilla_map_is_unitary():
    for a in np.linspace(0, 1, 101):
        u = oracles.ancilla_unitary(a)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)


@given(
    st.integers(0, 2**32 - 1),
    st.sampled_from([1, 2, 3]),
    st.floats(0.0, 1.0),
    st.one_of(st.just(0.0), st.floats(-math.pi, math.pi)),
)
@settings(max_examples=300, deadline=None)
def test_matches_explicit_ancilla(seed, i, alpha, theta):
    s = haar_random_state(np.random.default_rng(seed))
    out = povm_step(s, i, alpha, MeasurementBasis(theta))
    plus, minus = oracles.rotated_basis(s.amps, i, theta)
    succ, ps, fail, pf = oracles.ancilla_povm(s.amps, i, alpha, plus, minus)
    assert out.success_prob + out.failure_prob == pytest.approx(1.0, abs=1e-12)
    assert out.success_prob == pytest.approx(ps, abs=1e-10)
    assert out.failure_prob == pytest.approx(pf, abs=1e-10)
    if ps > 1e-12:
        assert np.linalg.norm(out.success_state.amps - succ) < 1e-10
    if pf > 1e-12:
        assert np.linalg.norm(out.failure_state.amps - fail) < 1e-10
        assert i not in out.failure_residue.pair
        assert local_probability(out.failure_state, i) == pytest.approx(1.0, abs=1e-10)


def test_postconditions_on_random_states(rng):
    for _ in range(2000):
        s = haar_random_state(rng)
        i = int(rng.integers(1, 4))
        p = local_probability(s, i)
        out = povm_step(s, i, alpha_big_step(p))
        assert local_probability(out.success_state, i) == pytest.approx(0.5, abs=1e-10)
        target = rng.uniform(0.5, p)
        out = povm_step(s, i, alpha_for_target(p, target))
        assert local_probability(out.success_state, i) == pytest.approx(target, abs=1e-10)
        assert abs(np.linalg.norm(out.success_state.amps) - 1) < 1e-12
        assert abs(np.linalg.norm(out.failure_residue.amps) - 1) < 1e-12


def test_theta_zero_equals_schmidt(rng):
    s = haar_random_state(rng)
    a = povm_step(s, 2, 0.3, MeasurementBasis.rotated(0.0))
    b = povm_step(s, 2, 0.3)
    np.testing.assert_array_equal(a.success_state.amps, b.success_state.amps)
