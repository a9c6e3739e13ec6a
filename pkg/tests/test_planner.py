import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

from liftctl import (
    AffineSystem,
    Chain,
    ConstantField,
    LinearField,
    LinearGramianOracle,
    Manifold,
    PlanningBudgetError,
    SearchOracle,
    SphereRotationOracle,
    TangentMetric,
    TangentPoint,
    UncontrollablePairError,
    check_fiber_reachability,
    compose_chains,
    distance,
    integrate_base,
    integrate_lifted,
    plan_chain,
    reachable_sample,
    steer,
    verify_chain,
    zero_field,
)
from liftctl.planner import sample_control_signals

ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])
L3 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
L1 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


def line_system():
    return AffineSystem(Manifold.flat(1), zero_field(1),
                        (ConstantField([1.0]),), [[-10.0, 10.0]])


def integrator_system():
    return AffineSystem(Manifold.flat(2), zero_field(2),
                        (ConstantField([1.0, 0.0]), ConstantField([0.0, 1.0])),
                        [[-10.0, 10.0], [-10.0, 10.0]])


def forced_rotation_system():
    return AffineSystem(Manifold.flat(2), LinearField(ROT2),
                        (ConstantField([1.0, 0.0]), ConstantField([0.0, 1.0])),
                        [[-10.0, 10.0], [-10.0, 10.0]])


def sphere_system():
    return AffineSystem(Manifold.sphere2(), zero_field(3),
                        (LinearField(L3), LinearField(L1)),
                        [[-1.0, 1.0], [-1.0, 1.0]])


# --- steering ---------------------------------------------------------------

def test_gramian_steer_integrator_constant_control():
    sys = integrator_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    duration, sig = steer(oracle, np.zeros(2), np.array([1.0, 0.0]))
    assert duration == pytest.approx(1.0)
    assert len(sig.segments) == 64
    values = np.array([v for _, v in sig.segments])
    assert np.allclose(values, [1.0, 0.0], atol=1e-9)
    end = integrate_base(sys, np.zeros(2), sig, 1e-3).final_state
    assert np.linalg.norm(end - [1.0, 0.0]) <= 1e-6


def test_gramian_steer_same_point_zero_control():
    sys = integrator_system()
    oracle = LinearGramianOracle.for_system(sys)
    x = np.array([0.4, -0.2])
    _, sig = steer(oracle, x, x)
    assert np.allclose([v for _, v in sig.segments], 0.0, atol=1e-12)


def test_gramian_steer_with_drift():
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    rng = np.random.default_rng(60)
    for _ in range(5):
        x = rng.uniform(-1, 1, 2)
        y = rng.uniform(-1, 1, 2)
        _, sig = steer(oracle, x, y)
        end = integrate_base(sys, x, sig, 1e-3).final_state
        assert np.linalg.norm(end - y) <= 1e-6


def test_gramian_singular_pair_raises():
    # second state unreachable: B only feeds the first component, A diagonal
    with pytest.raises(UncontrollablePairError):
        LinearGramianOracle(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]]))


def test_sphere_rotation_steer_quarter_turn():
    sys = sphere_system()
    oracle = SphereRotationOracle.for_system(sys)
    duration, sig = steer(oracle, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    assert duration == pytest.approx(np.pi / 2.0)
    assert len(sig.segments) == 1
    assert np.allclose(sig.segments[0][1], [1.0, 0.0])
    end = integrate_base(sys, [1.0, 0.0, 0.0], sig, 1e-3).final_state
    assert np.linalg.norm(end - [0.0, 1.0, 0.0]) <= 1e-3


def test_sphere_rotation_steer_random_pairs():
    sys = sphere_system()
    oracle = SphereRotationOracle.for_system(sys)
    m = sys.manifold
    rng = np.random.default_rng(61)
    for _ in range(10):
        x = m.random_point(rng)
        y = m.random_point(rng)
        _, sig = steer(oracle, x, y)
        end = integrate_base(sys, x, sig, 1e-3).final_state
        assert m.base_distance(end, y) <= 1e-6


def test_search_oracle_line():
    sys = line_system()
    oracle = SearchOracle(sys, t_max=3.0)
    duration, sig = steer(oracle, np.array([0.0]), np.array([1.0]))
    end = integrate_base(sys, [0.0], sig, 1e-2).final_state
    assert abs(end[0] - 1.0) <= 1e-3
    assert duration > 0.0


def bilinear_rotation_system():
    return AffineSystem(Manifold.flat(2), LinearField(ROT2),
                        (LinearField(np.eye(2)),), [[-2.0, 2.0]])


def test_search_oracle_bilinear_rotation():
    sys = bilinear_rotation_system()
    oracle = SearchOracle(sys)
    x = np.array([1.0, 0.0])
    y = np.array([0.2, 0.9])
    _, sig = steer(oracle, x, y)
    end = integrate_base(sys, x, sig, 1e-2).final_state
    assert np.linalg.norm(end - y) <= 1e-3


def test_plan_chain_with_search_oracle():
    """The generic steering fallback supports the whole chain pipeline."""
    sys = bilinear_rotation_system()
    oracle = SearchOracle(sys)
    metric = TangentMetric.for_manifold(sys.manifold)
    source = TangentPoint([1.0, 0.0], [0.3, 0.1])
    target = TangentPoint([0.2, 0.9], [0.0, 0.5])
    chain = plan_chain(sys, oracle, metric, source, target, 0.25, 0.5)
    report = verify_chain(sys, metric, chain)
    assert report.passed, report.messages


# --- reachable sets ----------------------------------------------------------

def test_reachable_sample_zero_horizon():
    sys = forced_rotation_system()
    p0 = TangentPoint([1.0, 0.0], [0.0, 1.0])
    points = reachable_sample(sys, p0, 0.0, 10, seed=5)
    for p in points:
        assert np.array_equal(p.x, p0.x)
        assert np.array_equal(p.v, p0.v)


def test_reachable_sample_zero_fields():
    sys = AffineSystem(Manifold.flat(2), zero_field(2), (zero_field(2),),
                       [[-1.0, 1.0]])
    p0 = TangentPoint([0.5, 0.5], [1.0, -1.0])
    for p in reachable_sample(sys, p0, 2.0, 5, seed=6):
        assert np.allclose(p.x, p0.x, atol=1e-12)
        assert np.allclose(p.v, p0.v, atol=1e-12)


def test_reachable_sample_projection_consistency():
    """Base projections of the sampled lifted endpoints coincide bitwise with
    the base integrations under the same controls."""
    sys = forced_rotation_system()
    p0 = TangentPoint([1.0, 0.0], [0.0, 1.0])
    seed = 7
    n = 500
    step = 1e-2  # the identity is grid-independent; coarse keeps this fast
    points = reachable_sample(sys, p0, 1.5, n, seed=seed, step=step)
    signals = sample_control_signals(sys.bounds, 1.5, n, seed)
    assert len(points) == len(signals)
    for p, sig in zip(points, signals):
        if not sig.segments:
            assert np.array_equal(p.x, p0.x)
            continue
        base = integrate_base(sys, p0.x, sig, step)
        assert np.array_equal(p.x, base.final_state)


def test_reachable_sample_deterministic():
    sys = forced_rotation_system()
    p0 = TangentPoint([1.0, 0.0], [0.0, 1.0])
    a = reachable_sample(sys, p0, 1.0, 8, seed=9)
    b = reachable_sample(sys, p0, 1.0, 8, seed=9)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.x, pb.x)
        assert np.array_equal(pa.v, pb.v)


# --- fiber reachability -------------------------------------------------------

def test_fiber_reachability_constant_fields_freeze_fiber():
    sys = integrator_system()
    oracle = LinearGramianOracle.for_system(sys)
    p0 = TangentPoint([0.0, 0.0], [1.0, 1.0])
    witness = check_fiber_reachability(sys, oracle, p0, np.array([2.0, 0.0]))
    assert np.linalg.norm(witness.endpoint.x - [2.0, 0.0]) <= 1e-6
    assert np.allclose(witness.endpoint.v, [1.0, 1.0], atol=1e-9)


def test_fiber_reachability_trivial_pair():
    sys = integrator_system()
    oracle = LinearGramianOracle.for_system(sys)
    p0 = TangentPoint([0.3, -0.3], [1.0, 0.0])
    witness = check_fiber_reachability(sys, oracle, p0, p0.x)
    # zero-value plan holds the base still and the fiber frozen
    assert np.linalg.norm(witness.endpoint.x - p0.x) <= 1e-9
    assert np.allclose(witness.endpoint.v, p0.v, atol=1e-9)


def test_fiber_reachability_matches_variational_oracle():
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    rng = np.random.default_rng(62)
    for _ in range(5):
        p0 = TangentPoint(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        y = rng.uniform(-1, 1, 2)
        witness = check_fiber_reachability(sys, oracle, p0, y)
        # constant controlled fields: the fiber flow is exactly e^{A t}
        expected = expm(ROT2 * witness.duration) @ p0.v
        assert np.linalg.norm(witness.endpoint.v - expected) <= 1e-6


# --- chains -------------------------------------------------------------------

def test_plan_chain_line_jump_count_bound():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    source = TangentPoint([0.0], [0.0])
    target = TangentPoint([0.0], [1.0])
    chain = plan_chain(sys, oracle, metric, source, target, 0.25, 0.5)
    assert len(chain.legs) >= 4  # ceil(|dv| / eps)
    assert len(chain.legs) <= 12
    report = verify_chain(sys, metric, chain)
    assert report.passed, report.messages
    for leg in chain.legs:
        assert leg.duration > 0.5


def test_plan_chain_single_leg_when_flow_hits_target():
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    source = TangentPoint([0.4, -0.1], [0.3, 0.8])
    _, sig = oracle.solve(source.x, np.array([-0.5, 0.7]))
    target = integrate_lifted(sys, source, sig, 1e-3).final_point
    chain = plan_chain(sys, oracle, metric, source, target, 0.25, 0.5)
    assert len(chain.legs) == 1
    assert verify_chain(sys, metric, chain).passed
    # zero jump: the flow endpoint itself is within rounding of the target
    assert chain.legs[0].verified_distance <= 1e-9


def test_plan_chain_forced_rotation_random_pairs():
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    rng = np.random.default_rng(63)
    for eps in (0.25, 0.1):
        source = TangentPoint(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        target = TangentPoint(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        chain = plan_chain(sys, oracle, metric, source, target, eps, 0.5)
        assert len(chain.legs) <= 200
        report = verify_chain(sys, metric, chain)
        assert report.passed, report.messages


def test_plan_chain_source_equals_target():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    p = TangentPoint([0.0], [0.5])
    chain = plan_chain(sys, oracle, metric, p, p, 0.25, 0.5)
    assert len(chain.legs) == 1
    assert verify_chain(sys, metric, chain).passed


def test_plan_chain_sphere():
    sys = sphere_system()
    oracle = SphereRotationOracle.for_system(sys)
    metric = TangentMetric.for_manifold(sys.manifold)
    m = sys.manifold
    rng = np.random.default_rng(64)
    x = m.random_point(rng)
    y = m.random_point(rng)
    source = TangentPoint(x, m.random_tangent(x, rng))
    target = TangentPoint(y, m.random_tangent(y, rng))
    chain = plan_chain(sys, oracle, metric, source, target, 0.3, 0.3)
    report = verify_chain(sys, metric, chain)
    assert report.passed, report.messages


def test_plan_chain_budget_error_carries_partial():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    source = TangentPoint([0.0], [0.0])
    target = TangentPoint([0.0], [5.0])
    with pytest.raises(PlanningBudgetError) as err:
        plan_chain(sys, oracle, metric, source, target, 0.25, 0.5, max_legs=3)
    assert err.value.best_chain is not None
    assert len(err.value.best_chain.legs) <= 3


def test_chain_invariants_and_structure():
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    source = TangentPoint([0.5, 0.5], [1.0, 0.0])
    target = TangentPoint([-0.5, 0.2], [0.0, 1.0])
    chain = plan_chain(sys, oracle, metric, source, target, 0.25, 0.5)
    assert np.array_equal(chain.legs[0].start.x, source.x)
    assert np.array_equal(chain.legs[0].start.v, source.v)
    last = chain.legs[-1].jump_target
    assert np.array_equal(last.x, target.x) and np.array_equal(last.v, target.v)
    for prev, nxt in zip(chain.legs, chain.legs[1:]):
        assert np.array_equal(prev.jump_target.x, nxt.start.x)
        assert np.array_equal(prev.jump_target.v, nxt.start.v)
    for leg in chain.legs[:-1]:
        # intermediate jumps never move the base point
        end = integrate_lifted(sys, leg.start, leg.control, chain.step).final_point
        assert np.array_equal(end.x, leg.jump_target.x)
        assert distance(metric, end, leg.jump_target) <= chain.epsilon


def test_verify_chain_rejects_short_leg():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    chain = plan_chain(sys, oracle, metric, TangentPoint([0.0], [0.0]),
                       TangentPoint([0.0], [1.0]), 0.25, 0.5)
    bad_leg = dataclasses.replace(chain.legs[0], duration=0.3)
    bad = dataclasses.replace(chain, legs=(bad_leg,) + chain.legs[1:])
    report = verify_chain(sys, metric, bad)
    assert not report.passed
    assert not report.legs[0].duration_ok
    assert any("leg 0" in msg for msg in report.messages)


def test_verify_chain_rejects_oversized_jump():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    chain = plan_chain(sys, oracle, metric, TangentPoint([0.0], [0.0]),
                       TangentPoint([0.0], [1.0]), 0.25, 0.5)
    idx = 0
    leg = chain.legs[idx]
    moved = TangentPoint(leg.jump_target.x, leg.jump_target.v + 0.5)
    legs = list(chain.legs)
    legs[idx] = dataclasses.replace(leg, jump_target=moved)
    if idx + 1 < len(legs):
        legs[idx + 1] = dataclasses.replace(legs[idx + 1], start=moved)
    bad = dataclasses.replace(chain, legs=tuple(legs))
    report = verify_chain(sys, metric, bad)
    assert not report.passed
    assert not report.legs[idx].distance_ok


def test_chain_composition():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    p = TangentPoint([0.0], [0.0])
    q = TangentPoint([0.0], [0.6])
    r = TangentPoint([0.0], [1.2])
    first = plan_chain(sys, oracle, metric, p, q, 0.25, 0.5)
    second = plan_chain(sys, oracle, metric, q, r, 0.25, 0.5)
    combined = compose_chains(first, second)
    assert verify_chain(sys, metric, combined).passed
    assert len(combined.legs) == len(first.legs) + len(second.legs)


def test_monotone_refinement():
    """A chain verified at epsilon also verifies at any larger epsilon."""
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    chain = plan_chain(sys, oracle, metric, TangentPoint([0.3, 0.0], [0.0, 0.4]),
                       TangentPoint([0.0, 0.3], [0.9, 0.0]), 0.1, 0.5)
    relaxed = dataclasses.replace(chain, epsilon=0.25)
    assert verify_chain(sys, metric, relaxed).passed


def test_chain_json_round_trip():
    sys = line_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    chain = plan_chain(sys, oracle, metric, TangentPoint([0.0], [0.0]),
                       TangentPoint([0.0], [1.0]), 0.25, 0.5)
    payload = chain.to_json()
    back = Chain.from_json(payload)
    assert back.epsilon == chain.epsilon
    assert back.min_duration == chain.min_duration
    assert len(back.legs) == len(chain.legs)
    assert verify_chain(sys, metric, back).passed


def test_plan_chain_deterministic():
    sys = forced_rotation_system()
    oracle = LinearGramianOracle.for_system(sys, horizon=1.0)
    metric = TangentMetric.for_manifold(sys.manifold)
    source = TangentPoint([0.5, 0.5], [1.0, 0.0])
    target = TangentPoint([-0.5, 0.2], [0.0, 1.0])
    a = plan_chain(sys, oracle, metric, source, target, 0.25, 0.5)
    b = plan_chain(sys, oracle, metric, source, target, 0.25, 0.5)
    assert a.to_json() == b.to_json()
