"""Steering oracles, sampled reachable sets, and the constructive
chain-controllability algorithm with an independent verifier.

A chain from p to q is a sequence of legs: flow the lifted system for longer
than the minimum duration, then jump by at most epsilon (in the tangent
metric) to the start of the next leg. The planner walks the base along
steered plans, and moves the fiber by jumping toward the pullback of the
target vector through the remaining planned flow. Because the fiber flow is
linear, a jump of size s toward the pullback reduces the terminal fiber gap
by s whenever the variational flow is norm-preserving; expansion beyond the
leg budget raises an error carrying the best partial chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import PlanningBudgetError, SteeringFailure, UncontrollablePairError
from .fields import ConstantField, LinearField
from .flow import (
    DEFAULT_STEP,
    AffineSystem,
    ControlSignal,
    integrate_base,
    integrate_lifted,
    split_signal,
)
from .manifold import Manifold, ManifoldKind, TangentPoint
from .sasaki import TangentMetric, distance, fiber_segment_point

GRAMIAN_STEER_TOL = 1e-6
SEARCH_STEER_TOL = 1e-3

# Leg durations exceed the chain's T by this relative margin, and jumps stay
# inside epsilon by the same idea, so the verifier's strict inequalities hold
# after re-integration at half step.
DURATION_MARGIN = 1e-3
JUMP_MARGIN = 1e-6


class LinearGramianOracle:
    """Minimum-energy steering for dx/dt = A x + B u over a fixed horizon.

    The control is piecewise constant on n_segments; the segment values are
    the minimum-energy solution of the sampled system (Gramian of the
    zero-order-hold discretization), which reaches the target exactly up to
    linear-algebra precision. A naive sampling of the continuous-time control
    law would leave an O((T/n)^2) endpoint error, violating the steering
    tolerance.
    """

    steer_tol = GRAMIAN_STEER_TOL

    def __init__(self, a_matrix, b_matrix, horizon: float = 1.0, n_segments: int = 64):
        self.a = np.asarray(a_matrix, dtype=float)
        self.b = np.asarray(b_matrix, dtype=float)
        if self.b.ndim == 1:
            self.b = self.b.reshape(-1, 1)
        self.horizon = float(horizon)
        self.n_segments = int(n_segments)
        n = self.a.shape[0]
        h = self.horizon / self.n_segments
        # one-step transition and the integral of the matrix exponential
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = self.a * h
        aug[:n, n:] = np.eye(n) * h
        phi = expm(aug)
        self._step_exp = phi[:n, :n]
        step_int = phi[:n, n:]
        gamma = step_int @ self.b
        gammas = [gamma]
        for _ in range(self.n_segments - 1):
            gammas.append(self._step_exp @ gammas[-1])
        gammas.reverse()  # gammas[k] = e^{A (T - t_{k+1})} S B
        self._gammas = gammas
        self._full_exp = expm(self.a * self.horizon)
        self._gram = sum(g @ g.T for g in gammas)
        sigma = np.linalg.svd(self._gram, compute_uv=False)
        if sigma[-1] < 1e-10 * sigma[0]:
            raise UncontrollablePairError(
                f"Gramian numerically singular: sigma_min/sigma_max = {sigma[-1] / sigma[0]:.2e}"
            )

    @staticmethod
    def for_system(sys: AffineSystem, horizon: float = 1.0,
                   n_segments: int = 64) -> "LinearGramianOracle":
        if not sys.manifold.is_flat:
            raise SteeringFailure("Gramian oracle requires a flat manifold")
        n = sys.manifold.ambient_dim
        if isinstance(sys.drift, LinearField):
            a = sys.drift.matrix
        elif isinstance(sys.drift, ConstantField) and not np.any(sys.drift.vector):
            a = np.zeros((n, n))
        else:
            raise SteeringFailure("Gramian oracle requires a linear (or zero) drift")
        cols = []
        for fld in sys.controlled:
            if not isinstance(fld, ConstantField):
                raise SteeringFailure("Gramian oracle requires constant controlled fields")
            cols.append(fld.vector)
        return LinearGramianOracle(a, np.column_stack(cols), horizon, n_segments)

    def solve(self, x: np.ndarray, y: np.ndarray) -> tuple[float, ControlSignal]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        residual = y - self._full_exp @ x
        lam = np.linalg.solve(self._gram, residual)
        h = self.horizon / self.n_segments
        segments = tuple((h, g.T @ lam) for g in self._gammas)
        return self.horizon, ControlSignal(segments)


def _skew_axis(matrix: np.ndarray) -> np.ndarray:
    if np.max(np.abs(matrix + matrix.T)) > 1e-10:
        raise SteeringFailure("rotation oracle requires skew-symmetric generators")
    return np.array([matrix[2, 1], matrix[0, 2], matrix[1, 0]])


class SphereRotationOracle:
    """Closed-form steering on the sphere by composing rotations about two
    orthogonal axes (constant controls, at most three segments)."""

    steer_tol = GRAMIAN_STEER_TOL

    def __init__(self, generators, bounds):
        # generators: list of (channel, so(3) matrix); pick an orthogonal pair
        self.n_channels = len(bounds)
        axes = [(chan, _skew_axis(m)) for chan, m in generators]
        pair = None
        for i in range(len(axes)):
            for j in range(len(axes)):
                if i == j:
                    continue
                ai, aj = axes[i][1], axes[j][1]
                ni, nj = np.linalg.norm(ai), np.linalg.norm(aj)
                if ni < 1e-12 or nj < 1e-12:
                    continue
                if abs((ai / ni) @ (aj / nj)) < 1e-9:
                    pair = (axes[i], axes[j])
                    break
            if pair:
                break
        if pair is None:
            raise SteeringFailure("rotation oracle needs two orthogonal rotation axes")
        (self.primary_chan, p_axis), (self.secondary_chan, s_axis) = pair
        self.primary_speed = float(np.linalg.norm(p_axis))
        self.secondary_speed = float(np.linalg.norm(s_axis))
        p = p_axis / self.primary_speed
        s = s_axis / self.secondary_speed
        self.frame = np.column_stack([s, np.cross(p, s), p])
        self.bounds = np.asarray(bounds, dtype=float)
        for chan in (self.primary_chan, self.secondary_chan):
            lo, hi = self.bounds[chan]
            if min(hi, -lo) <= 0.0:
                raise SteeringFailure("rotation oracle needs symmetric control authority")

    @staticmethod
    def for_system(sys: AffineSystem) -> "SphereRotationOracle":
        if sys.manifold.kind is not ManifoldKind.SPHERE2:
            raise SteeringFailure("rotation oracle requires the sphere")
        drift_zero = isinstance(sys.drift, ConstantField) and not np.any(sys.drift.vector)
        if not drift_zero:
            raise SteeringFailure("rotation oracle requires a driftless system")
        gens = []
        for chan, fld in enumerate(sys.controlled):
            if isinstance(fld, LinearField):
                gens.append((chan, fld.matrix))
        return SphereRotationOracle(gens, sys.bounds)

    def _segment(self, channel: int, speed: float, angle: float):
        if abs(angle) < 1e-12:
            return None
        lo, hi = self.bounds[channel]
        mag = min(hi, -lo, 1.0)
        value = np.zeros(self.n_channels)
        value[channel] = math.copysign(mag, angle)
        return (abs(angle) / (speed * mag), value)

    def solve(self, x: np.ndarray, y: np.ndarray) -> tuple[float, ControlSignal]:
        xi = self.frame.T @ np.asarray(x, dtype=float)
        eta = self.frame.T @ np.asarray(y, dtype=float)
        # rotate about the primary axis to azimuth pi/2, tilt about the
        # secondary axis to the target latitude, rotate to the target azimuth
        alpha = math.remainder(0.5 * math.pi - math.atan2(xi[1], xi[0]), 2.0 * math.pi)
        a0 = math.atan2(xi[2], math.hypot(xi[0], xi[1]))
        beta = math.asin(min(1.0, max(-1.0, eta[2]))) - a0
        gamma = math.remainder(math.atan2(eta[1], eta[0]) - 0.5 * math.pi, 2.0 * math.pi)
        segments = []
        for chan, speed, angle in (
            (self.primary_chan, self.primary_speed, alpha),
            (self.secondary_chan, self.secondary_speed, beta),
            (self.primary_chan, self.primary_speed, gamma),
        ):
            seg = self._segment(chan, speed, angle)
            if seg is not None:
                segments.append(seg)
        sig = ControlSignal(tuple(segments))
        return sig.total_duration, sig


class SearchOracle:
    """Coarse-to-fine grid search over constant controls and durations.

    Candidate plans are integrated with a step proportional to their duration,
    coarse enough to keep the search cheap and far below the steering
    tolerance in accuracy.
    """

    steer_tol = SEARCH_STEER_TOL

    def __init__(self, sys: AffineSystem, budget: int = 12000, t_max: float = 8.0,
                 levels: int = 10, eval_step: float = 1e-2):
        self.sys = sys
        self.budget = int(budget)
        self.t_max = float(t_max)
        self.levels = int(levels)
        self.eval_step = float(eval_step)

    def _endpoint_error(self, x, y, u, t) -> float:
        step = max(self.eval_step, t / 120.0)
        traj = integrate_base(self.sys, x, ControlSignal.constant(u, t), step)
        return self.sys.manifold.base_distance(traj.final_state, y)

    def solve(self, x: np.ndarray, y: np.ndarray) -> tuple[float, ControlSignal]:
        m = self.sys.n_controls
        if self.sys.manifold.base_distance(x, y) <= self.steer_tol:
            return 0.0, ControlSignal.empty()
        t_lo, t_hi = self.eval_step, self.t_max
        u_lo = self.sys.bounds[:, 0].copy()
        u_hi = self.sys.bounds[:, 1].copy()
        best = (np.inf, None, None)
        evals = 0
        for _ in range(self.levels):
            t_grid = np.linspace(t_lo, t_hi, 9)
            u_grids = [np.linspace(u_lo[i], u_hi[i], 5) for i in range(m)]
            mesh = np.stack(np.meshgrid(*u_grids, indexing="ij"), axis=-1).reshape(-1, m)
            for t in t_grid:
                for u in mesh:
                    if evals >= self.budget:
                        break
                    evals += 1
                    err = self._endpoint_error(x, y, u, float(t))
                    if err < best[0]:
                        best = (err, float(t), u.copy())
            if best[1] is None or evals >= self.budget or best[0] <= self.steer_tol:
                break
            # shrink every range around the incumbent
            t_span = 0.2 * (t_hi - t_lo)
            t_lo = max(self.eval_step, best[1] - t_span)
            t_hi = min(self.t_max, best[1] + t_span)
            for i in range(m):
                span = 0.2 * (u_hi[i] - u_lo[i])
                u_lo[i] = max(self.sys.bounds[i, 0], best[2][i] - span)
                u_hi[i] = min(self.sys.bounds[i, 1], best[2][i] + span)
        if best[0] > self.steer_tol:
            raise SteeringFailure(
                f"search budget exhausted: best endpoint error {best[0]:.3e}"
            )
        return best[1], ControlSignal.constant(best[2], best[1])


def steer(oracle, x: np.ndarray, y: np.ndarray) -> tuple[float, ControlSignal]:
    """Ask the oracle for a plan from x to y."""
    return oracle.solve(x, y)


def sample_control_signals(bounds, horizon: float, n_samples: int, seed: int):
    """Deterministic random piecewise-constant signals: duration uniform in
    (0, horizon], at most 8 segments, values uniform within the bounds."""
    bounds = np.asarray(bounds, dtype=float)
    rng = np.random.default_rng(seed)
    signals = []
    for _ in range(n_samples):
        if horizon <= 0.0:
            signals.append(ControlSignal.empty())
            continue
        duration = horizon * (1.0 - rng.random())
        n_seg = int(rng.integers(1, 9))
        weights = rng.random(n_seg) + 0.05
        durations = duration * weights / weights.sum()
        segs = []
        for d in durations:
            value = rng.uniform(bounds[:, 0], bounds[:, 1])
            segs.append((d, value))
        signals.append(ControlSignal(tuple(segs)))
    return signals


def reachable_sample(sys: AffineSystem, p0: TangentPoint, horizon: float,
                     n_samples: int, seed: int,
                     step: float = DEFAULT_STEP) -> list[TangentPoint]:
    """Endpoints of the lifted flow under random admissible controls."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    p0.validate(sys.manifold)
    out = []
    for sig in sample_control_signals(sys.bounds, horizon, n_samples, seed):
        if not sig.segments:
            out.append(TangentPoint(p0.x.copy(), p0.v.copy()))
            continue
        out.append(integrate_lifted(sys, p0, sig, step).final_point)
    return out


@dataclass(frozen=True)
class FiberWitness:
    """A constructive witness that some fiber over y is reachable."""

    duration: float
    control: ControlSignal
    endpoint: TangentPoint


def check_fiber_reachability(sys: AffineSystem, oracle, p0: TangentPoint,
                             y: np.ndarray, step: float = DEFAULT_STEP) -> FiberWitness:
    """Steer the base under the oracle and lift the plan; the endpoint lands
    in the fiber over y (within the oracle's steering tolerance)."""
    p0.validate(sys.manifold)
    duration, control = oracle.solve(p0.x, np.asarray(y, dtype=float))
    if not control.segments:
        return FiberWitness(0.0, control, TangentPoint(p0.x.copy(), p0.v.copy()))
    endpoint = integrate_lifted(sys, p0, control, step).final_point
    return FiberWitness(duration, control, endpoint)


@dataclass(frozen=True)
class ChainLeg:
    start: TangentPoint
    control: ControlSignal
    duration: float
    jump_target: TangentPoint
    verified_distance: float

    def to_json(self) -> dict:
        return {
            "start": self.start.to_json(),
            "control": self.control.to_json(),
            "duration": self.duration,
            "jump_target": self.jump_target.to_json(),
            "verified_distance": self.verified_distance,
        }

    @staticmethod
    def from_json(data: dict) -> "ChainLeg":
        return ChainLeg(
            TangentPoint.from_json(data["start"]),
            ControlSignal.from_json(data["control"]),
            float(data["duration"]),
            TangentPoint.from_json(data["jump_target"]),
            float(data["verified_distance"]),
        )


@dataclass(frozen=True)
class Chain:
    legs: tuple
    epsilon: float
    min_duration: float
    source: TangentPoint
    target: TangentPoint
    step: float = DEFAULT_STEP
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "T": self.min_duration,
            "seed": self.seed,
            "step": self.step,
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "legs": [leg.to_json() for leg in self.legs],
        }

    @staticmethod
    def from_json(data: dict) -> "Chain":
        return Chain(
            tuple(ChainLeg.from_json(leg) for leg in data["legs"]),
            float(data["epsilon"]),
            float(data["T"]),
            TangentPoint.from_json(data["source"]),
            TangentPoint.from_json(data["target"]),
            float(data.get("step", DEFAULT_STEP)),
            int(data.get("seed", 0)),
        )


def compose_chains(first: Chain, second: Chain) -> Chain:
    """Concatenate chains through a shared waypoint."""
    if first.epsilon != second.epsilon or first.min_duration != second.min_duration:
        raise ValueError("chains must share epsilon and T")
    if not (np.allclose(first.target.x, second.source.x, atol=1e-9)
            and np.allclose(first.target.v, second.source.v, atol=1e-9)):
        raise ValueError("first.target must equal second.source")
    return Chain(first.legs + second.legs, first.epsilon, first.min_duration,
                 first.source, second.target, first.step, first.seed)


def _detour_point(manifold: Manifold, x: np.ndarray) -> np.ndarray:
    if manifold.is_flat:
        d = x.copy()
        d[0] += 1.0
        return d
    t = manifold.tangent_basis(x)[:, 0]
    d = np.cos(0.5) * x + np.sin(0.5) * t
    return d / np.linalg.norm(d)


def _padded_plan(oracle, manifold: Manifold, x: np.ndarray, y: np.ndarray,
                 min_leg: float) -> ControlSignal:
    """A base plan x -> y strictly longer than min_leg, padded with round
    trips y -> x -> y (through a detour point when x and y coincide)."""
    _, sig = oracle.solve(x, y)
    guard = 0
    while sig.total_duration <= min_leg:
        _, back = oracle.solve(y, x)
        _, fwd = oracle.solve(x, y)
        added = back.segments + fwd.segments
        if not added:
            d = _detour_point(manifold, y)
            _, back = oracle.solve(y, d)
            _, fwd = oracle.solve(d, y)
            added = back.segments + fwd.segments
            if not added:
                raise SteeringFailure("oracle produced only zero-duration plans")
        sig = ControlSignal(sig.segments + added)
        guard += 1
        if guard > 64:
            raise SteeringFailure("could not pad plan past the minimum leg duration")
    return sig


def _chunk_signal(sig: ControlSignal, min_leg: float) -> list[ControlSignal]:
    """Split a plan into equal-duration legs, each strictly above min_leg."""
    total = sig.total_duration
    n = max(1, math.floor(total / min_leg))
    chunks = []
    rest = sig
    chunk_len = total / n
    for _ in range(n - 1):
        head, rest = split_signal(rest, chunk_len)
        chunks.append(head)
    chunks.append(rest)
    return chunks


def _fiber_transition(sys: AffineSystem, base_point: np.ndarray,
                      chunk: ControlSignal, step: float):
    """Transition matrix of the fiber flow over one chunk, in orthonormal
    tangent bases of the start and end base points."""
    m = sys.manifold
    b_start = m.tangent_basis(base_point)
    d = m.intrinsic_dim
    end_fibers = []
    end_base = None
    for i in range(d):
        traj = integrate_lifted(sys, TangentPoint(base_point, b_start[:, i]), chunk, step)
        end = traj.final_point
        end_fibers.append(end.v)
        end_base = end.x
    b_end = m.tangent_basis(end_base)
    mat = b_end.T @ np.column_stack(end_fibers)
    return mat, b_start, b_end, end_base


def _chunk_transitions(sys: AffineSystem, start_base: np.ndarray, chunks, step: float):
    """Fiber transitions of consecutive chunks, starting from start_base."""
    transitions = []
    base = start_base
    for chunk in chunks:
        mat, b_start, b_end, base = _fiber_transition(sys, base, chunk, step)
        transitions.append((mat, b_start, b_end))
    return transitions, base


def _deadline_references(transitions, end_base, manifold: Manifold, target_v):
    """refs[j]: the vector in the fiber at the end of chunk j that flows onto
    the target vector through all remaining chunks of the itinerary."""
    ref = target_v
    if not manifold.is_flat:
        ref = manifold.project_tangent(end_base, ref)
    refs = [None] * len(transitions)
    refs[-1] = ref
    for j in range(len(transitions) - 2, -1, -1):
        mat, b_start, b_end = transitions[j + 1]
        coords = np.linalg.solve(mat, b_end.T @ refs[j + 1])
        refs[j] = b_start @ coords
    return refs


def _choose_loop_count(pre_trans, pre_count: int, v: np.ndarray,
                       loop_trans, loop_end, manifold: Manifold,
                       target_v, eps_eff: float, cap: int = 100000) -> int:
    """Smallest number of trailing loops whose jump capacity covers the fiber
    gap between the vector arriving from the current plan and the pullback of
    the target vector through those loops.

    The gap is measured in tangent coordinates at the (nearly coincident)
    arrival bases; it is only used to size the itinerary, so the tiny basis
    mismatch from the steering tolerance is irrelevant.
    """
    if pre_trans:
        a = pre_trans[0][1].T @ v
        for mat, _, _ in pre_trans:
            a = mat @ a
    else:
        a = loop_trans[0][1].T @ v
    ref = target_v
    if not manifold.is_flat:
        ref = manifold.project_tangent(loop_end, ref)
    loop_mats = [mat for mat, _, _ in loop_trans]
    n_loop = len(loop_mats)
    r = loop_trans[-1][2].T @ ref
    n = 0
    gauge = float(np.linalg.norm(a - r))
    while gauge > (pre_count + n * n_loop) * eps_eff:
        if n >= cap:
            return cap
        n += 1
        for mat in reversed(loop_mats):
            r = np.linalg.solve(mat, r)
        gauge = float(np.linalg.norm(a - r))
    return n


def plan_chain(sys: AffineSystem, oracle, metric: TangentMetric,
               source: TangentPoint, target: TangentPoint,
               epsilon: float, min_duration: float,
               max_legs: int | None = None, step: float = DEFAULT_STEP,
               seed: int = 0) -> Chain:
    """Construct a verified (epsilon, T)-chain from source to target.

    Walks the base from the source to the target under the steering oracle
    with every leg strictly longer than T, jumping after each leg by at most
    epsilon within the fiber toward the pullback of the target vector, and
    loops through the target and source bases until a flow endpoint lands
    within epsilon of the target. Deterministic given its inputs.
    """
    if epsilon <= 0.0 or min_duration <= 0.0:
        raise ValueError("epsilon and T must be positive")
    source.validate(sys.manifold)
    target.validate(sys.manifold)
    eps_eff = epsilon * (1.0 - JUMP_MARGIN)
    min_leg = min_duration * (1.0 + DURATION_MARGIN)
    x, y = source.x, target.x
    gap0 = distance(metric, source, target)
    if max_legs is None:
        max_legs = 10 * math.ceil(max(gap0, epsilon) / epsilon) + 20

    legs: list[ChainLeg] = []

    def finished_chain() -> Chain:
        return Chain(tuple(legs), epsilon, min_duration, source, target, step, seed)

    plan = _padded_plan(oracle, sys.manifold, x, y, min_leg)

    # Already within reach: try a single unsplit leg back to the target fiber.
    if gap0 <= eps_eff:
        end = integrate_lifted(sys, source, plan, step).final_point
        d_end = distance(metric, end, target)
        if d_end <= eps_eff:
            legs.append(ChainLeg(source, plan, plan.total_duration, target, d_end))
            return finished_chain()

    def run_itinerary(chunks, refs, current: TangentPoint):
        for j, chunk in enumerate(chunks):
            if len(legs) >= max_legs:
                raise PlanningBudgetError(
                    f"no chain within {max_legs} legs", best_chain=finished_chain()
                )
            end = integrate_lifted(sys, current, chunk, step).final_point
            d_target = distance(metric, end, target)
            if d_target <= eps_eff:
                legs.append(ChainLeg(current, chunk, chunk.total_duration, target, d_target))
                return None
            ref = refs[j]
            if not sys.manifold.is_flat:
                ref = sys.manifold.project_tangent(end.x, ref)
            jumped = fiber_segment_point(end, ref, eps_eff)
            legs.append(ChainLeg(current, chunk, chunk.total_duration, jumped,
                                 distance(metric, end, jumped)))
            current = jumped
        return current

    fp_chunks = _chunk_signal(plan, min_leg)
    fp_trans, fp_end = _chunk_transitions(sys, x, fp_chunks, step)

    # One cached round trip through the source base and back.
    _, back = oracle.solve(y, x)
    _, fwd = oracle.solve(x, y)
    loop_sig = ControlSignal(back.segments + fwd.segments)
    guard = 0
    while loop_sig.total_duration <= min_leg:
        extra = back.segments + fwd.segments
        if not extra:
            d = _detour_point(sys.manifold, y)
            _, back = oracle.solve(y, d)
            _, fwd = oracle.solve(d, y)
            extra = back.segments + fwd.segments
            if not extra:
                raise SteeringFailure("oracle produced only zero-duration round trips")
        loop_sig = ControlSignal(loop_sig.segments + extra)
        guard += 1
        if guard > 64:
            raise SteeringFailure("could not pad the loop plan past the leg duration")
    loop_chunks = _chunk_signal(loop_sig, min_leg)
    loop_trans, loop_end = _chunk_transitions(sys, y, loop_chunks, step)
    n_loop_chunks = len(loop_chunks)

    # Each planning phase fixes its number of loops so the available jumps
    # (one of size epsilon per leg) cover the fiber gap to the pullback of
    # the target vector through the planned flow, then aims every jump at
    # that pullback. The phase closes the gap by construction whenever the
    # variational flow is norm-preserving; otherwise the next phase re-plans
    # from the current point until the leg budget runs out.
    current = source
    first = True
    while True:
        pre_chunks = fp_chunks if first else []
        pre_trans = fp_trans if first else []
        n_loops = _choose_loop_count(pre_trans, len(pre_chunks), current.v,
                                     loop_trans, loop_end, sys.manifold,
                                     target.v, eps_eff)
        if not pre_chunks and n_loops == 0:
            n_loops = 1
        itinerary = list(pre_chunks) + list(loop_chunks) * n_loops
        transitions = list(pre_trans) + list(loop_trans) * n_loops
        end_base = loop_end if n_loops else fp_end
        refs = _deadline_references(transitions, end_base, sys.manifold, target.v)
        current = run_itinerary(itinerary, refs, current)
        if current is None:
            return finished_chain()
        first = False


@dataclass(frozen=True)
class LegCheck:
    index: int
    duration: float
    distance: float
    duration_ok: bool
    distance_ok: bool
    continuity_ok: bool


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    legs: tuple
    messages: tuple

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "legs": [
                {
                    "index": c.index,
                    "duration": c.duration,
                    "distance": c.distance,
                    "duration_ok": c.duration_ok,
                    "distance_ok": c.distance_ok,
                    "continuity_ok": c.continuity_ok,
                }
                for c in self.legs
            ],
            "messages": list(self.messages),
        }


def verify_chain(sys: AffineSystem, metric: TangentMetric, chain: Chain,
                 step: float | None = None) -> VerificationReport:
    """Independently re-check a chain: every leg is re-integrated at half the
    planner's step; durations must exceed T strictly and each flow endpoint
    must land within epsilon of the next leg's start. Failures are report
    entries, never exceptions."""
    if step is None:
        step = chain.step / 2.0
    checks = []
    messages = []
    expected_start = chain.source
    for idx, leg in enumerate(chain.legs):
        continuity_ok = bool(
            np.allclose(leg.start.x, expected_start.x, atol=1e-12)
            and np.allclose(leg.start.v, expected_start.v, atol=1e-12)
        )
        duration_ok = leg.duration > chain.min_duration and (
            abs(leg.duration - leg.control.total_duration) <= 1e-9 * (1.0 + leg.duration)
        )
        end = integrate_lifted(sys, leg.start, leg.control, step).final_point
        d = distance(metric, end, leg.jump_target)
        distance_ok = d <= chain.epsilon
        checks.append(LegCheck(idx, leg.duration, d, duration_ok, distance_ok, continuity_ok))
        if not duration_ok:
            messages.append(f"leg {idx}: duration {leg.duration} not above T={chain.min_duration}")
        if not distance_ok:
            messages.append(f"leg {idx}: jump distance {d:.6e} exceeds epsilon={chain.epsilon}")
        if not continuity_ok:
            messages.append(f"leg {idx}: start does not match previous jump target")
        expected_start = leg.jump_target
    if chain.legs:
        last = chain.legs[-1].jump_target
        target_ok = bool(
            np.allclose(last.x, chain.target.x, atol=1e-12)
            and np.allclose(last.v, chain.target.v, atol=1e-12)
        )
        if not target_ok:
            messages.append("final jump target does not match the chain target")
    else:
        target_ok = distance(metric, chain.source, chain.target) <= chain.epsilon
        if not target_ok:
            messages.append("empty chain but source and target are not within epsilon")
    passed = target_ok and all(c.duration_ok and c.distance_ok and c.continuity_ok
                               for c in checks)
    return VerificationReport(passed, tuple(checks), tuple(messages))
