"""Affine control systems, piecewise-constant control signals, fixed-step
integration of the base and lifted dynamics, and the flow-level checks.

The lifted integrator advances the base state with literally the same
arithmetic as the base integrator, so the base component of a lifted
trajectory is bitwise identical to the plain base trajectory on the shared
grid. Control-segment boundaries always land on grid nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError
from .fields import VectorField
from .manifold import Manifold, ManifoldKind, TangentPoint

DEFAULT_STEP = 1e-3
DRIFT_TOL = 1e-6

# Snap tolerance for cutting a signal at a segment boundary; keeps
# shift(concat(v, s, u), s) == u exact.
_CUT_SNAP = 1e-12


@dataclass(frozen=True)
class ControlSignal:
    """Right-continuous piecewise-constant control on [0, total_duration]."""

    segments: tuple

    def __post_init__(self):
        clean = []
        for duration, value in self.segments:
            duration = float(duration)
            if duration <= 0.0:
                raise ValueError("segment durations must be positive")
            clean.append((duration, np.atleast_1d(np.array(value, dtype=float))))
        object.__setattr__(self, "segments", tuple(clean))

    @staticmethod
    def constant(value, duration: float) -> "ControlSignal":
        return ControlSignal(((duration, value),))

    @staticmethod
    def zero(channels: int, duration: float) -> "ControlSignal":
        return ControlSignal(((duration, np.zeros(channels)),))

    @staticmethod
    def empty() -> "ControlSignal":
        return ControlSignal(())

    @property
    def total_duration(self) -> float:
        return float(sum(d for d, _ in self.segments))

    @property
    def channels(self) -> int:
        return self.segments[0][1].shape[0] if self.segments else 0

    def value_at(self, t: float) -> np.ndarray:
        """u(t); interior boundaries belong to the following segment, the
        final instant returns the last segment's value."""
        if not self.segments:
            raise ValueError("empty signal has no values")
        total = self.total_duration
        if t < 0.0 or t > total + _CUT_SNAP * (1.0 + total):
            raise ValueError(f"t={t} outside [0, {total}]")
        acc = 0.0
        for duration, value in self.segments:
            acc += duration
            if t < acc:
                return value
        return self.segments[-1][1]

    def to_json(self) -> list:
        return [[d, v.tolist()] for d, v in self.segments]

    @staticmethod
    def from_json(data) -> "ControlSignal":
        return ControlSignal(tuple((d, np.asarray(v, float)) for d, v in data))


def split_signal(u: ControlSignal, s: float) -> tuple[ControlSignal, ControlSignal]:
    """Split u at time s into (head on [0, s], tail on [s, end]).

    Cuts within _CUT_SNAP of a segment boundary are snapped to it, so a split
    at a concatenation point recovers the original parts exactly.
    """
    total = u.total_duration
    snap = _CUT_SNAP * (1.0 + total)
    if s < -snap or s > total + snap:
        raise ValueError(f"split time {s} outside [0, {total}]")
    s = min(max(s, 0.0), total)
    head, tail = [], []
    acc = 0.0
    cut_done = s <= snap
    for duration, value in u.segments:
        if cut_done:
            tail.append((duration, value))
            continue
        nxt = acc + duration
        if nxt <= s + snap:
            head.append((duration, value))
            if nxt >= s - snap:
                cut_done = True
            acc = nxt
        else:
            left = s - acc
            if left > snap:
                head.append((left, value))
            right = nxt - s
            if right > snap:
                tail.append((right, value))
            cut_done = True
            acc = nxt
    return ControlSignal(tuple(head)), ControlSignal(tuple(tail))


def concat(v: ControlSignal, s: float, u: ControlSignal) -> ControlSignal:
    """The spliced control: v on [0, s], then u shifted to start at s."""
    if s < 0.0 or s > v.total_duration + _CUT_SNAP * (1.0 + v.total_duration):
        raise ValueError(f"splice time {s} outside [0, {v.total_duration}]")
    head, _ = split_signal(v, s)
    return ControlSignal(head.segments + u.segments)


def shift(u: ControlSignal, s: float) -> ControlSignal:
    """Time shift: (shift(u, s))(a) = u(a + s)."""
    if s < 0.0 or s > u.total_duration + _CUT_SNAP * (1.0 + u.total_duration):
        raise ValueError(f"shift {s} outside [0, {u.total_duration}]")
    _, tail = split_signal(u, s)
    return tail


@dataclass(frozen=True)
class AffineSystem:
    """drift + sum_i u_i * controlled_i on a manifold, with box control bounds."""

    manifold: Manifold
    drift: VectorField
    controlled: tuple
    bounds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "controlled", tuple(self.controlled))
        bounds = np.asarray(self.bounds, dtype=float).reshape(len(self.controlled), 2)
        object.__setattr__(self, "bounds", bounds)
        if len(self.controlled) < 1:
            raise ValueError("need at least one controlled field")
        if np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError("control bounds must satisfy lo <= hi")
        if self.manifold.kind is ManifoldKind.SPHERE2:
            self._check_tangency()

    def _check_tangency(self, n_samples: int = 8, tol: float = 1e-8):
        rng = np.random.default_rng(20240 + n_samples)
        fields = (self.drift,) + self.controlled
        for _ in range(n_samples):
            x = self.manifold.random_point(rng)
            for fld in fields:
                err = abs(x @ fld(x))
                if err > tol:
                    raise ValueError(
                        f"field {fld.name!r} not tangent to the sphere: |x.X(x)|={err:.2e}"
                    )

    @property
    def n_controls(self) -> int:
        return len(self.controlled)

    def check_signal(self, u: ControlSignal) -> None:
        for _, value in u.segments:
            if value.shape[0] != self.n_controls:
                raise ValueError(
                    f"control has {value.shape[0]} channels, system expects {self.n_controls}"
                )
            if np.any(value < self.bounds[:, 0] - 1e-12) or np.any(
                value > self.bounds[:, 1] + 1e-12
            ):
                raise ValueError("control value outside bounds")

    def rhs(self, x: np.ndarray, u_value: np.ndarray) -> np.ndarray:
        out = self.drift(x)
        for ui, fld in zip(u_value, self.controlled):
            if ui != 0.0:
                out = out + ui * fld(x)
        return out

    def rhs_jacobian(self, x: np.ndarray, u_value: np.ndarray) -> np.ndarray:
        out = self.drift.jacobian(x)
        for ui, fld in zip(u_value, self.controlled):
            if ui != 0.0:
                out = out + ui * fld.jacobian(x)
        return out


@dataclass(frozen=True)
class Trajectory:
    """Integration output on a fixed grid; fibers is None for base runs."""

    times: np.ndarray
    states: np.ndarray
    fibers: np.ndarray | None
    control: ControlSignal
    max_drift: float = 0.0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_point(self) -> TangentPoint:
        if self.fibers is None:
            raise ValueError("base trajectory has no fiber component")
        return TangentPoint(self.states[-1], self.fibers[-1])

    def write_csv(self, stream) -> None:
        n = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)]
        if self.fibers is not None:
            header += [f"v{i + 1}" for i in range(n)]
        stream.write(",".join(header) + "\n")
        for k in range(self.times.shape[0]):
            row = [self.times[k], *self.states[k]]
            if self.fibers is not None:
                row += list(self.fibers[k])
            stream.write(",".join(f"{val:.17g}" for val in row) + "\n")

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "states": self.states.tolist(),
            "fibers": None if self.fibers is None else self.fibers.tolist(),
            "control": self.control.to_json(),
            "max_drift": self.max_drift,
        }


def _segment_grid(duration: float, step: float) -> tuple[int, float]:
    n = max(1, math.ceil(duration / step - 1e-12))
    return n, duration / n


def integrate_base(sys: AffineSystem, x0: np.ndarray, u: ControlSignal,
                   step: float = DEFAULT_STEP) -> Trajectory:
    """Classical RK4 with fixed step, segment boundaries on grid nodes.

    On the sphere the state is renormalized after every step; the drift off
    the manifold before renormalization is monitored and reported.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    x = np.asarray(sys.manifold.check_point(x0), dtype=float)
    sys.check_signal(u)
    on_sphere = sys.manifold.kind is ManifoldKind.SPHERE2
    times = [0.0]
    states = [x.copy()]
    t = 0.0
    max_drift = 0.0
    for duration, uval in u.segments:
        n_steps, h = _segment_grid(duration, step)
        for _ in range(n_steps):
            k1 = sys.rhs(x, uval)
            k2 = sys.rhs(x + 0.5 * h * k1, uval)
            k3 = sys.rhs(x + 0.5 * h * k2, uval)
            k4 = sys.rhs(x + h * k3, uval)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if on_sphere:
                nrm = np.linalg.norm(x)
                drift = abs(nrm - 1.0)
                if drift > DRIFT_TOL:
                    raise IntegrationError(f"off-manifold drift {drift:.3e} at t={t + h}")
                max_drift = max(max_drift, drift)
                x = x / nrm
            t = t + h
            times.append(t)
            states.append(x.copy())
    return Trajectory(np.asarray(times), np.asarray(states), None, u, max_drift)


def integrate_lifted(sys: AffineSystem, p0: TangentPoint, u: ControlSignal,
                     step: float = DEFAULT_STEP) -> Trajectory:
    """Integrate the coupled system (base equation plus the linear variational
    equation on the fiber) on the same grid and with the same base arithmetic
    as integrate_base. On the sphere the fiber is re-projected to the tangent
    plane of the new base point after every step."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    p0.validate(sys.manifold)
    sys.check_signal(u)
    x = np.asarray(p0.x, dtype=float).copy()
    v = np.asarray(p0.v, dtype=float).copy()
    on_sphere = sys.manifold.kind is ManifoldKind.SPHERE2
    times = [0.0]
    states = [x.copy()]
    fibers = [v.copy()]
    t = 0.0
    max_drift = 0.0
    for duration, uval in u.segments:
        n_steps, h = _segment_grid(duration, step)
        for _ in range(n_steps):
            k1 = sys.rhs(x, uval)
            k1v = sys.rhs_jacobian(x, uval) @ v
            x2 = x + 0.5 * h * k1
            k2 = sys.rhs(x2, uval)
            k2v = sys.rhs_jacobian(x2, uval) @ (v + 0.5 * h * k1v)
            x3 = x + 0.5 * h * k2
            k3 = sys.rhs(x3, uval)
            k3v = sys.rhs_jacobian(x3, uval) @ (v + 0.5 * h * k2v)
            x4 = x + h * k3
            k4 = sys.rhs(x4, uval)
            k4v = sys.rhs_jacobian(x4, uval) @ (v + h * k3v)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            if on_sphere:
                nrm = np.linalg.norm(x)
                drift = abs(nrm - 1.0)
                if drift > DRIFT_TOL:
                    raise IntegrationError(f"off-manifold drift {drift:.3e} at t={t + h}")
                max_drift = max(max_drift, drift)
                x = x / nrm
                v = v - x * (x @ v)
            t = t + h
            times.append(t)
            states.append(x.copy())
            fibers.append(v.copy())
    return Trajectory(np.asarray(times), np.asarray(states), np.asarray(fibers), u, max_drift)


def check_flow_formula(sys: AffineSystem, x0: np.ndarray, v0: np.ndarray,
                       u: ControlSignal, step: float = DEFAULT_STEP) -> float:
    """Compare the fiber of the lifted flow against a central finite
    difference of the base flow over perturbed initial conditions.

    Returns the max norm deviation over the shared grid.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    lifted = integrate_lifted(sys, TangentPoint(x0, v0), u, step)
    if not u.segments:
        return 0.0
    v_norm = float(np.linalg.norm(v0))
    if v_norm == 0.0:
        return float(np.max(np.linalg.norm(lifted.fibers, axis=1)))
    delta = 1e-5 * (1.0 + float(np.linalg.norm(x0))) / (1.0 + v_norm)
    x_plus = sys.manifold.retract(x0, delta * v0)
    x_minus = sys.manifold.retract(x0, -delta * v0)
    plus = integrate_base(sys, x_plus, u, step)
    minus = integrate_base(sys, x_minus, u, step)
    fd = (plus.states - minus.states) / (2.0 * delta)
    return float(np.max(np.linalg.norm(lifted.fibers - fd, axis=1)))


def check_invariance(sys: AffineSystem, x: np.ndarray, s: float,
                     v_sig: ControlSignal, t: float, u_sig: ControlSignal,
                     step: float = DEFAULT_STEP) -> tuple[float, float]:
    """Flow-invariance check for a member field of the system family.

    Left side: flow the lifted system for the duration of u_sig from the
    tangent point (y_s, F_{v(s)}(y_s)) with y_s the base flow of x under
    v_sig up to time s. Right side: flow the base under the spliced control
    concat(v_sig, s, u_sig) to the end and evaluate the family member with
    the spliced control's final value there. Returns (base, fiber) deviation.

    The identity holds when the control value carried by the initial vector
    continues unchanged past the splice, i.e. u_sig is constant and equal to
    v_sig at the splice time; it fails across genuine switches.
    """
    t_req = float(t)
    if abs(t_req - u_sig.total_duration) > 1e-9:
        raise ValueError("t must equal the duration of u_sig")
    head, _ = split_signal(v_sig, s)
    if head.segments:
        y_s = integrate_base(sys, x, head, step).final_state
    else:
        y_s = np.asarray(x, dtype=float).copy()
    if v_sig.segments:
        v_at_s = v_sig.value_at(min(s, v_sig.total_duration))
    else:
        v_at_s = u_sig.value_at(0.0)
    w0 = sys.rhs(y_s, v_at_s)
    if sys.manifold.kind is ManifoldKind.SPHERE2:
        w0 = sys.manifold.project_tangent(y_s, w0)
    left = integrate_lifted(sys, TangentPoint(y_s, w0), u_sig, step).final_point

    w_sig = concat(v_sig, s, u_sig)
    right_traj = integrate_base(sys, x, w_sig, step)
    y_end = right_traj.final_state
    w_end_value = w_sig.value_at(w_sig.total_duration)
    fiber_right = sys.rhs(y_end, w_end_value)
    if sys.manifold.kind is ManifoldKind.SPHERE2:
        fiber_right = sys.manifold.project_tangent(y_end, fiber_right)

    base_dev = sys.manifold.base_distance(left.x, y_end)
    fiber_dev = float(np.linalg.norm(left.v - fiber_right))
    return base_dev, fiber_dev
