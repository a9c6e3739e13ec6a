"""Command-line front end: liftctl <simulate|check|chain|larc>.

System definitions are JSON files with a schema version, manifold, field
descriptors (matrices row-major), per-channel control bounds, metric mode,
integrator step and seed. All reports go to stdout unless --out is given.
Exit codes: 0 success, 1 domain/planning failure, 2 usage/parse failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys as _sys
from dataclasses import dataclass

import numpy as np

from .errors import DefinitionError, LiftctlError, PlanningBudgetError
from .fields import field_from_descriptor, zero_field
from .flow import (
    DEFAULT_STEP,
    AffineSystem,
    ControlSignal,
    check_flow_formula,
    check_invariance,
    integrate_base,
    integrate_lifted,
)
from .liealg import DEFAULT_DEPTH, lifted_rank_at, rank_at
from .fields import check_bracket_identity, check_pi_related
from .liealg import check_lift_algebra_identity
from .manifold import Manifold, TangentPoint
from .planner import (
    Chain,
    LinearGramianOracle,
    SearchOracle,
    SphereRotationOracle,
    plan_chain,
    verify_chain,
)
from .sasaki import MetricMode, TangentMetric

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SystemDefinition:
    manifold: Manifold
    system: AffineSystem
    metric: TangentMetric
    step: float
    seed: int

    @staticmethod
    def from_dict(data: dict) -> "SystemDefinition":
        if not isinstance(data, dict):
            raise DefinitionError("<root>", "definition must be a JSON object")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DefinitionError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

        mdesc = data.get("manifold")
        if not isinstance(mdesc, dict) or "kind" not in mdesc:
            raise DefinitionError("manifold", "expected an object with a 'kind'")
        kind = mdesc["kind"]
        if kind == "flat":
            try:
                manifold = Manifold.flat(int(mdesc["dim"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DefinitionError("manifold.dim", str(exc)) from exc
        elif kind == "sphere2":
            manifold = Manifold.sphere2()
        else:
            raise DefinitionError("manifold.kind", f"unknown kind {kind!r}")

        n = manifold.ambient_dim
        if "drift" in data and data["drift"] is not None:
            try:
                drift = field_from_descriptor(data["drift"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DefinitionError("drift", str(exc)) from exc
        else:
            drift = zero_field(n)

        controlled_desc = data.get("controlled")
        if not isinstance(controlled_desc, list) or not controlled_desc:
            raise DefinitionError("controlled", "expected a non-empty list of field descriptors")
        controlled = []
        for i, desc in enumerate(controlled_desc):
            try:
                controlled.append(field_from_descriptor(desc))
            except (KeyError, TypeError, ValueError) as exc:
                raise DefinitionError(f"controlled[{i}]", str(exc)) from exc

        bounds = data.get("bounds")
        if not isinstance(bounds, list) or len(bounds) != len(controlled):
            raise DefinitionError("bounds", "expected one [lo, hi] pair per controlled field")
        try:
            system = AffineSystem(manifold, drift, tuple(controlled), np.asarray(bounds, float))
        except ValueError as exc:
            raise DefinitionError("bounds", str(exc)) from exc

        metric_name = data.get("metric")
        if metric_name is None:
            metric = TangentMetric.for_manifold(manifold)
        else:
            try:
                metric = TangentMetric(manifold, MetricMode(metric_name))
            except ValueError as exc:
                raise DefinitionError("metric", str(exc)) from exc

        step = data.get("step", DEFAULT_STEP)
        if not isinstance(step, (int, float)) or step <= 0:
            raise DefinitionError("step", "must be a positive number")
        seed = data.get("seed", 0)
        if not isinstance(seed, int):
            raise DefinitionError("seed", "must be an integer")
        env_seed = os.environ.get("LIFTCTL_SEED")
        if env_seed is not None:
            seed = int(env_seed)
        return SystemDefinition(manifold, system, metric, float(step), seed)

    @staticmethod
    def load(path: str) -> "SystemDefinition":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise DefinitionError(path, f"cannot read file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DefinitionError(path, f"invalid JSON: {exc}") from exc
        return SystemDefinition.from_dict(data)


def _parse_vector(text: str, dim: int, flag: str) -> np.ndarray:
    try:
        vec = np.asarray([float(p) for p in text.split(",")], dtype=float)
    except ValueError as exc:
        raise DefinitionError(flag, f"expected comma-separated floats: {exc}") from exc
    if vec.shape[0] != dim:
        raise DefinitionError(flag, f"expected {dim} components, got {vec.shape[0]}")
    return vec


def _parse_tangent(text: str, dim: int, flag: str) -> TangentPoint:
    parts = text.split(";")
    if len(parts) != 2:
        raise DefinitionError(flag, "expected 'x1,..,xn;v1,..,vn'")
    return TangentPoint(_parse_vector(parts[0], dim, flag), _parse_vector(parts[1], dim, flag))


def _parse_control(text: str, channels: int) -> ControlSignal:
    if text.startswith("@"):
        with open(text[1:], "r", encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = json.loads(text)
    segments = []
    for seg in data:
        duration, value = seg
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if value.shape[0] != channels:
            raise DefinitionError("control", f"segment has {value.shape[0]} channels, expected {channels}")
        segments.append((float(duration), value))
    return ControlSignal(tuple(segments))


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


def resolve_oracle(defn: SystemDefinition):
    """Pick a steering oracle for the system kind; fall back to grid search."""
    sys_ = defn.system
    try:
        return LinearGramianOracle.for_system(sys_)
    except LiftctlError:
        pass
    try:
        return SphereRotationOracle.for_system(sys_)
    except LiftctlError:
        pass
    return SearchOracle(sys_)


def cmd_simulate(args) -> int:
    defn = SystemDefinition.load(args.definition)
    n = defn.manifold.ambient_dim
    x0 = _parse_vector(args.x0, n, "--x0")
    step = args.step if args.step is not None else defn.step
    control = _parse_control(args.control, defn.system.n_controls) if args.control \
        else ControlSignal.empty()
    if args.lifted is not None:
        v0 = _parse_vector(args.lifted, n, "--lifted")
        traj = integrate_lifted(defn.system, TangentPoint(x0, v0), control, step)
    else:
        traj = integrate_base(defn.system, x0, control, step)
    if args.format == "json":
        _emit(json.dumps(traj.to_json(), indent=2) + "\n", args.out)
    else:
        buf = io.StringIO()
        traj.write_csv(buf)
        _emit(buf.getvalue(), args.out)
    return 0


_SUITES = ("lift", "flow", "invariance", "rank")


def _suite_lift(defn: SystemDefinition) -> dict:
    sys_ = defn.system
    rng = np.random.default_rng(defn.seed)
    samples = []
    for _ in range(100):
        x = defn.manifold.random_point(rng)
        samples.append(TangentPoint(x, defn.manifold.random_tangent(x, rng)))
    fields = (sys_.drift,) + sys_.controlled
    analytic = all(f.has_analytic_jacobian for f in fields)
    pi_dev = max(check_pi_related(f, samples) for f in fields)
    bracket_dev = 0.0
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            bracket_dev = max(bracket_dev, check_bracket_identity(fields[i], fields[j], samples))
    algebra_dev = check_lift_algebra_identity(fields, samples[:10], max_depth=3)
    tol_bracket = 1e-10 if analytic else 1e-4
    tol_algebra = 1e-8 if analytic else 1e-4
    return {
        "pi_related": {"deviation": pi_dev, "tolerance": 1e-12, "pass": pi_dev <= 1e-12},
        "bracket_identity": {"deviation": bracket_dev, "tolerance": tol_bracket,
                             "pass": bracket_dev <= tol_bracket},
        "lift_algebra": {"deviation": algebra_dev, "tolerance": tol_algebra,
                         "pass": algebra_dev <= tol_algebra},
    }


def _suite_flow(defn: SystemDefinition) -> dict:
    sys_ = defn.system
    rng = np.random.default_rng(defn.seed)
    tol = 1e-6 if defn.manifold.is_flat else 1e-4
    worst_formula = 0.0
    worst_bitwise = 0.0
    for _ in range(3):
        x0 = defn.manifold.random_point(rng)
        v0 = defn.manifold.random_tangent(x0, rng)
        segs = []
        for _ in range(int(rng.integers(1, 4))):
            segs.append((float(rng.uniform(0.2, 0.8)),
                         rng.uniform(sys_.bounds[:, 0], sys_.bounds[:, 1])))
        u = ControlSignal(tuple(segs))
        worst_formula = max(worst_formula, check_flow_formula(sys_, x0, v0, u, defn.step))
        base = integrate_base(sys_, x0, u, defn.step)
        lifted = integrate_lifted(sys_, TangentPoint(x0, v0), u, defn.step)
        if not np.array_equal(base.states, lifted.states):
            worst_bitwise = float(np.max(np.abs(base.states - lifted.states)))
    return {
        "flow_formula": {"deviation": worst_formula, "tolerance": tol,
                         "pass": worst_formula <= tol},
        "projection_identity": {"deviation": worst_bitwise, "tolerance": 0.0,
                                "pass": worst_bitwise == 0.0},
    }


def _suite_invariance(defn: SystemDefinition) -> dict:
    sys_ = defn.system
    rng = np.random.default_rng(defn.seed)
    tol = 1e-6 if defn.manifold.is_flat else 1e-4
    worst_base = 0.0
    worst_fiber = 0.0
    for k in range(5):
        x0 = defn.manifold.random_point(rng)
        segs = []
        for _ in range(int(rng.integers(1, 4))):
            segs.append((float(rng.uniform(0.2, 0.8)),
                         rng.uniform(sys_.bounds[:, 0], sys_.bounds[:, 1])))
        v_sig = ControlSignal(tuple(segs))
        s = 0.0 if k == 0 else float(rng.uniform(0.0, v_sig.total_duration))
        c = v_sig.value_at(min(s, v_sig.total_duration))
        t = float(rng.uniform(0.3, 1.0))
        u_sig = ControlSignal.constant(c, t)
        if k == 0:
            v_sig = ControlSignal.constant(c, v_sig.total_duration)
        base_dev, fiber_dev = check_invariance(sys_, x0, s, v_sig, t, u_sig, defn.step)
        worst_base = max(worst_base, base_dev)
        worst_fiber = max(worst_fiber, fiber_dev)
    return {
        "invariance_base": {"deviation": worst_base, "tolerance": tol,
                            "pass": worst_base <= tol},
        "invariance_fiber": {"deviation": worst_fiber, "tolerance": tol,
                             "pass": worst_fiber <= tol},
    }


def _suite_rank(defn: SystemDefinition) -> dict:
    sys_ = defn.system
    rng = np.random.default_rng(defn.seed)
    fields = (sys_.drift,) + sys_.controlled
    n = defn.manifold.intrinsic_dim
    reports = []
    ok = True
    for _ in range(10):
        x = defn.manifold.random_point(rng)
        v = defn.manifold.random_tangent(x, rng)
        base_report = rank_at(fields, x, DEFAULT_DEPTH, defn.manifold)
        lifted_report = lifted_rank_at(fields, TangentPoint(x, v), DEFAULT_DEPTH, defn.manifold)
        ok = ok and lifted_report.rank <= n and lifted_report.rank < 2 * n
        reports.append({"base": base_report.to_json(), "lifted": lifted_report.to_json()})
    return {
        "rank_obstruction": {"pass": ok, "intrinsic_dim": n, "reports": reports},
    }


def cmd_check(args) -> int:
    defn = SystemDefinition.load(args.definition)
    if args.suite not in _SUITES:
        raise DefinitionError("--suite", f"unknown suite {args.suite!r}; expected one of {_SUITES}")
    suite_fn = {"lift": _suite_lift, "flow": _suite_flow,
                "invariance": _suite_invariance, "rank": _suite_rank}[args.suite]
    results = suite_fn(defn)
    passed = all(entry["pass"] for entry in results.values())
    report = {"suite": args.suite, "seed": defn.seed, "passed": passed, "checks": results}
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return 0 if passed else 1


def cmd_chain(args) -> int:
    defn = SystemDefinition.load(args.definition)
    n = defn.manifold.ambient_dim
    if args.verify_only:
        with open(args.verify_only, "r", encoding="utf-8") as fh:
            chain = Chain.from_json(json.load(fh))
        report = verify_chain(defn.system, defn.metric, chain)
        _emit(json.dumps(report.to_json(), indent=2) + "\n", args.out)
        return 0 if report.passed else 1
    if args.source is None or args.target is None:
        raise DefinitionError("--source/--target", "required unless --verify-only is given")
    source = _parse_tangent(args.source, n, "--source")
    target = _parse_tangent(args.target, n, "--target")
    oracle = resolve_oracle(defn)
    try:
        chain = plan_chain(defn.system, oracle, defn.metric, source, target,
                           args.eps, args.T, args.max_legs, defn.step, defn.seed)
    except PlanningBudgetError as exc:
        payload = {"error": str(exc),
                   "partial_chain": exc.best_chain.to_json() if exc.best_chain else None}
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
        return 1
    report = verify_chain(defn.system, defn.metric, chain)
    payload = {"chain": chain.to_json(), "verification": report.to_json()}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0 if report.passed else 1


def cmd_larc(args) -> int:
    defn = SystemDefinition.load(args.definition)
    n = defn.manifold.ambient_dim
    fields = (defn.system.drift,) + defn.system.controlled
    if args.v is not None:
        point = TangentPoint(_parse_vector(args.point, n, "--point"),
                             _parse_vector(args.v, n, "--v"))
        report = lifted_rank_at(fields, point, args.depth, defn.manifold)
    else:
        report = rank_at(fields, _parse_vector(args.point, n, "--point"),
                         args.depth, defn.manifold)
    _emit(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liftctl",
        description="Simulate affine control systems on manifolds, their tangent-bundle "
                    "lifts, and certified chain plans between tangent points.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="integrate the base or lifted system")
    p_sim.add_argument("definition")
    p_sim.add_argument("--x0", required=True, help="initial base point, comma separated")
    p_sim.add_argument("--control", help="JSON segments [[dur,[u...]],...] or @file")
    p_sim.add_argument("--lifted", metavar="V0", help="initial fiber vector; integrates the lift")
    p_sim.add_argument("--step", type=float)
    p_sim.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sim.add_argument("--out")
    p_sim.set_defaults(func=cmd_simulate)

    p_check = sub.add_parser("check", help="run a verification suite")
    p_check.add_argument("definition")
    p_check.add_argument("--suite", required=True)
    p_check.add_argument("--out")
    p_check.set_defaults(func=cmd_check)

    p_chain = sub.add_parser("chain", help="plan or verify an (eps,T)-chain")
    p_chain.add_argument("definition")
    p_chain.add_argument("--source", help="tangent point 'x1,..;v1,..'")
    p_chain.add_argument("--target", help="tangent point 'x1,..;v1,..'")
    p_chain.add_argument("--eps", type=float, default=0.25)
    p_chain.add_argument("--T", type=float, default=0.5)
    p_chain.add_argument("--max-legs", type=int, default=None)
    p_chain.add_argument("--verify-only", metavar="CHAIN_JSON")
    p_chain.add_argument("--out")
    p_chain.set_defaults(func=cmd_chain)

    p_larc = sub.add_parser("larc", help="algebra rank condition report at a point")
    p_larc.add_argument("definition")
    p_larc.add_argument("--point", required=True)
    p_larc.add_argument("--v", help="fiber vector; reports the lifted rank")
    p_larc.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p_larc.add_argument("--out")
    p_larc.set_defaults(func=cmd_larc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except DefinitionError as exc:
        _sys.stderr.write(f"error: {exc}\n")
        return 2
    except LiftctlError as exc:
        _sys.stderr.write(f"error: {exc}\n")
        return 1
    except (ValueError, OSError) as exc:
        _sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
