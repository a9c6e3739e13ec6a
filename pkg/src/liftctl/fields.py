"""Vector fields with Jacobian access, scalar fields, lifts to the tangent
bundle, and Lie brackets.

Linear, constant and polynomial fields carry analytic Jacobians; arbitrary
callables fall back to central finite differences. A lifted field is kept as
a pair of ambient maps (horizontal, vertical), so its projection onto the
base field holds by construction; the bracket-identity check flattens lifted
fields to 2n ambient dimensions only internally.
"""

from __future__ import annotations

import numpy as np

from .manifold import TangentPoint

_FD_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


def _fd_step(x: np.ndarray) -> float:
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    return _FD_EPS * (1.0 + scale)


def fd_jacobian(func, x: np.ndarray, noise: float = 0.0) -> np.ndarray:
    """Central-difference Jacobian of an R^n -> R^m map.

    `noise` is the absolute evaluation error of func. Clean maps use the
    3-point rule with step eps^(1/3)(1+|x|); noisy maps (nested differences)
    switch to the 5-point rule with the step rebalanced against the noise,
    which keeps iterated brackets usable.
    """
    x = np.asarray(x, dtype=float)
    scale = 1.0 + (float(np.max(np.abs(x))) if x.size else 0.0)
    f0 = np.asarray(func(x), dtype=float)
    jac = np.empty((f0.shape[0], x.shape[0]))
    if noise <= 1e-14:
        h = _FD_EPS * scale
        for j in range(x.shape[0]):
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            jac[:, j] = (np.asarray(func(xp), float) - np.asarray(func(xm), float)) / (2.0 * h)
        return jac
    h = max(_FD_EPS, (10.0 * noise) ** 0.2) * scale
    for j in range(x.shape[0]):
        shifts = []
        for mult in (-2.0, -1.0, 1.0, 2.0):
            xs = x.copy()
            xs[j] += mult * h
            shifts.append(np.asarray(func(xs), float))
        fm2, fm1, fp1, fp2 = shifts
        jac[:, j] = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)
    return jac


def _jacobian_noise(value_noise: float) -> float:
    """Estimated absolute error of an FD Jacobian of a map whose evaluation
    carries the given noise."""
    base = max(value_noise, float(np.finfo(float).eps))
    if value_noise <= 1e-14:
        return 4.0 * base ** (2.0 / 3.0)
    return 4.0 * base ** 0.8


def fd_gradient(func, x: np.ndarray) -> np.ndarray:
    """Central-difference gradient of an R^n -> R map."""
    x = np.asarray(x, dtype=float)
    h = _fd_step(x)
    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        grad[j] = (func(xp) - func(xm)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Polynomial machinery: a component is a list of (coeff, exponents) monomials.
# ---------------------------------------------------------------------------

def _mono_collect(monos):
    acc: dict[tuple, float] = {}
    for coeff, exps in monos:
        key = tuple(int(e) for e in exps)
        acc[key] = acc.get(key, 0.0) + float(coeff)
    return tuple((c, e) for e, c in sorted(acc.items()) if c != 0.0)


def _poly_eval(component, x: np.ndarray) -> float:
    total = 0.0
    for coeff, exps in component:
        term = coeff
        for xi, e in zip(x, exps):
            if e:
                term *= xi ** e
        total += term
    return total


def _poly_diff(component, j: int):
    out = []
    for coeff, exps in component:
        if exps[j] > 0:
            new = list(exps)
            new[j] -= 1
            out.append((coeff * exps[j], tuple(new)))
    return _mono_collect(out)


def _poly_mul(a, b):
    out = []
    for ca, ea in a:
        for cb, eb in b:
            out.append((ca * cb, tuple(i + j for i, j in zip(ea, eb))))
    return _mono_collect(out)


class VectorField:
    """A point -> ambient-vector map with Jacobian access.

    Custom fields built from a bare callable use central finite differences
    for the Jacobian; the subclasses below carry analytic ones.
    """

    descriptor = "custom"

    def __init__(self, value, jacobian=None, name: str = "custom",
                 value_noise: float = 0.0):
        self._value = value
        self._jacobian = jacobian
        self.name = name
        self.value_noise = value_noise

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._value(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._jacobian is not None:
            return np.asarray(self._jacobian(x), dtype=float)
        return fd_jacobian(self._value, x, self.value_noise)

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jacobian is not None

    def as_polynomial(self):
        return None


class LinearField(VectorField):
    """x -> A x with constant Jacobian A."""

    descriptor = "linear"

    def __init__(self, matrix: np.ndarray, name: str = "linear"):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("linear field needs a square matrix")
        super().__init__(lambda x: self.matrix @ x, lambda x: self.matrix, name)

    @property
    def has_analytic_jacobian(self) -> bool:
        return True

    def as_polynomial(self):
        n = self.matrix.shape[0]
        comps = []
        for i in range(n):
            monos = []
            for j in range(n):
                if self.matrix[i, j] != 0.0:
                    exps = [0] * n
                    exps[j] = 1
                    monos.append((self.matrix[i, j], tuple(exps)))
            comps.append(_mono_collect(monos))
        return PolynomialField(comps, n, name=self.name)


class ConstantField(VectorField):
    """x -> c with zero Jacobian."""

    descriptor = "constant"

    def __init__(self, vector: np.ndarray, name: str = "constant"):
        self.vector = np.asarray(vector, dtype=float)
        n = self.vector.shape[0]
        super().__init__(lambda x: self.vector.copy(), lambda x: np.zeros((n, n)), name)

    @property
    def has_analytic_jacobian(self) -> bool:
        return True

    def as_polynomial(self):
        n = self.vector.shape[0]
        comps = []
        for i in range(n):
            if self.vector[i] != 0.0:
                comps.append(((self.vector[i], (0,) * n),))
            else:
                comps.append(())
        return PolynomialField(comps, n, name=self.name)


class PolynomialField(VectorField):
    """Components are polynomials with integer exponents; analytic Jacobian."""

    descriptor = "polynomial"

    def __init__(self, components, dim: int, name: str = "polynomial"):
        self.components = tuple(_mono_collect(c) for c in components)
        self.dim = int(dim)
        if len(self.components) != self.dim:
            raise ValueError("polynomial field needs one component per dimension")
        self._partials = tuple(
            tuple(_poly_diff(comp, j) for j in range(self.dim))
            for comp in self.components
        )
        super().__init__(self._eval, self._jac, name)

    def _eval(self, x):
        return np.array([_poly_eval(c, x) for c in self.components])

    def _jac(self, x):
        return np.array(
            [[_poly_eval(self._partials[i][j], x) for j in range(self.dim)]
             for i in range(self.dim)]
        )

    @property
    def has_analytic_jacobian(self) -> bool:
        return True

    def as_polynomial(self):
        return self


def zero_field(dim: int) -> ConstantField:
    return ConstantField(np.zeros(dim), name="zero")


def combine_fields(fields, coeffs) -> VectorField:
    """Pointwise linear combination sum_i coeffs[i] * fields[i].

    Stays Linear when every term is linear; otherwise delegates value and
    Jacobian to the terms (so analytic terms keep analytic Jacobians).
    """
    fields = list(fields)
    coeffs = [float(c) for c in coeffs]
    if len(fields) != len(coeffs):
        raise ValueError("one coefficient per field")
    if all(isinstance(f, LinearField) for f in fields):
        mat = sum(c * f.matrix for f, c in zip(fields, coeffs))
        return LinearField(mat, name="combination")

    def value(x):
        return sum((c * f(x) for f, c in zip(fields, coeffs)),
                   start=np.zeros(np.asarray(x).shape[0]))

    def jac(x):
        n = np.asarray(x).shape[0]
        return sum((c * f.jacobian(x) for f, c in zip(fields, coeffs)),
                   start=np.zeros((n, n)))

    return VectorField(value, jac, name="combination")


class ScalarField:
    """A point -> real map with gradient access (analytic or central FD)."""

    def __init__(self, value, gradient=None, name: str = "scalar"):
        self._value = value
        self._gradient = gradient
        self.name = name

    def __call__(self, x: np.ndarray) -> float:
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float)
        return fd_gradient(self._value, x)


class LiftedVectorField:
    """The tangent-bundle lift of a field, as (horizontal, vertical) maps.

    At (x, v) the horizontal part is the base field's value at x and the
    vertical part is its Jacobian applied to v. The horizontal part therefore
    projects back onto the base field by construction.
    """

    def __init__(self, base: VectorField):
        self.base = base

    def __call__(self, p: TangentPoint) -> tuple[np.ndarray, np.ndarray]:
        h = self.base(p.x)
        vert = self.base.jacobian(p.x) @ p.v
        return h, vert

    def horizontal(self, p: TangentPoint) -> np.ndarray:
        return self.base(p.x)

    def vertical(self, p: TangentPoint) -> np.ndarray:
        return self.base.jacobian(p.x) @ p.v


def complete_lift(field: VectorField) -> LiftedVectorField:
    return LiftedVectorField(field)


def complete_lift_function(f: ScalarField):
    """Lift a scalar field to the tangent bundle: (x, v) -> grad f(x) . v."""

    def lifted(p: TangentPoint) -> float:
        return float(f.gradient(p.x) @ p.v)

    return lifted


def vertical_lift_function(f: ScalarField):
    """(x, v) -> f(x), constant on fibers."""

    def lifted(p: TangentPoint) -> float:
        return f(p.x)

    return lifted


def lie_bracket(x_field: VectorField, y_field: VectorField) -> VectorField:
    """[X, Y](x) = J_Y(x) X(x) - J_X(x) Y(x).

    Brackets of linear/constant/polynomial fields are computed in closed form
    so iterated brackets keep analytic Jacobians; anything else falls back to
    a pointwise formula with a finite-difference Jacobian.
    """
    if isinstance(x_field, LinearField) and isinstance(y_field, LinearField):
        a, b = x_field.matrix, y_field.matrix
        return LinearField(b @ a - a @ b, name=f"[{x_field.name},{y_field.name}]")
    if isinstance(x_field, LinearField) and isinstance(y_field, ConstantField):
        return ConstantField(-x_field.matrix @ y_field.vector,
                             name=f"[{x_field.name},{y_field.name}]")
    if isinstance(x_field, ConstantField) and isinstance(y_field, LinearField):
        return ConstantField(y_field.matrix @ x_field.vector,
                             name=f"[{x_field.name},{y_field.name}]")
    if isinstance(x_field, ConstantField) and isinstance(y_field, ConstantField):
        return zero_field(x_field.vector.shape[0])

    xp, yp = x_field.as_polynomial(), y_field.as_polynomial()
    if xp is not None and yp is not None:
        n = xp.dim
        comps = []
        for i in range(n):
            acc = ()
            for k in range(n):
                acc = _mono_collect(
                    list(acc)
                    + list(_poly_mul(_poly_diff(yp.components[i], k), xp.components[k]))
                    + [(-c, e) for c, e in
                       _poly_mul(_poly_diff(xp.components[i], k), yp.components[k])]
                )
            comps.append(acc)
        return PolynomialField(comps, n, name=f"[{x_field.name},{y_field.name}]")

    def value(x):
        return y_field.jacobian(x) @ x_field(x) - x_field.jacobian(x) @ y_field(x)

    noise = 0.0
    if not x_field.has_analytic_jacobian:
        noise += _jacobian_noise(x_field.value_noise)
    if not y_field.has_analytic_jacobian:
        noise += _jacobian_noise(y_field.value_noise)
    noise += x_field.value_noise + y_field.value_noise
    return VectorField(value, name=f"[{x_field.name},{y_field.name}]", value_noise=noise)


def flatten_lift(field: VectorField) -> VectorField:
    """The lift of a field as a single field on the 2n-dimensional ambient
    representation of the tangent bundle: z = (x, v) -> (X(x), J_X(x) v)."""
    if isinstance(field, LinearField):
        a = field.matrix
        n = a.shape[0]
        big = np.zeros((2 * n, 2 * n))
        big[:n, :n] = a
        big[n:, n:] = a
        return LinearField(big, name=f"{field.name}^c")
    if isinstance(field, ConstantField):
        return ConstantField(np.concatenate([field.vector, np.zeros_like(field.vector)]),
                             name=f"{field.name}^c")
    poly = field.as_polynomial()
    if poly is not None:
        n = poly.dim
        comps = []
        for i in range(n):
            comps.append(tuple((c, e + (0,) * n) for c, e in poly.components[i]))
        for i in range(n):
            monos = []
            for j in range(n):
                for c, e in _poly_diff(poly.components[i], j):
                    v_exp = [0] * n
                    v_exp[j] = 1
                    monos.append((c, e + tuple(v_exp)))
            comps.append(_mono_collect(monos))
        return PolynomialField(comps, 2 * n, name=f"{field.name}^c")

    def value(z):
        n = z.shape[0] // 2
        x, v = z[:n], z[n:]
        return np.concatenate([field(x), field.jacobian(x) @ v])

    noise = field.value_noise
    if not field.has_analytic_jacobian:
        noise += _jacobian_noise(field.value_noise)
    return VectorField(value, name=f"{field.name}^c", value_noise=noise)


def check_pi_related(field: VectorField, samples) -> float:
    """Max over samples of |horizontal part of the lift - field at the base|.

    Zero by construction; kept as an executable statement of the contract.
    """
    lifted = complete_lift(field)
    worst = 0.0
    for p in samples:
        dev = float(np.linalg.norm(lifted.horizontal(p) - field(p.x)))
        worst = max(worst, dev)
    return worst


def check_bracket_identity(x_field: VectorField, y_field: VectorField, samples) -> float:
    """Compare [X^c, Y^c] against [X, Y]^c at the given tangent points.

    The left side brackets the flattened 2n-dimensional lifts; the right side
    lifts the base bracket. Returns the max norm difference.
    """
    left = lie_bracket(flatten_lift(x_field), flatten_lift(y_field))
    right = complete_lift(lie_bracket(x_field, y_field))
    worst = 0.0
    for p in samples:
        z = np.concatenate([p.x, p.v])
        h, vert = right(p)
        dev = float(np.linalg.norm(left(z) - np.concatenate([h, vert])))
        worst = max(worst, dev)
    return worst


# Registry of named custom-field builders for definition files.
_FIELD_BUILDERS = {}


def register_field_type(name: str, builder) -> None:
    _FIELD_BUILDERS[name] = builder


def _build_polynomial(desc: dict) -> PolynomialField:
    comps = [
        [(float(coeff), tuple(int(e) for e in exps)) for coeff, exps in component]
        for component in desc["components"]
    ]
    return PolynomialField(comps, len(comps))


register_field_type("polynomial", _build_polynomial)


def field_from_descriptor(desc: dict) -> VectorField:
    """Deserialize a field descriptor from a system-definition file."""
    kind = desc.get("type")
    if kind == "linear":
        return LinearField(np.asarray(desc["matrix"], dtype=float))
    if kind == "constant":
        return ConstantField(np.asarray(desc["vector"], dtype=float))
    if kind == "zero":
        return zero_field(int(desc["dim"]))
    if kind in _FIELD_BUILDERS:
        return _FIELD_BUILDERS[kind](desc)
    raise ValueError(f"unknown field type {kind!r}")


def field_to_descriptor(field: VectorField) -> dict:
    if isinstance(field, LinearField):
        return {"type": "linear", "matrix": field.matrix.tolist()}
    if isinstance(field, ConstantField):
        return {"type": "constant", "vector": field.vector.tolist()}
    if isinstance(field, PolynomialField):
        return {
            "type": "polynomial",
            "components": [[[c, list(e)] for c, e in comp] for comp in field.components],
        }
    raise ValueError("custom fields have no serializable descriptor")
