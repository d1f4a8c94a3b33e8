"""Catalog of smooth compactly supported functions, vector fields and
cylinder functionals.

Every catalog member exposes analytic first and second derivatives and a
bounding support box, because the calculus and quasi-invariance code
needs both. Arbitrary closures are deliberately not accepted.

All evaluators are vectorized: they take an ``(m, d)`` array of points
(or a single ``(d,)`` point) and return arrays with the leading shape
preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _points(x, dim: int) -> tuple[np.ndarray, tuple]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    lead = x.shape[:-1]
    return x.reshape(-1, dim), lead


class SmoothTestFunction:
    """Base class for C-infinity functions on R^d with compact support."""

    dim: int

    def _value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _laplacian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box ``(lower, upper)`` outside which the function is 0."""
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        p, lead = _points(x, self.dim)
        return self._value(p).reshape(lead)

    __call__ = value

    def grad(self, x) -> np.ndarray:
        p, lead = _points(x, self.dim)
        return self._grad(p).reshape(lead + (self.dim,))

    def laplacian(self, x) -> np.ndarray:
        p, lead = _points(x, self.dim)
        return self._laplacian(p).reshape(lead)

    def sup_abs(self) -> float:
        """Upper bound on |f|, used for plateau brackets and sanity checks."""
        raise NotImplementedError

    def is_nonnegative(self) -> bool:
        return False

    def __add__(self, other: "SmoothTestFunction") -> "SumFunction":
        return SumFunction([self, other])

    def __mul__(self, other):
        if isinstance(other, SmoothTestFunction):
            return ProductFunction(self, other)
        return SumFunction([self], [float(other)])

    __rmul__ = __mul__


@dataclass(eq=False)
class Bump(SmoothTestFunction):
    """``amplitude * exp(-1 / (1 - |x - center|^2 / radius^2))`` inside the ball.

    Note the peak value is ``amplitude / e``.
    """

    center: np.ndarray
    radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        self.dim = self.center.size
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")

    def _parts(self, x):
        diff = x - self.center
        u = np.sum(diff * diff, axis=1) / self.radius**2
        inside = u < 1.0
        one_minus = np.where(inside, 1.0 - u, 1.0)
        g = np.where(inside, np.exp(-1.0 / one_minus), 0.0)
        return diff, u, inside, one_minus, g

    def _value(self, x):
        return self.amplitude * self._parts(x)[4]

    def _grad(self, x):
        diff, u, inside, om, g = self._parts(x)
        dg_du = -g / om**2
        return (self.amplitude * dg_du * 2.0 / self.radius**2)[:, None] * diff

    def _laplacian(self, x):
        diff, u, inside, om, g = self._parts(x)
        dg = -g / om**2
        d2g = g * (2.0 * u - 1.0) / om**4
        r2 = self.radius**2
        return self.amplitude * (d2g * 4.0 * u / r2 + dg * 2.0 * self.dim / r2)

    def support(self):
        return self.center - self.radius, self.center + self.radius

    def sup_abs(self):
        return abs(self.amplitude) * np.exp(-1.0)

    def is_nonnegative(self):
        return self.amplitude >= 0

    def lipschitz(self) -> float:
        """Max of |grad| over the ball (radial profile, dense 1-D search)."""
        u = np.linspace(0.0, 1.0, 20001)[1:-1]
        om = 1.0 - u
        slope = np.exp(-1.0 / om) / om**2 * 2.0 * np.sqrt(u) / self.radius
        return float(abs(self.amplitude) * slope.max() * (1 + 1e-6))


def _ramp(t):
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1) with two derivatives."""
    t = np.asarray(t, dtype=float)
    inner = (t > 0) & (t < 1)
    tc = np.clip(t, 1e-9, 1 - 1e-9)
    g = np.clip(1.0 / tc - 1.0 / (1.0 - tc), -700, 700)
    psi_in = 1.0 / (1.0 + np.exp(g))
    k = 1.0 / tc**2 + 1.0 / (1.0 - tc) ** 2
    dk = -2.0 / tc**3 + 2.0 / (1.0 - tc) ** 3
    s = psi_in * (1.0 - psi_in)
    d1_in = s * k
    d2_in = d1_in * (1.0 - 2.0 * psi_in) * k + s * dk
    psi = np.where(inner, psi_in, np.where(t >= 1, 1.0, 0.0))
    d1 = np.where(inner, d1_in, 0.0)
    d2 = np.where(inner, d2_in, 0.0)
    return psi, d1, d2


@dataclass(eq=False)
class Plateau(SmoothTestFunction):
    """Smooth approximation of ``amplitude * 1_[lower, upper]``.

    Equal to ``amplitude`` on the box, zero outside the box inflated by
    ``width``, with a C-infinity ramp in between. Since
    ``1_[lower, upper] <= plateau / amplitude <= 1_[lower - width, upper + width]``,
    functionals monotone in f are bracketed by the two indicator values.
    """

    lower: np.ndarray
    upper: np.ndarray
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.dim = self.lower.size
        if not np.all(self.lower <= self.upper) or not self.width > 0:
            raise ValueError("plateau needs lower <= upper and width > 0")

    def _profiles(self, x):
        w = self.width
        pu, du, ddu = _ramp((x - (self.lower - w)) / w)
        pv, dv, ddv = _ramp(((self.upper + w) - x) / w)
        p = pu * pv
        dp = (du * pv - pu * dv) / w
        ddp = (ddu * pv - 2.0 * du * dv + pu * ddv) / w**2
        return p, dp, ddp

    def _others(self, p, k):
        mask = np.ones(self.dim, dtype=bool)
        mask[k] = False
        return np.prod(p[:, mask], axis=1)

    def _value(self, x):
        p, _, _ = self._profiles(x)
        return self.amplitude * np.prod(p, axis=1)

    def _grad(self, x):
        p, dp, _ = self._profiles(x)
        out = np.empty_like(x)
        for k in range(self.dim):
            out[:, k] = dp[:, k] * self._others(p, k)
        return self.amplitude * out

    def _laplacian(self, x):
        p, _, ddp = self._profiles(x)
        out = np.zeros(x.shape[0])
        for k in range(self.dim):
            out += ddp[:, k] * self._others(p, k)
        return self.amplitude * out

    def support(self):
        return self.lower - self.width, self.upper + self.width

    def sup_abs(self):
        return abs(self.amplitude)

    def is_nonnegative(self):
        return self.amplitude >= 0


@dataclass(eq=False)
class SumFunction(SmoothTestFunction):
    """Weighted finite sum of catalog functions."""

    terms: Sequence[SmoothTestFunction]
    weights: Sequence[float] | None = None

    def __post_init__(self):
        self.terms = list(self.terms)
        if not self.terms:
            raise ValueError("empty sum")
        self.dim = self.terms[0].dim
        if any(t.dim != self.dim for t in self.terms):
            raise ValueError("dimension mismatch in sum")
        self.weights = [1.0] * len(self.terms) if self.weights is None else [float(w) for w in self.weights]

    def _value(self, x):
        return sum(w * t._value(x) for w, t in zip(self.weights, self.terms))

    def _grad(self, x):
        return sum(w * t._grad(x) for w, t in zip(self.weights, self.terms))

    def _laplacian(self, x):
        return sum(w * t._laplacian(x) for w, t in zip(self.weights, self.terms))

    def support(self):
        boxes = [t.support() for t in self.terms]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def sup_abs(self):
        return sum(abs(w) * t.sup_abs() for w, t in zip(self.weights, self.terms))

    def is_nonnegative(self):
        return all(w >= 0 and t.is_nonnegative() for w, t in zip(self.weights, self.terms))


@dataclass(eq=False)
class ProductFunction(SmoothTestFunction):
    left: SmoothTestFunction
    right: SmoothTestFunction

    def __post_init__(self):
        if self.left.dim != self.right.dim:
            raise ValueError("dimension mismatch in product")
        self.dim = self.left.dim

    def _value(self, x):
        return self.left._value(x) * self.right._value(x)

    def _grad(self, x):
        a, b = self.left._value(x), self.right._value(x)
        return a[:, None] * self.right._grad(x) + b[:, None] * self.left._grad(x)

    def _laplacian(self, x):
        a, b = self.left._value(x), self.right._value(x)
        cross = np.sum(self.left._grad(x) * self.right._grad(x), axis=1)
        return a * self.right._laplacian(x) + b * self.left._laplacian(x) + 2.0 * cross

    def support(self):
        la, ua = self.left.support()
        lb, ub = self.right.support()
        lo, hi = np.maximum(la, lb), np.minimum(ua, ub)
        # disjoint supports: an empty box anchored at the left support
        return lo, np.maximum(hi, lo)

    def sup_abs(self):
        return self.left.sup_abs() * self.right.sup_abs()

    def is_nonnegative(self):
        return self.left.is_nonnegative() and self.right.is_nonnegative()


@dataclass(eq=False)
class ZeroFunction(SmoothTestFunction):
    dim: int = 1

    def _value(self, x):
        return np.zeros(x.shape[0])

    def _grad(self, x):
        return np.zeros_like(x)

    def _laplacian(self, x):
        return np.zeros(x.shape[0])

    def support(self):
        z = np.zeros(self.dim)
        return z, z.copy()

    def sup_abs(self):
        return 0.0

    def is_nonnegative(self):
        return True


@dataclass(eq=False)
class SmoothVectorField:
    """Compactly supported vector field with one catalog function per component."""

    components: Sequence[SmoothTestFunction]

    def __post_init__(self):
        self.components = list(self.components)
        self.dim = len(self.components)
        if any(c.dim != self.dim for c in self.components):
            raise ValueError("vector field needs d components on R^d")

    @classmethod
    def along(cls, profile: SmoothTestFunction, direction) -> "SmoothVectorField":
        """``v(x) = profile(x) * direction``."""
        u = np.atleast_1d(np.asarray(direction, dtype=float))
        if u.size != profile.dim:
            raise ValueError("direction has wrong dimension")
        comps = [SumFunction([profile], [c]) if c != 0 else ZeroFunction(profile.dim) for c in u]
        return cls(comps)

    @classmethod
    def zero(cls, dim: int) -> "SmoothVectorField":
        return cls([ZeroFunction(dim) for _ in range(dim)])

    def value(self, x) -> np.ndarray:
        p, lead = _points(x, self.dim)
        out = np.stack([c._value(p) for c in self.components], axis=1)
        return out.reshape(lead + (self.dim,))

    __call__ = value

    def component_gradients(self, x) -> np.ndarray:
        """Jacobian rows: ``out[..., k, :] = grad v_k``."""
        p, lead = _points(x, self.dim)
        out = np.stack([c._grad(p) for c in self.components], axis=1)
        return out.reshape(lead + (self.dim, self.dim))

    def divergence(self, x) -> np.ndarray:
        p, lead = _points(x, self.dim)
        out = sum(c._grad(p)[:, k] for k, c in enumerate(self.components))
        return np.asarray(out).reshape(lead)

    def support(self):
        boxes = [c.support() for c in self.components]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


# Outer functions f: R^k -> R for cylinder functionals.

_PROFILES = {
    # name: (h, h', h'')
    "identity": (lambda z: z, lambda z: np.ones_like(z), lambda z: np.zeros_like(z)),
    "tanh": (
        np.tanh,
        lambda z: 1.0 - np.tanh(z) ** 2,
        lambda z: -2.0 * np.tanh(z) * (1.0 - np.tanh(z) ** 2),
    ),
    "sin": (np.sin, np.cos, lambda z: -np.sin(z)),
    "expneg": (lambda z: np.exp(-z), lambda z: -np.exp(-z), lambda z: np.exp(-z)),
}


@dataclass(eq=False)
class OuterFunction:
    """``f(t) = h(offset + linear . t + t^T quadratic t)`` for a profile h.

    The named constructors cover the catalog: linear, tanh ridge, sine
    ridge, Gaussian, squashed quadratic and constant.
    """

    profile: str
    linear: np.ndarray
    quadratic: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        self.linear = np.atleast_1d(np.asarray(self.linear, dtype=float))
        self.k = self.linear.size
        if self.quadratic is not None:
            q = np.asarray(self.quadratic, dtype=float).reshape(self.k, self.k)
            self.quadratic = 0.5 * (q + q.T)

    @classmethod
    def linear_form(cls, weights, offset=0.0):
        return cls("identity", weights, offset=offset)

    @classmethod
    def tanh(cls, weights, offset=0.0):
        return cls("tanh", weights, offset=offset)

    @classmethod
    def sine(cls, weights, offset=0.0):
        return cls("sin", weights, offset=offset)

    @classmethod
    def gaussian(cls, center, scale=1.0):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        s2 = np.broadcast_to(np.asarray(scale, dtype=float) ** 2, c.shape)
        return cls("expneg", -2.0 * c / s2, np.diag(1.0 / s2), float(np.sum(c * c / s2)))

    @classmethod
    def squashed_quadratic(cls, linear, quadratic, offset=0.0):
        return cls("tanh", linear, quadratic, offset)

    @classmethod
    def constant(cls, value, k=1):
        return cls("identity", np.zeros(k), offset=float(value))

    def _z(self, t):
        z = self.offset + t @ self.linear
        dz = np.broadcast_to(self.linear, t.shape).copy()
        if self.quadratic is not None:
            z = z + np.einsum("ni,ij,nj->n", t, self.quadratic, t)
            dz += 2.0 * t @ self.quadratic
        return z, dz

    def value(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return _PROFILES[self.profile][0](self._z(t)[0])

    def grad(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        z, dz = self._z(t)
        return _PROFILES[self.profile][1](z)[:, None] * dz

    def hessian(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        z, dz = self._z(t)
        _, h1, h2 = _PROFILES[self.profile]
        out = h2(z)[:, None, None] * dz[:, :, None] * dz[:, None, :]
        if self.quadratic is not None:
            out += h1(z)[:, None, None] * 2.0 * self.quadratic
        return out

    def is_constant(self) -> bool:
        return not np.any(self.linear) and (self.quadratic is None or not np.any(self.quadratic))


@dataclass(eq=False)
class CylinderFunction:
    """Local functional ``F(gamma) = f(<phi_1, gamma>, ..., <phi_k, gamma>)``.

    The batched methods work on flat point arrays tagged with a group
    index (one group per configuration); ``configspace`` wraps them for
    single configurations.
    """

    outer: OuterFunction
    inner: Sequence[SmoothTestFunction]

    def __post_init__(self):
        self.inner = list(self.inner)
        if len(self.inner) != self.outer.k:
            raise ValueError("outer arity does not match the number of inner functions")
        self.dim = self.inner[0].dim

    @classmethod
    def constant(cls, value: float, dim: int = 1) -> "CylinderFunction":
        return cls(OuterFunction.constant(value, 1), [ZeroFunction(dim)])

    def support(self):
        boxes = [phi.support() for phi in self.inner]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def pairings(self, points, group=None, n_groups: int = 1, weights=None) -> np.ndarray:
        """Matrix ``T[g, i] = sum over points p in group g of w_p * phi_i(p)``."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        group = np.zeros(points.shape[0], dtype=np.intp) if group is None else np.asarray(group)
        T = np.empty((n_groups, len(self.inner)))
        for i, phi in enumerate(self.inner):
            vals = phi._value(points) if points.size else np.zeros(0)
            if weights is not None:
                vals = vals * weights
            T[:, i] = np.bincount(group, weights=vals, minlength=n_groups)
        return T

    def values(self, T) -> np.ndarray:
        return self.outer.value(T)

    def point_gradients(self, points, T_at_point) -> np.ndarray:
        """Gradient of F with respect to each single point, given the pairings
        of the configuration that point belongs to."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if points.shape[0] == 0:
            return np.zeros((0, self.dim))
        df = self.outer.grad(T_at_point)
        out = np.zeros_like(points)
        for i, phi in enumerate(self.inner):
            out += df[:, i : i + 1] * phi._grad(points)
        return out

    def point_laplacians(self, points, T_at_point) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if points.shape[0] == 0:
            return np.zeros(0)
        df = self.outer.grad(T_at_point)
        ddf = self.outer.hessian(T_at_point)
        grads = [phi._grad(points) for phi in self.inner]
        out = np.zeros(points.shape[0])
        for i, phi in enumerate(self.inner):
            out += df[:, i] * phi._laplacian(points)
            for j in range(len(self.inner)):
                out += ddf[:, i, j] * np.sum(grads[i] * grads[j], axis=1)
        return out
