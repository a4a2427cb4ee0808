"""Geometry kernels for the manifolds the solvers run on.

Four spaces are supported, each with exact exponential/logarithm maps,
parallel transport along geodesics, the Riemannian metric, and distance:

- ``Euclidean(d)``: flat space, everything reduces to vector arithmetic.
- ``Sphere(d)``: unit vectors in R^d (``d`` is the ambient dimension,
  intrinsic dimension d-1), sectional curvature +1.
- ``Spd(d)``: symmetric positive-definite d x d matrices with the
  affine-invariant metric ``<U, V>_X = tr(X^-1 U X^-1 V)``.
- ``Product``: a tuple of factor manifolds with the metric summed over
  factors.

Points and tangent vectors are thin immutable wrappers around numpy
payloads, tagged with the manifold they belong to (and, for tangents, the
base point). All operations are pure functions of their inputs; descriptors,
points and tangents can be shared freely across threads.

Curvature bounds are carried on the descriptor. For SPD matrices they are
configurable: the affine-invariant metric is nonpositively curved, but some
benchmark setups model the curvature interval as [-1/2, 1], so neither
choice is hard-coded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "GeodesicNotUniqueError",
    "NumericError",
    "Point",
    "Tangent",
    "Manifold",
    "Euclidean",
    "Sphere",
    "Spd",
    "Product",
    "point_to_json",
    "point_from_json",
]

_SYM_TOL = 1e-10
_UNIT_TOL = 1e-10
_ORTHO_TOL = 1e-10
# Relative eigenvalue floor below which a matrix is rejected as not PD.
_PD_RTOL = 1e-12
# Inner product at or below -1 + this margin marks a sphere antipode.
_ANTIPODE_TOL = 1e-12


class GeometryError(Exception):
    """Base class for failures inside geometry kernels."""


class GeodesicNotUniqueError(GeometryError):
    """The geodesic between the two points is not unique (sphere antipodes)."""


class NumericError(GeometryError):
    """Non-finite payloads or an eigenvalue collapse below the PD threshold."""


def _require_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains non-finite entries")


def _sym(a: np.ndarray) -> np.ndarray:
    """Symmetrize; applied after every SPD matrix function to kill drift."""
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class Point:
    """A point on a manifold: the descriptor plus its raw payload.

    Payloads: unit vector (sphere), SPD matrix (spd), vector (euclidean),
    tuple of factor payloads (product). Construct through
    ``Manifold.point`` so the invariants are checked.
    """

    manifold: "Manifold"
    value: object

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Point({self.manifold!r}, {self.value!r})"


@dataclass(frozen=True, eq=False)
class Tangent:
    """A tangent vector at ``base``.

    Supports the linear operations needed by the solvers: addition of
    tangents at the same base point, negation, and scalar multiplication.
    """

    base: Point
    value: object

    @property
    def manifold(self) -> "Manifold":
        return self.base.manifold

    def __add__(self, other: "Tangent") -> "Tangent":
        _require_same_base(self.base, other.base)
        return Tangent(self.base, _payload_add(self.value, other.value))

    def __sub__(self, other: "Tangent") -> "Tangent":
        return self + (-other)

    def __neg__(self) -> "Tangent":
        return Tangent(self.base, _payload_scale(self.value, -1.0))

    def __mul__(self, scalar: float) -> "Tangent":
        return Tangent(self.base, _payload_scale(self.value, float(scalar)))

    __rmul__ = __mul__

    def norm(self) -> float:
        return self.manifold.norm(self)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tangent(base={self.base!r}, {self.value!r})"


def _payload_add(a, b):
    if isinstance(a, tuple):
        return tuple(_payload_add(x, y) for x, y in zip(a, b))
    return a + b


def _payload_scale(a, s: float):
    if isinstance(a, tuple):
        return tuple(_payload_scale(x, s) for x in a)
    return s * a


def _payload_equal(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_payload_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def _require_same_base(a: Point, b: Point) -> None:
    if a.manifold != b.manifold or not _payload_equal(a.value, b.value):
        raise ValueError("tangent vectors live at different base points")


class Manifold:
    """Common surface of every geometry kernel.

    Subclasses implement the payload-level kernels ``_exp``, ``_log``,
    ``_transport``, ``_inner`` and the validators; the public methods wrap
    payloads into :class:`Point` / :class:`Tangent` and enforce the
    preconditions (matching descriptors, matching base points).
    """

    kind: str = ""

    # -- descriptor data ---------------------------------------------------
    @property
    def dim(self) -> int:
        """Intrinsic dimension."""
        raise NotImplementedError

    # -- payload validation ------------------------------------------------
    def _check_point(self, value) -> None:
        raise NotImplementedError

    def _check_tangent(self, x, value) -> None:
        raise NotImplementedError

    def point(self, value) -> Point:
        """Wrap and validate a raw payload as a point on this manifold."""
        value = self._coerce(value)
        self._check_point(value)
        return Point(self, value)

    def tangent(self, x: Point, value) -> Tangent:
        """Wrap and validate a raw payload as a tangent vector at ``x``."""
        self._require_mine(x)
        value = self._coerce(value)
        self._check_tangent(x.value, value)
        return Tangent(x, value)

    def _coerce(self, value):
        if isinstance(value, tuple):
            return value
        return np.asarray(value, dtype=float)

    def _require_mine(self, p: Point) -> None:
        if p.manifold != self:
            raise ValueError(f"point belongs to {p.manifold!r}, not {self!r}")

    # -- operations ----------------------------------------------------------
    def exp(self, x: Point, v: Tangent) -> Point:
        """Follow the geodesic from ``x`` with initial velocity ``v`` for unit time."""
        self._require_mine(x)
        _require_same_base(v.base, x)
        return Point(self, self._exp(x.value, v.value))

    def log(self, x: Point, y: Point) -> Tangent:
        """Inverse of :meth:`exp`: the tangent at ``x`` pointing to ``y``."""
        self._require_mine(x)
        self._require_mine(y)
        return Tangent(x, self._log(x.value, y.value))

    def transport(self, x: Point, y: Point, v: Tangent) -> Tangent:
        """Parallel transport of ``v`` along the geodesic from ``x`` to ``y``."""
        self._require_mine(x)
        self._require_mine(y)
        _require_same_base(v.base, x)
        return Tangent(y, self._transport(x.value, y.value, v.value))

    def inner(self, u: Tangent, v: Tangent) -> float:
        """Riemannian inner product of two tangents at the same base point."""
        _require_same_base(u.base, v.base)
        self._require_mine(u.base)
        return float(self._inner(u.base.value, u.value, v.value))

    def norm(self, v: Tangent) -> float:
        return math.sqrt(max(self.inner(v, v), 0.0))

    def distance(self, x: Point, y: Point) -> float:
        """Geodesic distance, equal to the norm of ``log(x, y)``."""
        self._require_mine(x)
        self._require_mine(y)
        return float(self._distance(x.value, y.value))

    def zero_tangent(self, x: Point) -> Tangent:
        self._require_mine(x)
        return Tangent(x, _payload_scale(x.value, 0.0) if isinstance(x.value, tuple) else np.zeros_like(x.value))

    # -- randomness ----------------------------------------------------------
    def random_point(self, rng: np.random.Generator) -> Point:
        return Point(self, self._random_point(rng))

    def random_tangent(self, x: Point, rng: np.random.Generator, scale: float = 1.0) -> Tangent:
        """Random tangent at ``x`` with norm exactly ``scale``."""
        if not scale > 0:
            raise ValueError("scale must be positive")
        self._require_mine(x)
        v = Tangent(x, self._gauss_tangent(x.value, rng))
        n = self.norm(v)
        if n == 0.0:  # pragma: no cover - probability zero
            return self.random_tangent(x, rng, scale)
        return v * (scale / n)

    def standard_gaussian_tangent(self, x: Point, rng: np.random.Generator) -> Tangent:
        """Isotropic Gaussian tangent with unit variance per intrinsic coordinate.

        Satisfies E[|v|^2] = dim; the noise model scales this draw to hit a
        prescribed second moment exactly.
        """
        self._require_mine(x)
        return Tangent(x, self._gauss_tangent(x.value, rng))

    # -- payload kernels (implemented by subclasses) --------------------------
    def _exp(self, x, v):
        raise NotImplementedError

    def _log(self, x, y):
        raise NotImplementedError

    def _transport(self, x, y, v):
        raise NotImplementedError

    def _inner(self, x, u, v) -> float:
        raise NotImplementedError

    def _distance(self, x, y) -> float:
        v = self._log(x, y)
        return math.sqrt(max(self._inner(x, v, v), 0.0))

    def _random_point(self, rng):
        raise NotImplementedError

    def _gauss_tangent(self, x, rng):
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(Manifold):
    """Flat R^d. Exp/log are vector addition/subtraction, transport is identity."""

    d: int
    diameter_bound: float = math.inf
    kind: str = field(default="euclidean", init=False)
    kappa_min: float = field(default=0.0, init=False)
    kappa_max: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.d

    def _check_point(self, value) -> None:
        if value.shape != (self.d,):
            raise ValueError(f"expected shape ({self.d},), got {value.shape}")
        _require_finite(value, "point")

    def _check_tangent(self, x, value) -> None:
        if value.shape != (self.d,):
            raise ValueError(f"expected shape ({self.d},), got {value.shape}")
        _require_finite(value, "tangent")

    def _exp(self, x, v):
        return x + v

    def _log(self, x, y):
        return y - x

    def _transport(self, x, y, v):
        return v.copy()

    def _inner(self, x, u, v) -> float:
        return float(np.dot(u, v))

    def _random_point(self, rng):
        return rng.standard_normal(self.d)

    def _gauss_tangent(self, x, rng):
        return rng.standard_normal(self.d)


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere {x in R^d : |x| = 1}; ``d`` is the ambient dimension.

    Sectional curvature is identically +1, so the descriptor carries the
    interval [0, 1] (a lower bound need not be tight, only valid) and the
    diameter pi. Antipodal pairs have no unique geodesic and are rejected.
    """

    d: int
    diameter_bound: float = math.pi
    kind: str = field(default="sphere", init=False)
    kappa_min: float = field(default=0.0, init=False)
    kappa_max: float = field(default=1.0, init=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("ambient dimension must be >= 2")
        if self.diameter_bound > math.pi:
            raise ValueError("sphere diameter bound cannot exceed pi")

    @property
    def dim(self) -> int:
        return self.d - 1

    def _check_point(self, value) -> None:
        if value.shape != (self.d,):
            raise ValueError(f"expected shape ({self.d},), got {value.shape}")
        _require_finite(value, "point")
        n = np.linalg.norm(value)
        if abs(n - 1.0) > _UNIT_TOL:
            raise ValueError(f"sphere point must have unit norm, got {n!r}")

    def _check_tangent(self, x, value) -> None:
        if value.shape != (self.d,):
            raise ValueError(f"expected shape ({self.d},), got {value.shape}")
        _require_finite(value, "tangent")
        dot = abs(float(np.dot(x, value)))
        if dot > _ORTHO_TOL * max(1.0, float(np.linalg.norm(value))):
            raise ValueError(f"sphere tangent must be orthogonal to base, <x,v>={dot!r}")

    def project_tangent(self, x, ambient: np.ndarray) -> np.ndarray:
        """Orthogonal projection of an ambient vector onto the tangent space."""
        return ambient - np.dot(x, ambient) * x

    def _exp(self, x, v):
        theta = np.linalg.norm(v)
        if theta == 0.0:
            return x.copy()
        out = math.cos(theta) * x + math.sin(theta) * (v / theta)
        return out / np.linalg.norm(out)

    def _log(self, x, y):
        dot = float(np.dot(x, y))
        if dot <= -1.0 + _ANTIPODE_TOL:
            raise GeodesicNotUniqueError("antipodal points on the sphere")
        u = y - dot * x
        nu = np.linalg.norm(u)
        theta = math.atan2(nu, dot)
        if nu < 1e-300:
            return np.zeros_like(x)
        return u * (theta / nu)

    def _transport(self, x, y, v):
        u = self._log(x, y)
        theta = np.linalg.norm(u)
        if theta == 0.0:
            return v.copy()
        e = u / theta
        coeff = float(np.dot(e, v))
        # Rotate the along-geodesic component in the span{x, e} plane.
        return v + coeff * ((math.cos(theta) - 1.0) * e - math.sin(theta) * x)

    def _inner(self, x, u, v) -> float:
        return float(np.dot(u, v))

    def _random_point(self, rng):
        g = rng.standard_normal(self.d)
        return g / np.linalg.norm(g)

    def _gauss_tangent(self, x, rng):
        return self.project_tangent(x, rng.standard_normal(self.d))


def _eigh_checked(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, rejecting non-PD spectra."""
    w, q = np.linalg.eigh(_sym(a))
    if not np.all(np.isfinite(w)):
        raise NumericError(f"{what}: non-finite eigenvalues")
    if w[0] <= _PD_RTOL * max(w[-1], 0.0) or w[0] <= 0.0:
        raise NumericError(f"{what}: eigenvalue {w[0]!r} below the PD threshold")
    return w, q


@dataclass(frozen=True)
class Spd(Manifold):
    """SPD matrices with the affine-invariant metric.

    exp_X(V) = X^1/2 expm(X^-1/2 V X^-1/2) X^1/2 and its inverse for the
    log map; parallel transport is V -> E V E^T with E = (Y X^-1)^1/2,
    computed here in the congruence form E = Y^1/2 S^-1/2 Y^-1/2 with
    S = Y^-1/2 X Y^-1/2 so that only symmetric eigendecompositions appear.
    Every matrix function is re-symmetrized to suppress roundoff drift.
    """

    n: int
    kappa_min: float = -0.5
    kappa_max: float = 1.0
    diameter_bound: float | None = None
    kind: str = field(default="spd", init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("matrix dimension must be >= 1")
        if self.kappa_min > 0 or self.kappa_min > self.kappa_max:
            raise ValueError("need kappa_min <= 0 and kappa_min <= kappa_max")
        if self.diameter_bound is None:
            default = math.pi / math.sqrt(self.kappa_max) if self.kappa_max > 0 else math.inf
            object.__setattr__(self, "diameter_bound", default)
        if self.kappa_max > 0 and self.diameter_bound > math.pi / math.sqrt(self.kappa_max):
            raise ValueError("diameter bound must not exceed pi/sqrt(kappa_max)")

    @property
    def dim(self) -> int:
        return self.n * (self.n + 1) // 2

    def _check_point(self, value) -> None:
        if value.shape != (self.n, self.n):
            raise ValueError(f"expected shape ({self.n}, {self.n}), got {value.shape}")
        _require_finite(value, "point")
        scale = max(float(np.linalg.norm(value)), 1.0)
        if float(np.linalg.norm(value - value.T)) > _SYM_TOL * scale:
            raise ValueError("SPD point must be symmetric")
        _eigh_checked(value, "SPD point")

    def _check_tangent(self, x, value) -> None:
        if value.shape != (self.n, self.n):
            raise ValueError(f"expected shape ({self.n}, {self.n}), got {value.shape}")
        _require_finite(value, "tangent")
        scale = max(float(np.linalg.norm(value)), 1.0)
        if float(np.linalg.norm(value - value.T)) > _SYM_TOL * scale:
            raise ValueError("SPD tangent must be symmetric")

    def _roots(self, x) -> tuple[np.ndarray, np.ndarray]:
        w, q = _eigh_checked(x, "SPD point")
        s = np.sqrt(w)
        half = _sym((q * s) @ q.T)
        inv_half = _sym((q / s) @ q.T)
        return half, inv_half

    def _exp(self, x, v):
        half, inv_half = self._roots(x)
        m = _sym(inv_half @ v @ inv_half)
        w, q = np.linalg.eigh(m)
        if not np.all(np.isfinite(w)):
            raise NumericError("SPD exp: non-finite sandwich eigenvalues")
        with np.errstate(over="ignore"):
            ew = np.exp(w)
        if not np.all(np.isfinite(ew)):
            raise NumericError("SPD exp: overflow in matrix exponential")
        inner = _sym((q * ew) @ q.T)
        return _sym(half @ inner @ half)

    def _log(self, x, y):
        half, inv_half = self._roots(x)
        s = _sym(inv_half @ y @ inv_half)
        w, q = _eigh_checked(s, "SPD log")
        inner = _sym((q * np.log(w)) @ q.T)
        return _sym(half @ inner @ half)

    def _transport(self, x, y, v):
        y_half, y_inv_half = self._roots(y)
        s = _sym(y_inv_half @ x @ y_inv_half)
        w, q = _eigh_checked(s, "SPD transport")
        s_inv_half = _sym((q / np.sqrt(w)) @ q.T)
        e = y_half @ s_inv_half @ y_inv_half
        return _sym(e @ v @ e.T)

    def _inner(self, x, u, v) -> float:
        a = np.linalg.solve(x, u)
        b = np.linalg.solve(x, v)
        return float(np.trace(a @ b))

    def _distance(self, x, y) -> float:
        _, inv_half = self._roots(x)
        s = _sym(inv_half @ y @ inv_half)
        w, _ = _eigh_checked(s, "SPD distance")
        return float(np.linalg.norm(np.log(w)))

    def _random_point(self, rng):
        q = random_orthogonal(self.n, rng)
        lam = rng.uniform(0.5, 2.0, size=self.n)
        return _sym((q * lam) @ q.T)

    def _gauss_tangent(self, x, rng):
        # Whitened coordinates: X^1/2 S X^1/2 has metric norm |S|_F, and
        # S = (G + G^T)/2 is the standard Gaussian on Sym(n).
        half, _ = self._roots(x)
        g = rng.standard_normal((self.n, self.n))
        s = _sym(g)
        return _sym(half @ s @ half)


@dataclass(frozen=True)
class Product(Manifold):
    """Product of factor manifolds; payloads are tuples of factor payloads.

    The metric is the sum over factors, so squared distances add. The
    curvature interval is the hull of the factor intervals; the diameter
    bound combines factor bounds in quadrature, clamped to pi/sqrt(kappa_max)
    when some factor is positively curved so the descriptor invariant holds.
    """

    factors: tuple[Manifold, ...]
    kind: str = field(default="product", init=False)

    def __post_init__(self):
        if not self.factors:
            raise ValueError("product needs at least one factor")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def kappa_min(self) -> float:
        return min(f.kappa_min for f in self.factors)

    @property
    def kappa_max(self) -> float:
        return max(f.kappa_max for f in self.factors)

    @property
    def diameter_bound(self) -> float:
        d = math.sqrt(sum(f.diameter_bound**2 for f in self.factors))
        if self.kappa_max > 0:
            d = min(d, math.pi / math.sqrt(self.kappa_max))
        return d

    def _split_points(self, value) -> list[Point]:
        return [f.point(v) for f, v in zip(self.factors, value)]

    def factor_points(self, p: Point) -> list[Point]:
        """View a product point as a list of per-factor points."""
        self._require_mine(p)
        return self._split_points(p.value)

    def _check_point(self, value) -> None:
        if not isinstance(value, tuple) or len(value) != len(self.factors):
            raise ValueError(f"expected a tuple of {len(self.factors)} payloads")
        for f, v in zip(self.factors, value):
            f._check_point(f._coerce(v))

    def _check_tangent(self, x, value) -> None:
        if not isinstance(value, tuple) or len(value) != len(self.factors):
            raise ValueError(f"expected a tuple of {len(self.factors)} payloads")
        for f, xv, v in zip(self.factors, x, value):
            f._check_tangent(xv, f._coerce(v))

    def _coerce(self, value):
        if not isinstance(value, (tuple, list)):
            raise ValueError("product payload must be a tuple")
        return tuple(f._coerce(v) for f, v in zip(self.factors, value))

    def _exp(self, x, v):
        return tuple(f._exp(xi, vi) for f, xi, vi in zip(self.factors, x, v))

    def _log(self, x, y):
        return tuple(f._log(xi, yi) for f, xi, yi in zip(self.factors, x, y))

    def _transport(self, x, y, v):
        return tuple(f._transport(xi, yi, vi) for f, xi, yi, vi in zip(self.factors, x, y, v))

    def _inner(self, x, u, v) -> float:
        return sum(f._inner(xi, ui, vi) for f, xi, ui, vi in zip(self.factors, x, u, v))

    def _distance(self, x, y) -> float:
        return math.sqrt(sum(f._distance(xi, yi) ** 2 for f, xi, yi in zip(self.factors, x, y)))

    def _random_point(self, rng):
        return tuple(f._random_point(rng) for f in self.factors)

    def _gauss_tangent(self, x, rng):
        return tuple(f._gauss_tangent(xi, rng) for f, xi in zip(self.factors, x))


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random orthogonal matrix via QR with a fixed sign convention."""
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


# -- serialization -----------------------------------------------------------


def _payload_to_list(value):
    if isinstance(value, tuple):
        return [_payload_to_list(v) for v in value]
    return np.asarray(value).tolist()


def point_to_json(p: Point) -> dict:
    """Serialize a point as ``{kind, payload}`` with row-major matrix payloads."""
    return {"kind": p.manifold.kind, "payload": _payload_to_list(p.value)}


def point_from_json(m: Manifold, data: dict) -> Point:
    """Rebuild a point on ``m`` from :func:`point_to_json` output."""
    if data.get("kind") != m.kind:
        raise ValueError(f"payload kind {data.get('kind')!r} does not match manifold {m.kind!r}")
    payload = data["payload"]
    if isinstance(m, Product):
        # factor coercion recurses, so nested products round-trip too
        return m.point(tuple(payload))
    return m.point(np.asarray(payload, dtype=float))
