"""Concrete saddle problems with exact and minibatch gradient oracles.

Three problem families:

- Robust PCA over SPD x sphere: the adversary holds an SPD matrix M, the
  minimizer a unit vector x, with objective
  ``-x^T M x - (alpha/n) * sum_i d(M, M_i)`` over a dataset of SPD matrices.
  Minimized over x (so x chases the top eigenvector of M) and maximized
  over M. The distance penalty is nonsmooth at M = M_i; the zero element
  of the subdifferential is selected there.
- Robust matrix mean over SPD x SPD^N: ``sum_i d(X, Y_i)^2 - gamma *
  sum_i d(Y_i, A_i)^2`` minimized over X and maximized over the perturbed
  anchors Y_i. Strongly convex-concave once gamma outpaces the distortion
  constant of the anchor region (gamma > 1 in flat space).
- A flat bilinear coupling ``x^T B y`` used as the exactness oracle for
  the solver reductions.

Riemannian gradients are hand-derived and are only ever trusted through the
finite-difference directional-derivative check in the test suite. The SPD
gradients use the affine-invariant conversion grad = M sym(euclidean) M and
the geodesic-distance gradients -2 log_X(Y) (squared) and -log_X(Y)/d
(plain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .manifolds import (
    Euclidean,
    Point,
    Product,
    Spd,
    Sphere,
    Tangent,
    _eigh_checked,
    _sym,
    random_orthogonal,
)
from .solvers import SaddleProblem

__all__ = [
    "gen_spd_data",
    "RpcaInstance",
    "rpca_value",
    "rpca_grad",
    "make_rpca",
    "MinibatchOracle",
    "minibatch_oracle",
    "KarcherInstance",
    "karcher_value",
    "karcher_grad",
    "make_karcher",
    "BilinearInstance",
    "make_bilinear",
    "estimate_smoothness",
    "estimate_strong_monotonicity",
    "instance_to_json",
    "instance_from_json",
]

# Distance below which the nonsmooth |d| penalty term takes the zero subgradient.
_SUBGRAD_TOL = 1e-9


def gen_spd_data(
    d: int, n: int, eig_lo: float = 0.2, eig_hi: float = 4.5, seed: int = 0
) -> list[np.ndarray]:
    """Seeded SPD matrices Q diag(lam) Q^T with lam uniform in [eig_lo, eig_hi]."""
    if not (0.0 < eig_lo <= eig_hi):
        raise ValueError("need 0 < eig_lo <= eig_hi")
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        q = random_orthogonal(d, rng)
        lam = rng.uniform(eig_lo, eig_hi, size=d)
        out.append(_sym((q * lam) @ q.T))
    return out


@dataclass(frozen=True)
class RpcaInstance:
    """Dataset and penalty weight for the robust PCA saddle problem."""

    d: int
    n: int
    alpha: float
    data: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if len(self.data) != self.n:
            raise ValueError(f"expected {self.n} data matrices, got {len(self.data)}")
        object.__setattr__(self, "data", tuple(np.asarray(m, dtype=float) for m in self.data))
        spd = Spd(self.d)
        for m in self.data:
            spd._check_point(m)

    @classmethod
    def generate(cls, d: int, n: int, alpha: float, seed: int = 0) -> "RpcaInstance":
        return cls(d=d, n=n, alpha=alpha, data=tuple(gen_spd_data(d, n, seed=seed)))


def _spd_logs_and_distances(
    spd: Spd, m_value: np.ndarray, targets: Sequence[np.ndarray]
) -> tuple[list[np.ndarray], list[float]]:
    """log_M(M_i) and d(M, M_i) for all targets, sharing one root factorization."""
    half, inv_half = spd._roots(m_value)
    logs, dists = [], []
    for tgt in targets:
        s = _sym(inv_half @ tgt @ inv_half)
        w, q = _eigh_checked(s, "SPD log")
        lw = np.log(w)
        logs.append(_sym(half @ _sym((q * lw) @ q.T) @ half))
        dists.append(float(np.linalg.norm(lw)))
    return logs, dists


def rpca_value(inst: RpcaInstance, m_point: Point, x_point: Point) -> float:
    """Objective -x^T M x - (alpha/n) sum_i d(M, M_i)."""
    spd = m_point.manifold
    if not isinstance(spd, Spd) or spd.n != inst.d:
        raise ValueError("M must live on the SPD manifold of the instance dimension")
    if x_point.value.shape != (inst.d,):
        raise ValueError("x must be a unit vector of the instance dimension")
    m, x = m_point.value, x_point.value
    _, dists = _spd_logs_and_distances(spd, m, inst.data)
    return float(-x @ m @ x - (inst.alpha / inst.n) * sum(dists))


def rpca_grad(
    inst: RpcaInstance, m_point: Point, x_point: Point, batch: Optional[np.ndarray] = None
) -> tuple[Tangent, Tangent]:
    """Riemannian gradients (at M, at x) of the robust PCA objective.

    ``batch`` restricts the distance terms to the given indices with the
    unbiased n/batch_size scaling. Terms with d(M, M_i) below tolerance
    contribute the zero subgradient.
    """
    spd: Spd = m_point.manifold  # type: ignore[assignment]
    sphere = x_point.manifold
    m, x = m_point.value, x_point.value

    # Sphere side: ambient gradient of -x^T M x projected onto the tangent space.
    ambient = -2.0 * (m @ x)
    gx = sphere.project_tangent(x, ambient)

    # SPD side: affine-invariant gradient of the quadratic term ...
    gm = -_sym(m @ np.outer(x, x) @ m)
    # ... plus the distance attraction toward each (sampled) data matrix.
    idx = range(inst.n) if batch is None else [int(i) for i in batch]
    weight = inst.alpha / inst.n if batch is None else inst.alpha / len(idx)
    targets = [inst.data[i] for i in idx]
    logs, dists = _spd_logs_and_distances(spd, m, targets)
    for lg, di in zip(logs, dists):
        if di > _SUBGRAD_TOL:
            gm = gm + (weight / di) * lg
    return Tangent(m_point, gm), Tangent(x_point, gx)


def make_rpca(
    inst: RpcaInstance,
    batch_size: Optional[int] = None,
    spd_kappa: tuple[float, float] = (-0.5, 1.0),
) -> SaddleProblem:
    """Saddle problem with x on the sphere (min side) and M on SPD (max side)."""
    sphere = Sphere(inst.d)
    spd = Spd(inst.d, kappa_min=spd_kappa[0], kappa_max=spd_kappa[1])
    oracle = MinibatchOracle(inst, batch_size) if batch_size is not None else None

    def value(x: Point, m: Point) -> float:
        return rpca_value(inst, m, x)

    def grad(x: Point, m: Point) -> tuple[Tangent, Tangent]:
        gm, gx = rpca_grad(inst, m, x)
        return gx, gm

    return SaddleProblem(m_min=sphere, m_max=spd, value=value, grad=grad, stochastic_grad=oracle)


class MinibatchOracle:
    """Unbiased minibatch gradient for robust PCA.

    Samples distance terms uniformly without replacement within an epoch
    (a shuffled pass over all n indices) and rescales them by n/batch_size.
    Each call advances the data-pass counter by ``passes_per_call``. A
    fresh shuffle is drawn from the caller's generator whenever the current
    epoch is exhausted, so trajectories are reproducible from the run seed.
    """

    def __init__(self, inst: RpcaInstance, batch_size: int, rng: Optional[np.random.Generator] = None):
        if not (1 <= batch_size <= inst.n):
            raise ValueError(f"batch_size must be in [1, {inst.n}], got {batch_size}")
        self.inst = inst
        self.batch_size = int(batch_size)
        self._rng = rng
        self._order: list[int] = []

    @property
    def passes_per_call(self) -> float:
        return self.batch_size / self.inst.n

    def _next_batch(self, rng: np.random.Generator) -> np.ndarray:
        while len(self._order) < self.batch_size:
            self._order.extend(rng.permutation(self.inst.n).tolist())
        batch = self._order[: self.batch_size]
        del self._order[: self.batch_size]
        return np.asarray(batch, dtype=int)

    def __call__(self, x: Point, m: Point, rng: np.random.Generator) -> tuple[Tangent, Tangent]:
        batch = self._next_batch(self._rng if self._rng is not None else rng)
        gm, gx = rpca_grad(self.inst, m, x, batch=batch)
        return gx, gm


def minibatch_oracle(
    inst: RpcaInstance, batch_size: int, rng: Optional[np.random.Generator] = None
) -> MinibatchOracle:
    """Build the minibatch closure; with ``rng`` given it owns its stream."""
    return MinibatchOracle(inst, batch_size, rng=rng)


@dataclass(frozen=True)
class KarcherInstance:
    """Anchors and trade-off weight for the robust matrix-mean saddle problem."""

    d: int
    n_anchors: int
    gamma: float
    anchors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if len(self.anchors) != self.n_anchors:
            raise ValueError(f"expected {self.n_anchors} anchors, got {len(self.anchors)}")
        object.__setattr__(self, "anchors", tuple(np.asarray(a, dtype=float) for a in self.anchors))
        spd = Spd(self.d)
        for a in self.anchors:
            spd._check_point(a)

    @classmethod
    def generate(
        cls, d: int, n_anchors: int, gamma: float, seed: int = 0, eig_lo: float = 0.5, eig_hi: float = 2.0
    ) -> "KarcherInstance":
        data = gen_spd_data(d, n_anchors, eig_lo=eig_lo, eig_hi=eig_hi, seed=seed)
        return cls(d=d, n_anchors=n_anchors, gamma=gamma, anchors=tuple(data))


def karcher_value(inst: KarcherInstance, x_point: Point, ys_point: Point) -> float:
    """Objective sum_i d(X, Y_i)^2 - gamma * sum_i d(Y_i, A_i)^2."""
    spd: Spd = x_point.manifold  # type: ignore[assignment]
    ys = ys_point.value
    total = 0.0
    for yi, ai in zip(ys, inst.anchors):
        total += spd._distance(x_point.value, yi) ** 2
        total -= inst.gamma * spd._distance(yi, ai) ** 2
    return float(total)


def karcher_grad(inst: KarcherInstance, x_point: Point, ys_point: Point) -> tuple[Tangent, Tangent]:
    """Riemannian gradients (at X, at the anchor block) of the robust mean objective.

    grad_X = -2 sum_i log_X(Y_i); per block grad_{Y_i} = -2 log_{Y_i}(X)
    + 2 gamma log_{Y_i}(A_i), oriented for ascent over the Y block.
    """
    spd: Spd = x_point.manifold  # type: ignore[assignment]
    ys = ys_point.value
    gx = np.zeros((inst.d, inst.d))
    gys = []
    for yi, ai in zip(ys, inst.anchors):
        gx = gx - 2.0 * spd._log(x_point.value, yi)
        gyi = -2.0 * spd._log(yi, x_point.value) + 2.0 * inst.gamma * spd._log(yi, ai)
        gys.append(gyi)
    return Tangent(x_point, gx), Tangent(ys_point, tuple(gys))


def make_karcher(
    inst: KarcherInstance,
    kappa_min: float = -0.5,
    kappa_max: float = 0.0,
) -> SaddleProblem:
    """Saddle problem with X on SPD (min side) and the Y block on SPD^N (max side)."""
    spd = Spd(inst.d, kappa_min=kappa_min, kappa_max=kappa_max)
    prod = Product(tuple(spd for _ in range(inst.n_anchors)))

    def value(x: Point, ys: Point) -> float:
        return karcher_value(inst, x, ys)

    def grad(x: Point, ys: Point) -> tuple[Tangent, Tangent]:
        return karcher_grad(inst, x, ys)

    return SaddleProblem(m_min=spd, m_max=prod, value=value, grad=grad)


@dataclass(frozen=True)
class BilinearInstance:
    """Flat coupling x^T B y; the exactness oracle for solver reductions."""

    k: int
    coupling: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("dimension must be >= 1")
        b = np.eye(self.k) if self.coupling is None else np.asarray(self.coupling, dtype=float)
        if b.shape != (self.k, self.k) or not np.all(np.isfinite(b)):
            raise ValueError("coupling must be a finite k x k matrix")
        object.__setattr__(self, "coupling", b)


def make_bilinear(inst: BilinearInstance) -> SaddleProblem:
    m = Euclidean(inst.k)
    b = inst.coupling

    def value(x: Point, y: Point) -> float:
        return float(x.value @ b @ y.value)

    def grad(x: Point, y: Point) -> tuple[Tangent, Tangent]:
        return Tangent(x, b @ y.value), Tangent(y, b.T @ x.value)

    ell = float(np.linalg.norm(b, 2))
    return SaddleProblem(m_min=m, m_max=m, value=value, grad=grad, ell=ell, mu=0.0)


# -- empirical constants -------------------------------------------------------


def _sample_pair(problem: SaddleProblem, rng: np.random.Generator) -> tuple[Point, Point]:
    return problem.m_min.random_point(rng), problem.m_max.random_point(rng)


def estimate_smoothness(problem: SaddleProblem, samples: int, rng) -> float:
    """Empirical gradient-Lipschitz modulus: max transported-difference ratio.

    Draws pairs of random points and returns the largest ratio between the
    transported gradient difference and the sum of the two displacement
    distances, over both gradient blocks. Nondecreasing in ``samples`` for
    a fixed seed; a lower bound on the true modulus.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    best = 0.0
    for _ in range(samples):
        x1, y1 = _sample_pair(problem, rng)
        x2, y2 = _sample_pair(problem, rng)
        dist = problem.m_min.distance(x1, x2) + problem.m_max.distance(y1, y2)
        if dist < 1e-12:
            continue
        gx1, gy1 = problem.grad(x1, y1)
        gx2, gy2 = problem.grad(x2, y2)
        dx = gx1 - problem.m_min.transport(x2, x1, gx2)
        dy = gy1 - problem.m_max.transport(y2, y1, gy2)
        best = max(best, problem.m_min.norm(dx) / dist, problem.m_max.norm(dy) / dist)
    return best


def estimate_strong_monotonicity(problem: SaddleProblem, samples: int, rng) -> float:
    """Empirical modulus of the saddle field (grad_x, -grad_y).

    Returns the smallest sampled value of the two-point monotonicity
    quotient; positive values certify strong convexity-concavity on the
    sampled region, nonpositive values flag that the instance is not
    strongly monotone there.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    worst = math.inf
    for _ in range(samples):
        x1, y1 = _sample_pair(problem, rng)
        x2, y2 = _sample_pair(problem, rng)
        d2 = problem.m_min.distance(x1, x2) ** 2 + problem.m_max.distance(y1, y2) ** 2
        if d2 < 1e-12:
            continue
        gx1, gy1 = problem.grad(x1, y1)
        gx2, gy2 = problem.grad(x2, y2)
        val = (
            -problem.m_min.inner(gx1, problem.m_min.log(x1, x2))
            - problem.m_min.inner(gx2, problem.m_min.log(x2, x1))
            + problem.m_max.inner(gy1, problem.m_max.log(y1, y2))
            + problem.m_max.inner(gy2, problem.m_max.log(y2, y1))
        )
        worst = min(worst, val / d2)
    if not math.isfinite(worst):
        raise ValueError("no usable sample pairs were drawn")
    return worst


# -- serialization -------------------------------------------------------------


def instance_to_json(inst) -> dict:
    """Serialize an instance (matrices row-major) for bit-exact reloading."""
    if isinstance(inst, RpcaInstance):
        return {
            "problem": "rpca",
            "d": inst.d,
            "n": inst.n,
            "alpha": inst.alpha,
            "data": [m.tolist() for m in inst.data],
        }
    if isinstance(inst, KarcherInstance):
        return {
            "problem": "karcher",
            "d": inst.d,
            "n_anchors": inst.n_anchors,
            "gamma": inst.gamma,
            "anchors": [a.tolist() for a in inst.anchors],
        }
    if isinstance(inst, BilinearInstance):
        return {"problem": "bilinear", "k": inst.k, "coupling": inst.coupling.tolist()}
    raise TypeError(f"unknown instance type {type(inst)!r}")


def instance_from_json(data: dict):
    kind = data.get("problem")
    if kind == "rpca":
        return RpcaInstance(
            d=data["d"], n=data["n"], alpha=data["alpha"], data=tuple(np.asarray(m) for m in data["data"])
        )
    if kind == "karcher":
        return KarcherInstance(
            d=data["d"],
            n_anchors=data["n_anchors"],
            gamma=data["gamma"],
            anchors=tuple(np.asarray(a) for a in data["anchors"]),
        )
    if kind == "bilinear":
        return BilinearInstance(k=data["k"], coupling=np.asarray(data["coupling"]))
    raise ValueError(f"unknown problem kind {kind!r}")
