"""Saddle-point solvers: corrected extragradient and gradient descent-ascent.

Four iteration schemes over a pair of manifolds (descend the first slot,
ascend the second):

- ``rceg``: corrected extragradient. Half-step to (x^, y^) along the exact
  gradient, then a full step from the half-point with the correction term
  log_{x^}(x_t) added so the update stays a single exponential map.
- ``srceg``: the same scheme driven by a noisy gradient oracle.
- ``rgda``: simultaneous exponential-map gradient descent-ascent.
- ``srgda``: its stochastic variant.

Each extragradient step consumes exactly two gradient-oracle evaluations,
each descent-ascent step exactly one.

Step-size schedules from the convergence analysis are provided as plain
functions (one per regime) plus small callable wrappers usable by the run
driver, alongside the practical min{1/(2l), a/t} decay used in benchmarks.

Averaging: the running (Karcher) mean of iterates is maintained through the
recursion mean <- exp_mean(log_mean(z) / (t+1)). Extragradient solvers
average their half-iterates, descent-ascent solvers the pre-step iterates.
The recursion starts from the first averaged input, which on flat space
reproduces the arithmetic mean exactly.

The noise model injects isotropic Gaussian tangent noise with per-block
second moment sigma^2/2, so E[|xi_x|^2 + |xi_y|^2] = sigma^2 holds with
equality; the two oracle queries inside one extragradient step draw from
separate RNG sub-streams so they are independent.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .manifolds import GeometryError, Manifold, Point, Tangent

__all__ = [
    "SaddleProblem",
    "SolverState",
    "NoiseModel",
    "initial_state",
    "rceg_step",
    "srceg_step",
    "rgda_step",
    "srgda_step",
    "running_mean_update",
    "schedule_rceg_scsc",
    "schedule_srceg_scsc",
    "schedule_srceg_cc",
    "schedule_rgda_scsc",
    "schedule_rgda_cc",
    "schedule_srgda_cc",
    "schedule_practical",
    "ConstantSchedule",
    "PracticalSchedule",
    "RgdaScscSchedule",
    "ExplicitSchedule",
    "Trace",
    "TraceRow",
    "run",
    "SOLVER_KINDS",
    "oracle_calls_per_step",
]

SOLVER_KINDS = ("rceg", "srceg", "rgda", "srgda")

GradFn = Callable[[Point, Point], tuple[Tangent, Tangent]]
StochasticGradFn = Callable[[Point, Point, np.random.Generator], tuple[Tangent, Tangent]]


@dataclass(frozen=True)
class SaddleProblem:
    """A min-max objective over a product of two manifolds.

    ``value(x, y)`` is minimized over the first slot and maximized over the
    second; ``grad`` returns the pair of Riemannian gradients (ascent
    direction in both slots -- the solvers flip the sign on the min side).
    ``stochastic_grad(x, y, rng)``, when present, is an unbiased noisy
    oracle. The constants mirror the regularity assumptions: gradient
    Lipschitz modulus ``ell``, function Lipschitz bound ``big_l``, strong
    convexity-concavity modulus ``mu``, and oracle noise bound ``sigma``.
    """

    m_min: Manifold
    m_max: Manifold
    value: Callable[[Point, Point], float]
    grad: GradFn
    stochastic_grad: Optional[StochasticGradFn] = None
    ell: Optional[float] = None
    big_l: Optional[float] = None
    mu: float = 0.0
    sigma: float = 0.0


@dataclass(frozen=True)
class SolverState:
    """Iterates of one run: current pair, half-iterates, running means.

    ``x_half``/``y_half`` are populated by the extragradient solvers only;
    ``x_bar``/``y_bar`` exist once the first averaging input arrived (t >= 1).
    The generator advances as the stochastic solvers consume it, so
    reproducibility is anchored at the seed used by :func:`initial_state`.
    """

    x: Point
    y: Point
    t: int
    rng: np.random.Generator
    x_half: Optional[Point] = None
    y_half: Optional[Point] = None
    x_bar: Optional[Point] = None
    y_bar: Optional[Point] = None


def initial_state(problem: SaddleProblem, x0: Point, y0: Point, seed_or_rng) -> SolverState:
    problem.m_min._require_mine(x0)
    problem.m_max._require_mine(y0)
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    return SolverState(x=x0, y=y0, t=0, rng=rng)


class NoiseModel:
    """Additive tangent noise with E[|xi_x|^2 + |xi_y|^2] = sigma^2 exactly.

    Two sub-streams are derived from the seed; stream 0 feeds the oracle
    query at the current iterate, stream 1 the query at the half-iterate,
    keeping the two draws of one extragradient step independent.
    """

    def __init__(self, sigma: float, seed: int = 0):
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.sigma = float(sigma)
        children = np.random.SeedSequence(seed).spawn(2)
        self._streams = [np.random.default_rng(c) for c in children]

    def draw(self, problem: SaddleProblem, x: Point, y: Point, stream: int) -> tuple[Tangent, Tangent]:
        rng = self._streams[stream]
        gx = problem.m_min.standard_gaussian_tangent(x, rng)
        gy = problem.m_max.standard_gaussian_tangent(y, rng)
        sx = self.sigma / math.sqrt(2.0 * problem.m_min.dim)
        sy = self.sigma / math.sqrt(2.0 * problem.m_max.dim)
        return gx * sx, gy * sy


def _eta_positive(eta: float) -> None:
    if not (eta > 0 and math.isfinite(eta)):
        raise ValueError(f"step size must be positive and finite, got {eta!r}")


def _noisy_grad(
    problem: SaddleProblem,
    state: SolverState,
    x: Point,
    y: Point,
    noise: Optional[NoiseModel],
    stream: int,
) -> tuple[Tangent, Tangent]:
    if noise is not None:
        gx, gy = problem.grad(x, y)
        nx, ny = noise.draw(problem, x, y, stream)
        return gx + nx, gy + ny
    if problem.stochastic_grad is None:
        raise ValueError("stochastic solver needs a NoiseModel or a problem stochastic_grad oracle")
    return problem.stochastic_grad(x, y, state.rng)


def _eg_step(problem: SaddleProblem, state: SolverState, eta: float, oracle) -> SolverState:
    mx, my = problem.m_min, problem.m_max
    gx, gy = oracle(state.x, state.y, 0)
    x_half = mx.exp(state.x, (-eta) * gx)
    y_half = my.exp(state.y, eta * gy)
    gx_h, gy_h = oracle(x_half, y_half, 1)
    x_next = mx.exp(x_half, (-eta) * gx_h + mx.log(x_half, state.x))
    y_next = my.exp(y_half, eta * gy_h + my.log(y_half, state.y))
    return replace(state, x=x_next, y=y_next, x_half=x_half, y_half=y_half, t=state.t + 1)


def rceg_step(problem: SaddleProblem, state: SolverState, eta: float) -> SolverState:
    """One corrected-extragradient step with the exact oracle (2 grad calls)."""
    _eta_positive(eta)
    return _eg_step(problem, state, eta, lambda x, y, _s: problem.grad(x, y))


def srceg_step(
    problem: SaddleProblem, state: SolverState, eta: float, noise: Optional[NoiseModel] = None
) -> SolverState:
    """Corrected-extragradient step with a noisy oracle.

    With a :class:`NoiseModel` the oracle is grad + independent tangent
    noise at the two query points; without one the problem's own
    ``stochastic_grad`` (e.g. a minibatch closure) is used.
    """
    _eta_positive(eta)
    return _eg_step(problem, state, eta, lambda x, y, s: _noisy_grad(problem, state, x, y, noise, s))


def _gda_step(problem: SaddleProblem, state: SolverState, eta: float, oracle) -> SolverState:
    gx, gy = oracle(state.x, state.y, 0)
    x_next = problem.m_min.exp(state.x, (-eta) * gx)
    y_next = problem.m_max.exp(state.y, eta * gy)
    return replace(state, x=x_next, y=y_next, t=state.t + 1)


def rgda_step(problem: SaddleProblem, state: SolverState, eta: float) -> SolverState:
    """One gradient descent-ascent step (1 grad call); half-iterates untouched."""
    _eta_positive(eta)
    return _gda_step(problem, state, eta, lambda x, y, _s: problem.grad(x, y))


def srgda_step(
    problem: SaddleProblem, state: SolverState, eta: float, noise: Optional[NoiseModel] = None
) -> SolverState:
    """Gradient descent-ascent step with a noisy oracle."""
    _eta_positive(eta)
    return _gda_step(problem, state, eta, lambda x, y, s: _noisy_grad(problem, state, x, y, noise, s))


def running_mean_update(m: Manifold, x_bar: Point, x_new: Point, t: int) -> Point:
    """One averaging step: exp_{x_bar}(log_{x_bar}(x_new) / (t+1)).

    ``t`` counts how many inputs the mean already absorbed; on flat space
    the recursion reproduces the arithmetic mean of all inputs.
    """
    if t < 1:
        raise ValueError("the running mean consumes its first input directly; t must be >= 1")
    return m.exp(x_bar, m.log(x_bar, x_new) * (1.0 / (t + 1)))


# -- step-size schedules -------------------------------------------------------


def _positive(**kwargs: float) -> None:
    for name, v in kwargs.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


def schedule_rceg_scsc(ell: float, mu: float, tau0: float, xi_lower0: float) -> float:
    """Constant step for the strongly-convex-concave extragradient regime."""
    _positive(ell=ell, mu=mu, tau0=tau0, xi_lower0=xi_lower0)
    if tau0 < 1 or not (0 < xi_lower0 <= 1):
        raise ValueError("need tau0 >= 1 and xi_lower0 in (0, 1]")
    return min(1.0 / (2.0 * ell * math.sqrt(tau0)), xi_lower0 / (2.0 * mu))


def schedule_srceg_scsc(
    ell: float, mu: float, tau0: float, xi_lower0: float, T: int, D0: float, sigma: float
) -> float:
    """Constant step for stochastic extragradient, strongly-convex-concave.

    The third branch 2*log(T * mu^2 D0 / sigma^2) / (mu T) is dropped
    (treated as +inf) when its log argument is <= 1, where the closed form
    would go nonpositive; sigma = 0 drops it as well.
    """
    _positive(ell=ell, mu=mu, tau0=tau0, xi_lower0=xi_lower0, D0=D0)
    if T < 1:
        raise ValueError("T must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    base = min(1.0 / (24.0 * ell * math.sqrt(tau0)), xi_lower0 / (2.0 * mu))
    if sigma == 0.0:
        return base
    log_arg = T * mu * mu * D0 / (sigma * sigma)
    if log_arg <= 1.0:
        return base
    return min(base, 2.0 * math.log(log_arg) / (mu * T))


def schedule_srceg_cc(ell: float, tau0: float, xi_upper0: float, T: int, D0: float, sigma: float) -> float:
    """Constant step for stochastic extragradient, convex-concave averaging regime."""
    _positive(ell=ell, tau0=tau0, xi_upper0=xi_upper0, D0=D0)
    if T < 1:
        raise ValueError("T must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    base = 1.0 / (4.0 * ell * math.sqrt(tau0))
    if sigma == 0.0:
        return base
    return min(base, math.sqrt(D0 / (xi_upper0 * T)) / sigma)


def schedule_rgda_scsc(mu: float, t: int) -> float:
    """Decaying step (1/mu) * min{1, 2/t} for descent-ascent; 1/mu while t <= 2."""
    _positive(mu=mu)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 1.0 / mu
    return min(1.0, 2.0 / t) / mu


def schedule_rgda_cc(big_l: float, T: int, D0: float, xi_upper0: float) -> float:
    """Constant step for descent-ascent averaging: sqrt(D0 / (2 xi T)) / L."""
    _positive(big_l=big_l, D0=D0, xi_upper0=xi_upper0)
    if T < 1:
        raise ValueError("T must be >= 1")
    return math.sqrt(D0 / (2.0 * xi_upper0 * T)) / big_l


def schedule_srgda_cc(big_l: float, sigma: float, T: int, D0: float, xi_upper0: float) -> float:
    """Constant step for stochastic descent-ascent averaging."""
    _positive(big_l=big_l, D0=D0, xi_upper0=xi_upper0)
    if T < 1:
        raise ValueError("T must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return 0.5 * math.sqrt(D0 / (xi_upper0 * (big_l * big_l + sigma * sigma) * T))


def schedule_practical(ell: float, a: float, t: int) -> float:
    """Benchmark decay min{1/(2l), a/t}; the a/t branch is +inf at t = 0."""
    _positive(ell=ell, a=a)
    if t < 0:
        raise ValueError("t must be nonnegative")
    cap = 1.0 / (2.0 * ell)
    if t == 0:
        return cap
    return min(cap, a / t)


@dataclass(frozen=True)
class ConstantSchedule:
    eta: float

    def __post_init__(self):
        _positive(eta=self.eta)

    def __call__(self, t: int) -> float:
        return self.eta


@dataclass(frozen=True)
class PracticalSchedule:
    ell: float
    a: float

    def __call__(self, t: int) -> float:
        return schedule_practical(self.ell, self.a, t)


@dataclass(frozen=True)
class RgdaScscSchedule:
    mu: float

    def __call__(self, t: int) -> float:
        return schedule_rgda_scsc(self.mu, t)


@dataclass(frozen=True)
class ExplicitSchedule:
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for v in self.values:
            _positive(eta=v)

    def __call__(self, t: int) -> float:
        return self.values[min(t, len(self.values) - 1)]


# -- run driver ----------------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    """Metrics recorded after ``iter`` solver steps (row 0 is the start state)."""

    iter: int
    data_passes: float
    eta: float
    grad_norm: float
    grad_norm_x: float
    grad_norm_y: float
    grad_norm_avg: Optional[float] = None
    dist_gap: Optional[float] = None
    elapsed_ms: float = 0.0


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)
    # Running max of the paired distance from the initial iterates; an
    # empirical stand-in for the domain diameter reported in run headers.
    max_dist_from_init: float = 0.0

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def validate(self) -> None:
        iters = self.column("iter")
        if iters != sorted(set(iters)):
            raise ValueError("iteration numbers must be strictly increasing")
        passes = self.column("data_passes")
        if any(b < a for a, b in zip(passes, passes[1:])):
            raise ValueError("data passes must be nondecreasing")
        for r in self.rows:
            for name in ("data_passes", "eta", "grad_norm", "grad_norm_x", "grad_norm_y", "elapsed_ms"):
                v = getattr(r, name)
                if not math.isfinite(v):
                    raise ValueError(f"non-finite {name} at iteration {r.iter}")


class DivergenceError(RuntimeError):
    """Raised when a run blows past the divergence cap; carries the partial trace."""

    def __init__(self, message: str, trace: Trace, state: SolverState):
        super().__init__(message)
        self.trace = trace
        self.state = state


def oracle_calls_per_step(solver_kind: str) -> int:
    if solver_kind in ("rceg", "srceg"):
        return 2
    if solver_kind in ("rgda", "srgda"):
        return 1
    raise ValueError(f"unknown solver {solver_kind!r}")


def _grad_norms(problem: SaddleProblem, x: Point, y: Point) -> tuple[float, float, float]:
    gx, gy = problem.grad(x, y)
    nx = problem.m_min.norm(gx)
    ny = problem.m_max.norm(gy)
    return math.hypot(nx, ny), nx, ny


def run(
    problem: SaddleProblem,
    solver_kind: str,
    schedule: Callable[[int], float],
    iters: int,
    seed: int,
    *,
    x0: Optional[Point] = None,
    y0: Optional[Point] = None,
    noise: Optional[NoiseModel] = None,
    reference: Optional[tuple[Point, Point]] = None,
    passes_per_call: float = 1.0,
    track_average: bool = True,
    timing: bool = False,
    divergence_cap: float = 1e6,
    callbacks: Sequence[Callable[[SaddleProblem, SolverState], None]] = (),
) -> tuple[Trace, SolverState]:
    """Drive ``iters`` steps of the chosen solver and record metrics.

    Everything is deterministic given ``seed``: initial points (when not
    pinned), the stochastic-oracle stream, and the noise sub-streams all
    derive from it. Row 0 of the trace holds the metrics of the initial
    state. On divergence past ``divergence_cap`` a :class:`DivergenceError`
    carrying the partial trace is raised.
    """
    if solver_kind not in SOLVER_KINDS:
        raise ValueError(f"unknown solver {solver_kind!r}; expected one of {SOLVER_KINDS}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if solver_kind in ("srceg", "srgda") and noise is None and problem.stochastic_grad is None:
        raise ValueError(f"{solver_kind} needs a NoiseModel or a stochastic_grad oracle")

    init_ss, stream_ss = np.random.SeedSequence(seed).spawn(2)
    init_rng = np.random.default_rng(init_ss)
    if x0 is None:
        x0 = problem.m_min.random_point(init_rng)
    if y0 is None:
        y0 = problem.m_max.random_point(init_rng)
    state = initial_state(problem, x0, y0, np.random.default_rng(stream_ss))

    averages_half = solver_kind in ("rceg", "srceg")
    calls = oracle_calls_per_step(solver_kind)
    trace = Trace()
    started = time.perf_counter()

    def record(st: SolverState, eta: float) -> None:
        gn, gnx, gny = _grad_norms(problem, st.x, st.y)
        gn_avg = None
        if track_average and st.x_bar is not None:
            gn_avg, _, _ = _grad_norms(problem, st.x_bar, st.y_bar)
        gap = None
        if reference is not None:
            gap = (
                problem.m_min.distance(st.x, reference[0]) ** 2
                + problem.m_max.distance(st.y, reference[1]) ** 2
            )
        if st.t > 0:
            spread = math.hypot(problem.m_min.distance(st.x, x0), problem.m_max.distance(st.y, y0))
            trace.max_dist_from_init = max(trace.max_dist_from_init, spread)
        elapsed = (time.perf_counter() - started) * 1e3 if timing else 0.0
        row = TraceRow(
            iter=st.t,
            data_passes=st.t * calls * passes_per_call,
            eta=eta,
            grad_norm=gn,
            grad_norm_x=gnx,
            grad_norm_y=gny,
            grad_norm_avg=gn_avg,
            dist_gap=gap,
            elapsed_ms=elapsed,
        )
        trace.rows.append(row)
        for cb in callbacks:
            cb(problem, st)
        if not math.isfinite(gn) or gn > divergence_cap:
            raise DivergenceError(
                f"gradient norm {gn!r} beyond the divergence cap at iteration {st.t}", trace, st
            )

    record(state, 0.0)
    for t in range(iters):
        eta = schedule(t)
        try:
            if averages_half:
                if solver_kind == "rceg":
                    state = rceg_step(problem, state, eta)
                else:
                    state = srceg_step(problem, state, eta, noise)
                avg_in_x, avg_in_y = state.x_half, state.y_half
            else:
                avg_in_x, avg_in_y = state.x, state.y
                if solver_kind == "rgda":
                    state = rgda_step(problem, state, eta)
                else:
                    state = srgda_step(problem, state, eta, noise)
            if track_average:
                if state.x_bar is None:
                    state = replace(state, x_bar=avg_in_x, y_bar=avg_in_y)
                else:
                    state = replace(
                        state,
                        x_bar=running_mean_update(problem.m_min, state.x_bar, avg_in_x, t),
                        y_bar=running_mean_update(problem.m_max, state.y_bar, avg_in_y, t),
                    )
            record(state, eta)
        except GeometryError as e:
            # NaN/Inf payloads and SPD eigenvalue collapse count as numeric
            # failure; the partial trace is part of the result.
            raise DivergenceError(f"geometry kernel failed at iteration {t}: {e}", trace, state) from e

    trace.validate()
    return trace, state
