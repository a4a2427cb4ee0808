"""Experiment harness: configs, trace files, grid search, references, plots.

Everything a benchmark run needs around the solvers: a flat config (JSON
file mirrored by CLI flags), deterministic CSV traces with a metadata
header, gradient-norm and distance-gap metrics, step-size grid search,
reference-saddle computation and persistence, and long-format plot data
with an optional SVG rendering.

File formats:

- trace CSV: '#'-prefixed metadata lines (one JSON object), then a header
  row and one row per iteration; row 0 carries the metrics of the initial
  state. UTF-8, '.' decimal separator, '\n' line endings. By default the
  elapsed_ms column is written as 0.0 so that fixed-seed reruns are
  byte-identical; pass ``timing=True`` (CLI ``--timing``) to record wall
  time at the cost of reproducible bytes.
- reference JSON: serialized saddle points plus the gradient norm they
  were solved to.
- plot CSV: long format with columns series, data_passes, grad_norm.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .curvature import constants_at
from .manifolds import GeometryError, Manifold, Point, point_from_json, point_to_json
from .problems import (
    BilinearInstance,
    KarcherInstance,
    RpcaInstance,
    estimate_smoothness,
    estimate_strong_monotonicity,
    instance_from_json,
    instance_to_json,
    make_bilinear,
    make_karcher,
    make_rpca,
)
from .solvers import (
    ConstantSchedule,
    DivergenceError,
    PracticalSchedule,
    RgdaScscSchedule,
    NoiseModel,
    SaddleProblem,
    Trace,
    TraceRow,
    rceg_step,
    initial_state,
    run,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "build_problem",
    "build_schedule",
    "metric_gradient_norm",
    "metric_distance_gap",
    "write_trace_csv",
    "read_trace_csv",
    "execute_run",
    "grid_search",
    "solve_reference",
    "write_reference",
    "load_reference",
    "emit_plot_data",
    "PlotSeries",
]

logger = logging.getLogger("geosaddle")

_SMOOTHNESS_SAMPLES = 64
_MONOTONICITY_SAMPLES = 128


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment: problem, solver, schedule, budget, and output paths."""

    problem: str
    seed: int
    solver: str = "rceg"
    iters: int = 100
    d: int = 2
    n: int = 10
    alpha: float = 1.0
    gamma: float = 2.0
    n_anchors: int = 3
    eta: object = "auto"  # positive float or the string "auto"
    a: float = 1.0
    sigma: Optional[float] = None
    batch_size: Optional[int] = None
    data_seed: Optional[int] = None
    diameter: Optional[float] = None
    out: Optional[str] = None
    reference: Optional[str] = None
    init_from: Optional[str] = None
    instance: Optional[str] = None
    save_instance: Optional[str] = None
    timing: bool = False
    track_average: bool = True

    def validate(self) -> None:
        if self.problem not in ("rpca", "karcher", "bilinear"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.solver not in ("rceg", "srceg", "rgda", "srgda"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.problem == "rpca":
            if self.n < 1:
                raise ConfigError("n must be >= 1")
            if self.alpha <= 0:
                raise ConfigError("alpha must be positive")
        if self.problem == "karcher":
            if self.gamma <= 0:
                raise ConfigError("gamma must be positive")
            if self.n_anchors < 1:
                raise ConfigError("n_anchors must be >= 1")
        if self.solver in ("srceg", "srgda"):
            if self.sigma is None and self.batch_size is None:
                raise ConfigError(f"{self.solver} requires --sigma or --batch-size")
            if self.batch_size is not None and self.problem != "rpca":
                raise ConfigError("--batch-size is only available for the rpca problem")
        if self.batch_size is not None and self.problem == "rpca" and not (1 <= self.batch_size <= self.n):
            raise ConfigError(f"batch_size must be in [1, {self.n}]")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if isinstance(self.eta, str):
            if self.eta != "auto":
                raise ConfigError(f"eta must be a positive number or 'auto', got {self.eta!r}")
        elif not (float(self.eta) > 0):
            raise ConfigError("eta must be positive")
        if self.a <= 0:
            raise ConfigError("a must be positive")
        if self.diameter is not None and self.diameter <= 0:
            raise ConfigError("diameter must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from e
        cfg.validate()
        return cfg


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path!r}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def build_instance(cfg: RunConfig):
    if cfg.instance is not None:
        with open(cfg.instance, "r", encoding="utf-8") as fh:
            inst = instance_from_json(json.load(fh))
        expected = {"rpca": RpcaInstance, "karcher": KarcherInstance, "bilinear": BilinearInstance}
        if not isinstance(inst, expected[cfg.problem]):
            raise ConfigError(f"instance file holds a {type(inst).__name__}, config wants {cfg.problem}")
        return inst
    data_seed = cfg.seed if cfg.data_seed is None else cfg.data_seed
    if cfg.problem == "rpca":
        return RpcaInstance.generate(d=cfg.d, n=cfg.n, alpha=cfg.alpha, seed=data_seed)
    if cfg.problem == "karcher":
        return KarcherInstance.generate(d=cfg.d, n_anchors=cfg.n_anchors, gamma=cfg.gamma, seed=data_seed)
    return BilinearInstance(k=cfg.d)


def build_problem(cfg: RunConfig, inst=None) -> SaddleProblem:
    inst = build_instance(cfg) if inst is None else inst
    if cfg.problem == "rpca":
        return make_rpca(inst, batch_size=cfg.batch_size)
    if cfg.problem == "karcher":
        return make_karcher(inst)
    return make_bilinear(inst)


def build_schedule(cfg: RunConfig, problem: SaddleProblem) -> tuple[Callable[[int], float], dict]:
    """Resolve the schedule spec into a callable plus metadata for the header.

    ``--eta auto`` picks the benchmark defaults: the 1/(2l) cap for the
    extragradient solvers (with the a/t decay for the stochastic one, both
    with an empirically estimated smoothness) and the (1/mu) min{1, 2/t}
    decay for descent-ascent with an empirically estimated modulus.
    """
    if not isinstance(cfg.eta, str):
        eta = float(cfg.eta)
        return ConstantSchedule(eta), {"kind": "constant", "eta": eta}
    est_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE57]))
    if cfg.solver in ("rceg", "srceg"):
        ell_hat = estimate_smoothness(problem, _SMOOTHNESS_SAMPLES, est_rng)
        if not ell_hat > 0:
            raise ConfigError("smoothness estimate collapsed to zero; pass an explicit eta")
        if cfg.solver == "rceg":
            return ConstantSchedule(1.0 / (2.0 * ell_hat)), {
                "kind": "constant",
                "eta": 1.0 / (2.0 * ell_hat),
                "ell_hat": ell_hat,
            }
        return PracticalSchedule(ell_hat, cfg.a), {"kind": "practical", "ell_hat": ell_hat, "a": cfg.a}
    mu_hat = estimate_strong_monotonicity(problem, _MONOTONICITY_SAMPLES, est_rng)
    if mu_hat <= 0:
        raise ConfigError(
            f"strong-monotonicity estimate {mu_hat:.3e} is not positive; "
            "the decaying descent-ascent schedule needs mu > 0 (pass an explicit eta)"
        )
    return RgdaScscSchedule(mu_hat), {"kind": "rgda-scsc", "mu_hat": mu_hat}


# -- metrics -------------------------------------------------------------------


def metric_gradient_norm(problem: SaddleProblem, x: Point, y: Point) -> dict:
    """Riemannian gradient norms: combined, and per block."""
    gx, gy = problem.grad(x, y)
    nx = problem.m_min.norm(gx)
    ny = problem.m_max.norm(gy)
    return {"combined": math.hypot(nx, ny), "x_part": nx, "y_part": ny}


def metric_distance_gap(
    problem: SaddleProblem, iterates: tuple[Point, Point], reference: tuple[Point, Point]
) -> float:
    """Squared-distance sum to the reference saddle."""
    return (
        problem.m_min.distance(iterates[0], reference[0]) ** 2
        + problem.m_max.distance(iterates[1], reference[1]) ** 2
    )


# -- trace files ---------------------------------------------------------------

_COLUMNS = (
    "iter",
    "data_passes",
    "eta",
    "grad_norm",
    "grad_norm_x",
    "grad_norm_y",
    "grad_norm_avg",
    "dist_gap",
    "elapsed_ms",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_trace_csv(trace: Trace, path: str, meta: Optional[dict] = None) -> None:
    """Write a trace with a '#'-prefixed JSON metadata header."""
    buf = io.StringIO()
    if meta:
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    buf.write(",".join(_COLUMNS) + "\n")
    for r in trace.rows:
        buf.write(",".join(_fmt(getattr(r, c)) for c in _COLUMNS) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def read_trace_csv(path: str) -> tuple[dict, Trace]:
    """Parse a trace file back into metadata and rows (exact round trip)."""
    meta: dict = {}
    rows: list[TraceRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header: Optional[list[str]] = None
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                payload = line.lstrip("# ")
                if payload:
                    meta = json.loads(payload)
                continue
            if header is None:
                header = line.split(",")
                if tuple(header) != _COLUMNS:
                    raise ValueError(f"unexpected trace columns {header!r}")
                continue
            vals = line.split(",")
            rec = dict(zip(header, vals))
            rows.append(
                TraceRow(
                    iter=int(rec["iter"]),
                    data_passes=float(rec["data_passes"]),
                    eta=float(rec["eta"]),
                    grad_norm=float(rec["grad_norm"]),
                    grad_norm_x=float(rec["grad_norm_x"]),
                    grad_norm_y=float(rec["grad_norm_y"]),
                    grad_norm_avg=float(rec["grad_norm_avg"]) if rec["grad_norm_avg"] else None,
                    dist_gap=float(rec["dist_gap"]) if rec["dist_gap"] else None,
                    elapsed_ms=float(rec["elapsed_ms"]),
                )
            )
    return meta, Trace(rows=rows)


# -- reference saddles -----------------------------------------------------------


def solve_reference(
    problem: SaddleProblem,
    tol: float = 1e-10,
    max_iters: int = 200_000,
    seed: int = 0,
    eta: Optional[float] = None,
    x0: Optional[Point] = None,
    y0: Optional[Point] = None,
    check_every: int = 25,
) -> tuple[Point, Point, float, int]:
    """Drive the corrected extragradient to a high-accuracy saddle.

    Returns (x*, y*, final combined gradient norm, iterations used). Raises
    ``DivergenceError`` when the gradient norm blows past 1e6 and
    ``RuntimeError`` when the budget ends above tolerance.
    """
    if eta is None:
        est_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE57]))
        ell_hat = estimate_smoothness(problem, _SMOOTHNESS_SAMPLES, est_rng)
        eta = 1.0 / (2.0 * ell_hat)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1717]))
    if x0 is None:
        x0 = problem.m_min.random_point(rng)
    if y0 is None:
        y0 = problem.m_max.random_point(rng)
    state = initial_state(problem, x0, y0, rng)
    gn = metric_gradient_norm(problem, state.x, state.y)["combined"]
    best = gn
    for t in range(max_iters):
        try:
            state = rceg_step(problem, state, eta)
        except GeometryError as e:
            raise DivergenceError(
                f"reference solve hit a geometry failure at iteration {t}: {e}", Trace(), state
            ) from e
        if (t + 1) % check_every == 0 or t == max_iters - 1:
            gn = metric_gradient_norm(problem, state.x, state.y)["combined"]
            best = min(best, gn)
            if not math.isfinite(gn) or gn > 1e6:
                raise DivergenceError(
                    f"reference solve diverged (gradient norm {gn!r} at iteration {t + 1})",
                    Trace(),
                    state,
                )
            if gn <= tol:
                return state.x, state.y, gn, t + 1
    raise RuntimeError(
        f"reference solve stopped above tolerance: gradient norm {gn:.3e} > {tol:.1e} "
        f"after {max_iters} iterations (best seen {best:.3e})"
    )


def write_reference(path: str, x: Point, y: Point, grad_norm: float, iters: int) -> None:
    payload = {
        "x": point_to_json(x),
        "y": point_to_json(y),
        "grad_norm": grad_norm,
        "iters": iters,
        "version": __version__,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def load_reference(path: str, m_min: Manifold, m_max: Manifold) -> tuple[Point, Point, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return point_from_json(m_min, data["x"]), point_from_json(m_max, data["y"]), data


def load_init(path: str, m_min: Manifold, m_max: Manifold) -> tuple[Point, Point]:
    x, y, _ = load_reference(path, m_min, m_max)
    return x, y


# -- run execution ---------------------------------------------------------------


def _curvature_meta(m: Manifold, c: Optional[float]) -> Optional[dict]:
    at_c = m.diameter_bound if c is None else c
    if not math.isfinite(at_c):
        return None
    try:
        k = constants_at(m.kappa_min, m.kappa_max, at_c)
    except ValueError:
        return None
    return {
        "kappa_min": m.kappa_min,
        "kappa_max": m.kappa_max,
        "at_c": k.at_c,
        "xi_lower0": k.xi_lower0,
        "xi_upper0": k.xi_upper0,
        "tau0": k.tau0,
    }


def execute_run(cfg: RunConfig, inst=None) -> tuple[Trace, dict]:
    """Run one configured experiment and (when ``cfg.out`` is set) write the trace.

    On divergence the partial trace is flushed to ``cfg.out`` before the
    exception propagates, so a failed run still leaves its evidence behind.
    """
    cfg.validate()
    inst = build_instance(cfg) if inst is None else inst
    problem = build_problem(cfg, inst)
    schedule, sched_meta = build_schedule(cfg, problem)

    if cfg.save_instance:
        Path(cfg.save_instance).write_text(
            json.dumps(instance_to_json(inst), sort_keys=True) + "\n", encoding="utf-8", newline="\n"
        )

    noise = None
    if cfg.solver in ("srceg", "srgda") and cfg.sigma is not None:
        noise = NoiseModel(cfg.sigma, seed=cfg.seed)
    passes_per_call = 1.0
    if cfg.batch_size is not None and problem.stochastic_grad is not None:
        passes_per_call = problem.stochastic_grad.passes_per_call

    reference = None
    if cfg.reference:
        if Path(cfg.reference).exists():
            rx, ry, _ = load_reference(cfg.reference, problem.m_min, problem.m_max)
            reference = (rx, ry)
        else:
            logger.warning("reference file %s missing; distance-gap metric omitted", cfg.reference)

    x0 = y0 = None
    if cfg.init_from:
        x0, y0 = load_init(cfg.init_from, problem.m_min, problem.m_max)

    meta = {
        "version": __version__,
        "problem": cfg.problem,
        "solver": cfg.solver,
        "seed": cfg.seed,
        "iters": cfg.iters,
        "schedule": sched_meta,
        "sigma": cfg.sigma,
        "batch_size": cfg.batch_size,
        "curvature": {
            "min_side": _curvature_meta(problem.m_min, cfg.diameter),
            "max_side": _curvature_meta(problem.m_max, cfg.diameter),
        },
    }

    try:
        trace, state = run(
            problem,
            cfg.solver,
            schedule,
            cfg.iters,
            cfg.seed,
            x0=x0,
            y0=y0,
            noise=noise,
            reference=reference,
            passes_per_call=passes_per_call,
            track_average=cfg.track_average,
            timing=cfg.timing,
        )
    except DivergenceError as e:
        meta["status"] = "numeric-failure"
        meta["error"] = str(e)
        meta["empirical_d_max_from_init"] = e.trace.max_dist_from_init
        if cfg.out:
            write_trace_csv(e.trace, cfg.out, meta=meta)
        raise
    meta["status"] = "ok"
    meta["empirical_d_max_from_init"] = trace.max_dist_from_init
    if cfg.out:
        write_trace_csv(trace, cfg.out, meta=meta)
    return trace, meta


# -- grid search -----------------------------------------------------------------


def grid_search(
    cfg: RunConfig,
    ell_grid: Optional[Sequence[float]] = None,
    a_grid: Optional[Sequence[float]] = None,
    out: Optional[str] = None,
) -> tuple[dict, list[dict]]:
    """Rank schedule candidates by the final gradient norm of a short run.

    Exactly one of ``ell_grid`` (constant steps 1/(2 ell)) or ``a_grid``
    (practical decay around an estimated smoothness cap) must be given.
    Diverged candidates rank last; ties break toward the smaller step.
    Returns (best row, all rows ranked); optionally writes a ranking CSV.
    """
    if (ell_grid is None) == (a_grid is None):
        raise ConfigError("provide exactly one of ell_grid or a_grid")
    grid = list(ell_grid if ell_grid is not None else a_grid)
    if not grid:
        raise ConfigError("the candidate grid is empty")
    if any(not (g > 0 and math.isfinite(g)) for g in grid):
        raise ConfigError("grid values must be positive and finite")

    inst = build_instance(cfg)
    problem = build_problem(cfg, inst)
    ell_hat = None
    if a_grid is not None:
        est_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE57]))
        ell_hat = estimate_smoothness(problem, _SMOOTHNESS_SAMPLES, est_rng)

    rows = []
    for g in grid:
        if ell_grid is not None:
            candidate = replace(cfg, eta=1.0 / (2.0 * g))
            eta0 = float(candidate.eta)
            param_name, param = "ell", g
        else:
            candidate = replace(cfg, eta="auto", a=g)
            eta0 = min(1.0 / (2.0 * ell_hat), g)  # step actually taken at t = 1
            param_name, param = "a", g
        try:
            trace, _ = execute_run(replace(candidate, out=None, save_instance=None), inst=inst)
            final = trace.rows[-1].grad_norm
            status = "ok"
        except DivergenceError:
            final = math.inf
            status = "diverged"
        rows.append(
            {
                "param_name": param_name,
                "param": param,
                "eta0": eta0,
                "final_grad_norm": final,
                "status": status,
            }
        )

    rows.sort(key=lambda r: (r["final_grad_norm"], r["eta0"]))
    if all(not math.isfinite(r["final_grad_norm"]) for r in rows):
        if out:
            _write_ranking(out, rows)
        raise DivergenceError("every grid candidate diverged", Trace(), None)  # type: ignore[arg-type]
    if out:
        _write_ranking(out, rows)
    return rows[0], rows


def _write_ranking(path: str, rows: list[dict]) -> None:
    buf = io.StringIO()
    buf.write("rank,param_name,param,eta0,final_grad_norm,status\n")
    for i, r in enumerate(rows, start=1):
        fgn = "inf" if not math.isfinite(r["final_grad_norm"]) else repr(r["final_grad_norm"])
        buf.write(f"{i},{r['param_name']},{_fmt(r['param'])},{_fmt(r['eta0'])},{fgn},{r['status']}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


# -- plot data -------------------------------------------------------------------


@dataclass(frozen=True)
class PlotSeries:
    label: str
    data_passes: tuple[float, ...]
    values: tuple[float, ...]


def series_from_trace(trace: Trace, column: str, label: str) -> PlotSeries:
    xs, ys = [], []
    for r in trace.rows:
        v = getattr(r, column)
        if v is None:
            continue
        xs.append(r.data_passes)
        ys.append(v)
    return PlotSeries(label=label, data_passes=tuple(xs), values=tuple(ys))


def emit_plot_data(series: Sequence[PlotSeries], out_csv: str, svg_path: Optional[str] = None) -> None:
    """Write long-format plot data and, optionally, a log-scale SVG line plot."""
    if not series:
        raise ConfigError("no plot series given")
    buf = io.StringIO()
    buf.write("series,data_passes,grad_norm\n")
    for s in series:
        for x, y in zip(s.data_passes, s.values):
            buf.write(f"{s.label},{_fmt(x)},{_fmt(y)}\n")
    Path(out_csv).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    if svg_path:
        Path(svg_path).write_text(_render_svg(series), encoding="utf-8", newline="\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _render_svg(series: Sequence[PlotSeries]) -> str:
    """Deterministic hand-rolled SVG: linear x (data passes), log10 y."""
    width, height = 720.0, 480.0
    ml, mr, mt, mb = 70.0, 20.0, 20.0, 50.0
    pw, ph = width - ml - mr, height - mt - mb

    pts = [(x, y) for s in series for x, y in zip(s.data_passes, s.values) if y > 0]
    if not pts:
        raise ConfigError("plot series contain no positive values for the log scale")
    x_min = min(p[0] for p in pts)
    x_max = max(p[0] for p in pts)
    y_lo = math.floor(math.log10(min(p[1] for p in pts)))
    y_hi = math.ceil(math.log10(max(p[1] for p in pts)))
    if x_max <= x_min:
        x_max = x_min + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1

    def sx(x: float) -> float:
        return ml + pw * (x - x_min) / (x_max - x_min)

    def sy(y: float) -> float:
        return mt + ph * (y_hi - math.log10(y)) / (y_hi - y_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<rect x="{ml:.1f}" y="{mt:.1f}" width="{pw:.1f}" height="{ph:.1f}" '
        'fill="none" stroke="#333333" stroke-width="1"/>',
    ]
    for decade in range(int(y_lo), int(y_hi) + 1):
        yy = sy(10.0**decade)
        out.append(
            f'<line x1="{ml:.1f}" y1="{yy:.2f}" x2="{ml + pw:.1f}" y2="{yy:.2f}" '
            'stroke="#dddddd" stroke-width="0.5"/>'
        )
        out.append(
            f'<text x="{ml - 8:.1f}" y="{yy + 4:.2f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">1e{decade}</text>'
        )
    for i in range(5):
        xv = x_min + (x_max - x_min) * i / 4.0
        xx = sx(xv)
        out.append(
            f'<text x="{xx:.2f}" y="{mt + ph + 18:.1f}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{xv:.6g}</text>'
        )
    out.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 12:.1f}" text-anchor="middle" font-size="12" '
        'font-family="sans-serif">data passes</text>'
    )
    out.append(
        f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {mt + ph / 2:.1f})">gradient norm</text>'
    )
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(
            f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(s.data_passes, s.values) if y > 0
        )
        if coords:
            out.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        ly = mt + 16 + 16 * i
        out.append(
            f'<line x1="{ml + pw - 150:.1f}" y1="{ly:.1f}" x2="{ml + pw - 120:.1f}" y2="{ly:.1f}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{ml + pw - 114:.1f}" y="{ly + 4:.1f}" font-size="11" '
            f'font-family="sans-serif">{s.label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
