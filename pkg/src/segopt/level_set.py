"""Gradient descent on segmentation energies by evolving an embedding function.

The segment is ``S = {phi <= 0}``. Each explicit Euler step applies

    phi <- phi + dt * ( mu * (lap(phi) - kappa) + (g + lam * kappa) * dirac(phi) )

where ``g`` is the first-order derivative of the regional (and unary) terms at
the current segment, ``kappa = div(grad phi / |grad phi|)`` and the ``mu`` term
pulls ``phi`` towards a signed distance function instead of re-initializing it.
The regional term enters with a plus sign because ``phi`` is negative inside:
lowering ``phi`` where ``g < 0`` grows the segment exactly where growing pays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .functionals import CONTINUOUS, Energy, EvalCounter, composite_energy
from .grid import as_mask, is_degenerate, save_field, signed_distance
from .length import GRAD_FLOOR, central_gradient, dirac, length_continuous  # noqa: F401
from .trace import CpuClock, RunResult, Trace, ensure_dir

log = logging.getLogger(__name__)


class LevelSetDivergence(RuntimeError):
    """Non-finite update; the explicit scheme went unstable."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass
class LevelSetConfig:
    dt: float = 1.0
    eps: float = 1.5
    mu: float = 0.05
    lam: float = 0.0
    max_iters: int = 10000
    window: int = 50
    tol: float = 1e-6
    min_dt: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.mu < 0 or self.lam < 0:
            raise ValueError("mu and lam must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class LevelSetField:
    phi: np.ndarray
    iteration: int = 0

    @property
    def mask(self) -> np.ndarray:
        return extract(self.phi)


def extract(phi) -> np.ndarray:
    return np.asarray(phi) <= 0


def init_phi(s) -> LevelSetField:
    s = as_mask(s)
    if is_degenerate(s):
        raise ValueError("cannot embed an empty or full mask")
    return LevelSetField(signed_distance(s), 0)


def laplacian(phi: np.ndarray) -> np.ndarray:
    p = np.pad(phi, 1, mode="edge")
    return p[1:-1, 2:] + p[1:-1, :-2] + p[2:, 1:-1] + p[:-2, 1:-1] - 4.0 * phi


def curvature_field(phi: np.ndarray) -> np.ndarray:
    gx, gy = central_gradient(phi)
    norm = np.maximum(np.hypot(gx, gy), GRAD_FLOOR)
    nxx, _ = central_gradient(gx / norm)
    _, nyy = central_gradient(gy / norm)
    return nxx + nyy


def curvature(phi: np.ndarray, x: tuple[int, int]) -> float:
    """Curvature of the level line through pixel ``x = (row, col)``."""
    return float(curvature_field(np.asarray(phi, dtype=np.float64))[x])


def velocity(phi: np.ndarray, g: np.ndarray, cfg: LevelSetConfig) -> np.ndarray:
    kappa = curvature_field(phi)
    return cfg.mu * (laplacian(phi) - kappa) + (g + cfg.lam * kappa) * dirac(phi, cfg.eps)


def step(field: LevelSetField, g: np.ndarray, cfg: LevelSetConfig, dt: float | None = None) -> LevelSetField:
    phi = field.phi
    if g.shape != phi.shape:
        raise ValueError("gradient field and phi differ in shape")
    dt = dt or cfg.dt
    with np.errstate(over="ignore", invalid="ignore"):
        a = velocity(phi, g, cfg)
        new = phi + dt * a
    if not np.all(np.isfinite(new)):
        bad = int(np.count_nonzero(~np.isfinite(new)))
        raise LevelSetDivergence(
            f"non-finite update at iteration {field.iteration}: {bad} pixels, "
            f"max|phi|={np.nanmax(np.abs(phi)):.3g}, dt={dt}")
    return LevelSetField(new, field.iteration + 1)


def descent_field(energy: Energy, img, s) -> np.ndarray:
    """``dE/dS`` without the length term: weighted regional derivatives plus unaries."""
    g = energy.unary_field(s.shape)
    for w, model in energy.regional:
        if w:
            g += w * model.gradient_field(img, s)
    return g


def _row(trace, it, clock, counter, rep, mask, **extra):
    trace.append(iter=it, cpu_ms=clock.ms(), evals=counter.count, E=rep.total, R=rep.regional + rep.unary,
                 L_cont=rep.length_continuous, L_crofton=rep.length_crofton,
                 area=int(np.count_nonzero(mask)), **extra)


class _MovingAverage:
    """Compares the mean energy of the last window with the window before it.

    Disjoint windows keep a periodic oscillation from looking converged.
    """

    def __init__(self, window):
        self.window = window
        self.values = []

    def converged(self, e, tol) -> bool:
        self.values.append(e)
        w = self.window
        if len(self.values) < 2 * w:
            return False
        cur = float(np.mean(self.values[-w:]))
        prev = float(np.mean(self.values[-2 * w:-w]))
        return abs(cur - prev) <= tol * max(abs(prev), 1e-12)


def run(img, initial, energy: Energy, cfg: LevelSetConfig, counter: EvalCounter | None = None,
        record: bool = False, snapshot_every: int = 0, snapshot_dir=None) -> RunResult:
    """Fixed-step evolution; returns the lowest-energy segment seen along the way."""
    counter = counter or EvalCounter()
    cfg = replace(cfg, lam=energy.length_weight)
    initial = as_mask(initial)
    trace = Trace(extra_columns=("dt",))
    clock = CpuClock()
    if cfg.max_iters == 0:
        return RunResult(initial.copy(), trace, "capped", float("nan"), 0, counter.count, 0.0)

    field = init_phi(initial)
    mask = initial
    rep = composite_energy(energy, img, mask, phi=field.phi, convention=CONTINUOUS, counter=counter)
    _row(trace, 0, clock, counter, rep, mask, dt=cfg.dt)
    best_e, best_mask = rep.total, mask.copy()
    history = [(mask.copy(), field.phi.copy())] if record else []
    avg = _MovingAverage(cfg.window)
    avg.converged(rep.total, cfg.tol)
    status = "capped"
    for it in range(1, cfg.max_iters + 1):
        g = descent_field(energy, img, mask)
        try:
            field = step(field, g, cfg)
        except LevelSetDivergence as exc:
            exc.result = RunResult(best_mask, trace, "diverged", best_e, it - 1, counter.count, clock.ms(),
                                   history)
            raise
        mask = extract(field.phi)
        rep = composite_energy(energy, img, mask, phi=field.phi, convention=CONTINUOUS, counter=counter)
        _row(trace, it, clock, counter, rep, mask, dt=cfg.dt)
        if record:
            history.append((mask.copy(), field.phi.copy()))
        if snapshot_every and it % snapshot_every == 0 and snapshot_dir is not None:
            clock.pause()
            save_field(ensure_dir(snapshot_dir) / f"phi_{it:06d}.sfld", field.phi)
            clock.resume()
        if rep.total < best_e:
            best_e, best_mask = rep.total, mask.copy()
        if avg.converged(rep.total, cfg.tol):
            status = "converged"
            break
    return RunResult(best_mask, trace, status, best_e, int(trace.rows[-1]["iter"]), counter.count,
                     clock.ms(), history)


def run_adaptive(img, initial, energy: Energy, cfg: LevelSetConfig, counter: EvalCounter | None = None,
                 shrink: float = 0.5, record: bool = False) -> RunResult:
    """Backtracking variant: halve the step until the discrete energy drops.

    The step resets to ``cfg.dt`` after every accepted move; the run stalls once
    the step falls below ``cfg.min_dt``.
    """
    counter = counter or EvalCounter()
    cfg = replace(cfg, lam=energy.length_weight)
    initial = as_mask(initial)
    trace = Trace(extra_columns=("dt",))
    clock = CpuClock()
    if cfg.max_iters == 0:
        return RunResult(initial.copy(), trace, "capped", float("nan"), 0, counter.count, 0.0)

    field = init_phi(initial)
    mask = initial
    rep = composite_energy(energy, img, mask, phi=field.phi, convention=CONTINUOUS, counter=counter)
    _row(trace, 0, clock, counter, rep, mask, dt=cfg.dt)
    history = [(mask.copy(), field.phi.copy())] if record else []
    e_cur = rep.total
    status = "capped"
    it = 0
    while it < cfg.max_iters:
        g = descent_field(energy, img, mask)
        dt = cfg.dt
        while True:
            try:
                trial = step(field, g, cfg, dt=dt)
            except LevelSetDivergence:
                trial = None
            if trial is not None:
                t_mask = extract(trial.phi)
                t_rep = composite_energy(energy, img, t_mask, phi=trial.phi, convention=CONTINUOUS,
                                         counter=counter)
                if t_rep.total < e_cur:
                    break
            dt *= shrink
            if dt < cfg.min_dt:
                status = "stalled"
                break
        if status == "stalled":
            break
        it += 1
        field, mask, rep, e_cur = trial, t_mask, t_rep, t_rep.total
        _row(trace, it, clock, counter, rep, mask, dt=dt)
        if record:
            history.append((mask.copy(), field.phi.copy()))
    return RunResult(mask.copy(), trace, status, e_cur, it, counter.count, clock.ms(), history)
