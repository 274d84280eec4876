"""Fast trust region: linearize the regional terms, then solve one graph cut per step.

At the current segment ``S_j`` every non-linear regional term is replaced by its
first-order Taylor expansion, a per-pixel unary ``u``. The move limit
``||S - S_j|| < d`` becomes a Lagrangian penalty ``(1/d) * sum |dist_{S_j}|`` over
flipped pixels, so the sub-problem (unary + Crofton length + move penalty) is
submodular and one min-cut solves it exactly. The region size ``d`` grows or
shrinks with the ratio of actual to predicted energy reduction.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .functionals import CROFTON, Energy, EvalCounter, composite_energy
from .grid import DegenerateMaskWarning, as_mask, signed_distance
from .length import CroftonStencil, crofton_length, crofton_weights, shifted_pairs
from .maxflow import FlowNetwork
from .trace import CpuClock, RunResult, Trace

log = logging.getLogger(__name__)

__all__ = ["CroftonStencil", "crofton_weights", "crofton_length", "taylor_unary", "solve_subproblem",
           "subproblem_objective", "TrustRegionConfig", "run"]


@dataclass
class TrustRegionConfig:
    alpha: float = 2.0
    tau_accept: float = 0.0
    tau_grow: float = 0.25
    d0: float = 10.0
    d_max: float = 1e9
    max_iters: int = 1000

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if not 0 <= self.tau_accept <= self.tau_grow < 1:
            raise ValueError("need 0 <= tau_accept <= tau_grow < 1")
        if not self.d0 > 0:
            raise ValueError("initial region size must be positive")


def taylor_unary(energy: Energy, img, s) -> np.ndarray:
    """Per-pixel cost whose sum over a segment is the linearized regional + unary energy."""
    s = as_mask(s)
    u = energy.unary_field(s.shape)
    for w, model in energy.regional:
        if w:
            u += w * model.gradient_field(img, s)
    return u


def _move_cost(s_j: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateMaskWarning)
        return np.abs(signed_distance(s_j))


def subproblem_objective(s, u, lam_len, stencil, s_j, lam_dist) -> float:
    """Direct evaluation of the graph-cut objective; used for checks and predictions."""
    s = as_mask(s)
    val = float(u[s].sum()) + lam_len * crofton_length(s, stencil)
    if lam_dist:
        val += lam_dist * float(_move_cost(s_j)[s != s_j].sum())
    return val


def solve_subproblem(u, lam_len: float, stencil: CroftonStencil | int, s_j, lam_dist: float) -> np.ndarray:
    """Exact minimizer of ``<u,S> + lam_len*L(S) + lam_dist*<|dist_{S_j}|, S xor S_j>``."""
    if lam_len < 0 or lam_dist < 0:
        raise ValueError("weights must be nonnegative")
    s_j = as_mask(s_j)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != s_j.shape:
        raise ValueError("unary field and segment differ in shape")
    if math.isinf(lam_dist):
        return s_j.copy()
    if isinstance(stencil, int):
        stencil = crofton_weights(stencil)
    h, w = u.shape
    cost_in = u.copy()
    cost_out = np.zeros_like(u)
    if lam_dist > 0:
        move = lam_dist * _move_cost(s_j)
        cost_in += np.where(s_j, 0.0, move)
        cost_out += np.where(s_j, move, 0.0)
    base = np.minimum(cost_in, cost_out)

    g = FlowNetwork()
    g.add_node_batch(h * w)
    nodes = np.arange(h * w)
    # source side = inside S: a source-side node pays its sink link
    g.add_terminals(nodes, (cost_out - base).ravel(), (cost_in - base).ravel())
    if lam_len > 0:
        idx = nodes.reshape(h, w)
        for off, wk in zip(stencil.offsets, stencil.weights):
            a, b = shifted_pairs((h, w), off)
            c = lam_len * wk
            g.add_edges(idx[a].ravel(), idx[b].ravel(), c, c)
    g.max_flow()
    return g.source_set().reshape(h, w)


def run(img, initial, energy: Energy, cfg: TrustRegionConfig | None = None,
        counter: EvalCounter | None = None, record: bool = False) -> RunResult:
    cfg = cfg or TrustRegionConfig()
    counter = counter or EvalCounter()
    s = as_mask(initial).copy()
    stencil = energy.stencil
    lam_len = energy.length_weight
    trace = Trace(extra_columns=("accepted", "d"))
    clock = CpuClock()
    if cfg.max_iters == 0:
        return RunResult(s, trace, "capped", float("nan"), 0, counter.count, 0.0)

    rep = composite_energy(energy, img, s, convention=CROFTON, counter=counter)
    e_cur = rep.total
    if not math.isfinite(e_cur):
        raise FloatingPointError("initial energy is not finite")
    d = cfg.d0
    history = [s.copy()] if record else []

    def row(it, accepted):
        trace.append(iter=it, cpu_ms=clock.ms(), evals=counter.count, E=rep.total,
                     R=rep.regional + rep.unary, L_cont=rep.length_continuous,
                     L_crofton=rep.length_crofton, area=int(np.count_nonzero(s)),
                     accepted=accepted, d=d)

    row(0, True)
    status = "capped"
    for it in range(1, cfg.max_iters + 1):
        u = taylor_unary(energy, img, s)
        cand = solve_subproblem(u, lam_len, stencil, s, 1.0 / d)
        approx_cur = float(u[s].sum()) + lam_len * rep.length_crofton
        approx_new = float(u[cand].sum()) + lam_len * crofton_length(cand, stencil)
        predicted = approx_cur - approx_new
        if np.array_equal(cand, s):
            actual, cand_rep = 0.0, None
        else:
            cand_rep = composite_energy(energy, img, cand, convention=CROFTON, counter=counter)
            if not math.isfinite(cand_rep.total):
                raise FloatingPointError(f"non-finite candidate energy at iteration {it}")
            actual = e_cur - cand_rep.total

        accepted = actual > 0
        if predicted <= 0:
            if accepted:
                log.warning("iteration %d: nonpositive predicted reduction %.3g with actual %.3g",
                            it, predicted, actual)
            grow = False
        else:
            ratio = actual / predicted
            accepted = accepted and ratio > cfg.tau_accept
            grow = ratio > cfg.tau_grow

        if accepted:
            s, rep, e_cur = cand, cand_rep, cand_rep.total
            if record:
                history.append(s.copy())
        d = min(d * cfg.alpha, cfg.d_max) if grow else d / cfg.alpha
        row(it, accepted)
        if not accepted and d < 1.0:
            status = "converged"
            break
    return RunResult(s.copy(), trace, status, e_cur, int(trace.rows[-1]["iter"]), counter.count,
                     clock.ms(), history)
