"""Experiment harness: problem construction, parameter sweeps, traces and summaries."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import level_set, trust_region
from .functionals import (Energy, EvalCounter, isoperimetric_ratio, make_bhattacharyya, make_kl,
                          make_l2_bins, make_loglikelihood, make_moments, make_volume)
from .grid import (DegenerateMaskWarning, as_mask, bin_counts, coordinate_grids, load_image, load_mask,
                   save_mask)
from .trace import RunResult, ensure_dir

log = logging.getLogger(__name__)

PROBLEMS = ("volume", "moments", "l2", "kl", "bhattacharyya")
SOLVERS = ("levelset", "levelset-adaptive", "ftr")
DEFAULT_DTS = (1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0)
DEFAULT_ALPHAS = (1.01, 1.1, 2.0, 10.0)

# per-experiment weights; distribution terms are scale-free and need large weights
DEFAULT_WEIGHTS = {
    "volume": dict(lambda_length=1.0, lambda_volume=1e-4, lambda_shape=0.0, lambda_app=0.0),
    "moments": dict(lambda_length=10.0, lambda_volume=0.0, lambda_shape=0.01, lambda_app=1.0),
    "l2": dict(lambda_length=1.0, lambda_volume=0.0, lambda_shape=0.0, lambda_app=1.0),
    "kl": dict(lambda_length=0.01, lambda_volume=0.0, lambda_shape=0.0, lambda_app=100.0),
    "bhattacharyya": dict(lambda_length=0.01, lambda_volume=0.0, lambda_shape=0.0, lambda_app=1000.0),
}


@dataclass(frozen=True)
class EllipseSpec:
    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("ellipse semi-axes must be positive")

    @classmethod
    def parse(cls, text: str) -> "EllipseSpec":
        vals = [float(v) for v in text.replace(",", " ").split()]
        if len(vals) not in (4, 5):
            raise ValueError("ellipse needs 'cx,cy,a,b[,theta]'")
        return cls(*vals)

    def rasterize(self, shape) -> np.ndarray:
        h, w = shape[:2]
        y, x = np.mgrid[0:h, 0:w].astype(np.float64)
        theta = math.fmod(self.theta, math.pi)
        c, s = math.cos(theta), math.sin(theta)
        u = (x - self.cx) * c + (y - self.cy) * s
        v = -(x - self.cx) * s + (y - self.cy) * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0


# -- synthetic inputs -----------------------------------------------------------

def synth_circle_image(size: int = 100, seed: int = 0, noise: float = 0.0, v0: float = 2000.0):
    """Flat grey image (optionally with seeded noise) and its default initial mask.

    The initial mask is a centered square of area ``v0 / 2``.
    """
    if size < 32:
        raise ValueError("size must be >= 32")
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 128.0)
    if noise > 0:
        img = np.clip(img + rng.normal(0.0, noise, img.shape), 0, 255)
    img = np.rint(img)
    return img, centered_square((size, size), v0 / 2.0)


def synth_object_image(size: int = 64, seed: int = 0, ellipse: EllipseSpec | None = None,
                       channels: int = 1, noise: float = 25.0):
    """Image with an elliptical object whose intensity statistics differ from the background.

    Returns ``(image, ground_truth_mask)``.
    """
    if size < 32:
        raise ValueError("size must be >= 32")
    rng = np.random.default_rng(seed)
    e = ellipse or EllipseSpec(size * 0.5, size * 0.5, size * 0.28, size * 0.2, 0.5)
    gt = e.rasterize((size, size))
    fg_means = rng.uniform(150, 220, channels)
    bg_means = rng.uniform(40, 110, channels)
    planes = []
    for c in range(channels):
        plane = np.where(gt, fg_means[c], bg_means[c]) + rng.normal(0.0, noise, (size, size))
        planes.append(np.clip(np.rint(plane), 0, 255))
    img = planes[0] if channels == 1 else np.stack(planes, axis=2)
    return img, gt


def centered_square(shape, area: float) -> np.ndarray:
    h, w = shape[:2]
    side = max(1, int(round(math.sqrt(area))))
    side_y, side_x = min(side, h), min(side, w)
    y0, x0 = (h - side_y) // 2, (w - side_x) // 2
    m = np.zeros((h, w), dtype=bool)
    m[y0:y0 + side_y, x0:x0 + side_x] = True
    return m


# -- targets --------------------------------------------------------------------

def moments_of(mask, order: int) -> dict:
    mask = as_mask(mask)
    x, y = coordinate_grids(mask.shape)
    return {(p, q): float(np.sum(x[mask] ** p * y[mask] ** q))
            for p in range(order + 1) for q in range(order + 1 - p)}


def targets_from_ellipse(e: EllipseSpec, img, k: int, order: int):
    """Moment targets and normalized fg/bg histograms from a user ellipse."""
    mask = e.rasterize(np.shape(img))
    if not mask.any():
        raise ValueError("ellipse does not cover any pixel")
    if mask.all():
        raise ValueError("ellipse covers the whole image; no background model")
    fg = bin_counts(img, mask, k).normalize()
    bg = bin_counts(img, ~mask, k).normalize()
    return moments_of(mask, order), fg, bg


# -- configuration --------------------------------------------------------------

def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    problem: str = "volume"
    solver: str = "ftr"
    image: str | None = None
    synth_size: int = 100
    synth_noise: float = 0.0
    channels: int = 1
    seed: int = 0
    lambda_length: float | None = None
    lambda_volume: float | None = None
    lambda_shape: float | None = None
    lambda_app: float | None = None
    bins: int = 100
    order: int = 2
    v0: float | None = None
    ellipse: str | None = None
    gt_mask: str | None = None
    init_mask: str | None = None
    dt: tuple = DEFAULT_DTS
    alpha: tuple = DEFAULT_ALPHAS
    max_iters: int = 10000
    ftr_max_iters: int = 1000
    stencil: int = 16
    out: str = "out"
    workers: int = 0

    def __post_init__(self):
        self.dt = _floats(self.dt)
        self.alpha = _floats(self.alpha)
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        for name, value in DEFAULT_WEIGHTS[self.problem].items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        for name in ("lambda_length", "lambda_volume", "lambda_shape", "lambda_app"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        specs = {"volume": ("v0",), "moments": ("ellipse",), "l2": ("gt_mask",), "kl": ("gt_mask",),
                 "bhattacharyya": ("gt_mask",)}[self.problem]
        others = {"v0", "ellipse", "gt_mask"} - set(specs)
        if any(getattr(self, o) is not None for o in others):
            raise ValueError(f"problem {self.problem!r} takes exactly one target spec: {specs[0]}")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for raw_key, value in mapping.items():
            key = raw_key.replace("-", "_")
            if key not in known:
                raise KeyError(f"unknown config key {raw_key!r}")
            if value is None:
                continue
            kwargs[key] = _coerce(known[key], value)
        return cls(**kwargs)

    def params(self) -> tuple[float, ...]:
        return self.alpha if self.solver == "ftr" else self.dt


def _coerce(f, value):
    if f.name in ("dt", "alpha"):
        return _floats(value)
    if not isinstance(value, str):
        return value
    t = str(f.type)
    if value.lower() in ("none", ""):
        return None
    if t.startswith("int"):
        return int(value)
    if t.startswith("float"):
        return float(value)
    return value


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


# -- problem assembly -----------------------------------------------------------

@dataclass
class Problem:
    img: np.ndarray
    initial: np.ndarray
    energy: Energy
    digest: str
    meta: dict = field(default_factory=dict)


def build_problem(cfg: ExperimentConfig) -> Problem:
    meta = {}
    gt = None
    if cfg.image:
        img = load_image(cfg.image)
    elif cfg.problem == "volume":
        img, _ = synth_circle_image(cfg.synth_size, cfg.seed, cfg.synth_noise,
                                    cfg.v0 if cfg.v0 is not None else 2000.0)
    else:
        img, gt = synth_object_image(cfg.synth_size, cfg.seed, channels=cfg.channels)

    shape = img.shape[:2]
    if cfg.problem == "volume":
        v0 = cfg.v0 if cfg.v0 is not None else 2000.0
        energy = Energy(regional=[(cfg.lambda_volume, make_volume(v0))], length_weight=cfg.lambda_length,
                        stencil_order=cfg.stencil)
        default_init = centered_square(shape, v0 / 2.0)
        meta["v0"] = v0
    elif cfg.problem == "moments":
        if cfg.ellipse:
            e = EllipseSpec.parse(cfg.ellipse)
        else:
            h, w = shape
            e = EllipseSpec(w * 0.5, h * 0.5, w * 0.3, h * 0.22, 0.4)
        targets, fg, bg = targets_from_ellipse(e, img, cfg.bins, cfg.order)
        targets.pop((0, 0), None)  # center of mass and covariance only, no volume
        terms = []
        if targets:
            terms.append((cfg.lambda_shape, make_moments(targets, cfg.order)))
        energy = Energy(regional=terms, unary=[(cfg.lambda_app, make_loglikelihood(fg, bg, img))],
                        length_weight=cfg.lambda_length, stencil_order=cfg.stencil)
        default_init = centered_square(shape, 0.25 * shape[0] * shape[1])
        meta["ellipse"] = asdict(e)
    else:
        if cfg.gt_mask:
            gt = load_mask(cfg.gt_mask)
        if gt is None:
            raise ValueError(f"problem {cfg.problem!r} needs gt_mask for a file image")
        if gt.shape != shape:
            raise ValueError("ground-truth mask and image differ in size")
        hist = bin_counts(img, gt, cfg.bins)
        if cfg.problem == "l2":
            model = make_l2_bins(hist.counts)
        elif cfg.problem == "kl":
            model = make_kl(hist.normalize().counts)
        else:
            model = make_bhattacharyya(hist.normalize().counts)
        energy = Energy(regional=[(cfg.lambda_app, model)], length_weight=cfg.lambda_length,
                        stencil_order=cfg.stencil)
        default_init = centered_square(shape, 0.25 * shape[0] * shape[1])
        meta["gt_area"] = int(gt.sum())

    initial = load_mask(cfg.init_mask) if cfg.init_mask else default_init
    if initial.shape != shape:
        raise ValueError("initial mask and image differ in size")

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(img).tobytes())
    h.update(np.packbits(initial).tobytes())
    if gt is not None:
        h.update(np.packbits(gt).tobytes())
    problem_keys = ("problem", "lambda_length", "lambda_volume", "lambda_shape", "lambda_app", "bins",
                    "order", "v0", "ellipse", "stencil")
    h.update(json.dumps({k: getattr(cfg, k) for k in problem_keys}, sort_keys=True).encode())
    return Problem(img, initial, energy, h.hexdigest()[:16], meta)


# -- running --------------------------------------------------------------------

SUMMARY_COLUMNS = ("problem", "problem_hash", "solver", "param", "status", "iterations", "evaluations",
                   "cpu_ms", "E_crofton", "E_continuous", "R", "L_crofton", "L_cont", "area",
                   "isoperimetric")


def param_label(value: float) -> str:
    return f"{value:g}"


def solve(problem: Problem, solver: str, param: float, cfg: ExperimentConfig) -> RunResult:
    counter = EvalCounter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateMaskWarning)
        if solver == "ftr":
            tcfg = trust_region.TrustRegionConfig(alpha=param, max_iters=cfg.ftr_max_iters)
            return trust_region.run(problem.img, problem.initial, problem.energy, tcfg, counter=counter)
        lcfg = level_set.LevelSetConfig(dt=param, max_iters=cfg.max_iters)
        runner = level_set.run if solver == "levelset" else level_set.run_adaptive
        try:
            return runner(problem.img, problem.initial, problem.energy, lcfg, counter=counter)
        except level_set.LevelSetDivergence as exc:
            log.info("level set diverged at dt=%g: %s", param, exc)
            return exc.result


def final_row(result: RunResult, solver: str) -> dict:
    """Row the summary reports: lowest energy for fixed-step level sets, last otherwise."""
    rows = result.trace.rows
    if solver == "levelset":
        return min(rows, key=lambda r: r["E"])
    return rows[-1]


def check_monotone(result: RunResult) -> None:
    """Accepted trust-region energies must strictly decrease."""
    accepted = [r["E"] for r in result.trace.rows if r["accepted"]]
    for a, b in zip(accepted, accepted[1:]):
        if not b < a:
            raise AssertionError(f"accepted energy did not decrease: {a!r} -> {b!r}")


def summarize(problem: Problem, cfg: ExperimentConfig, solver: str, param: float,
              result: RunResult) -> dict:
    lam = problem.energy.length_weight
    if result.trace.rows:
        row = final_row(result, solver)
        e_crof = row["R"] + lam * row["L_crofton"]
        e_cont = row["R"] + lam * row["L_cont"]
        r_val, l_crof, l_cont = row["R"], row["L_crofton"], row["L_cont"]
    else:
        e_crof = e_cont = r_val = l_crof = l_cont = float("nan")
    return {
        "problem": cfg.problem, "problem_hash": problem.digest, "solver": solver,
        "param": param, "status": result.status, "iterations": result.iterations,
        "evaluations": result.evaluations, "cpu_ms": result.cpu_ms, "E_crofton": e_crof,
        "E_continuous": e_cont, "R": r_val, "L_crofton": l_crof, "L_cont": l_cont,
        "area": int(np.count_nonzero(result.mask)),
        "isoperimetric": isoperimetric_ratio(result.mask, problem.energy.stencil_order),
    }


def _workers(cfg: ExperimentConfig) -> int:
    n = cfg.workers or os.cpu_count() or 1
    cap = int(os.environ.get("SEGOPT_THREADS") or 0)
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, problem: Problem | None = None, write: bool = True):
    """Run the configured solver over its parameter sweep.

    Returns ``(summary_rows, results)``; with ``write`` also stores trace CSVs,
    final masks and ``summary.csv`` under ``cfg.out``.
    """
    problem = problem or build_problem(cfg)
    params = cfg.params()
    out = ensure_dir(cfg.out) if write else None

    def one(param):
        result = solve(problem, cfg.solver, param, cfg)
        if cfg.solver == "ftr":
            check_monotone(result)
        if out is not None:
            label = param_label(param)
            result.trace.write_csv(out / f"trace_{cfg.solver}_{label}.csv")
            save_mask(out / f"mask_{cfg.solver}_{label}.pgm", result.mask)
        return result

    workers = min(_workers(cfg), len(params))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, params))
    else:
        results = [one(p) for p in params]
    summary = [summarize(problem, cfg, cfg.solver, p, r) for p, r in zip(params, results)]
    if out is not None:
        write_summary(out / "summary.csv", summary)
    return summary, results


def write_summary(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_summary(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            for k in ("param", "cpu_ms", "E_crofton", "E_continuous", "R", "L_crofton", "L_cont",
                      "isoperimetric"):
                r[k] = float(r[k])
            for k in ("iterations", "evaluations", "area"):
                r[k] = int(r[k])
            rows.append(r)
    return rows


# -- comparison -----------------------------------------------------------------

def best_row(rows, convention: str = "E_crofton") -> dict:
    """Lowest-energy sweep point among runs that did not diverge."""
    usable = [r for r in rows if r["status"] != "diverged" and math.isfinite(r[convention])]
    if not usable:
        raise ValueError("no usable run in summary")
    return min(usable, key=lambda r: r[convention])


@dataclass
class Comparison:
    problem_hash: str
    best_a: dict
    best_b: dict
    cpu_ratio: float
    eval_ratio: float
    gap_crofton: float
    gap_continuous: float
    per_param: list

    def to_text(self) -> str:
        a, b = self.best_a, self.best_b
        lines = [
            f"problem {self.problem_hash}",
            f"best {a['solver']}: param={a['param']:g} E_crofton={a['E_crofton']:.6g} "
            f"E_continuous={a['E_continuous']:.6g} evals={a['evaluations']} cpu_ms={a['cpu_ms']:.1f}",
            f"best {b['solver']}: param={b['param']:g} E_crofton={b['E_crofton']:.6g} "
            f"E_continuous={b['E_continuous']:.6g} evals={b['evaluations']} cpu_ms={b['cpu_ms']:.1f}",
            f"cpu ratio {a['solver']}/{b['solver']}: {self.cpu_ratio:.4g}",
            f"evaluation ratio {a['solver']}/{b['solver']}: {self.eval_ratio:.4g}",
            f"energy gap (crofton): {self.gap_crofton:.6g}",
            f"energy gap (continuous): {self.gap_continuous:.6g}",
        ]
        for r in self.per_param:
            lines.append(f"  {a['solver']} param={r['param']:g} status={r['status']} "
                         f"eval_ratio={r['eval_ratio']:.4g} cpu_ratio={r['cpu_ratio']:.4g}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        cols = ("param", "status", "evaluations", "cpu_ms", "eval_ratio", "cpu_ratio", "gap_crofton",
                "gap_continuous")
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
            writer.writeheader()
            for r in self.per_param:
                writer.writerow(r)


def _ratio(a, b):
    if a == b:
        return 1.0
    return a / b if b else math.inf


def compare(rows_a: list[dict], rows_b: list[dict]) -> Comparison:
    """Compare solver A's sweep against solver B's best run on the same problem."""
    hashes = {r["problem_hash"] for r in rows_a} | {r["problem_hash"] for r in rows_b}
    if len(hashes) != 1:
        raise ValueError(f"summaries describe different problems: {sorted(hashes)}")
    a, b = best_row(rows_a), best_row(rows_b)
    per = []
    for r in rows_a:
        per.append({
            "param": r["param"], "status": r["status"], "evaluations": r["evaluations"],
            "cpu_ms": r["cpu_ms"], "eval_ratio": _ratio(r["evaluations"], b["evaluations"]),
            "cpu_ratio": _ratio(r["cpu_ms"], b["cpu_ms"]),
            "gap_crofton": r["E_crofton"] - b["E_crofton"],
            "gap_continuous": r["E_continuous"] - b["E_continuous"],
        })
    return Comparison(hashes.pop(), a, b, _ratio(a["cpu_ms"], b["cpu_ms"]),
                      _ratio(a["evaluations"], b["evaluations"]), a["E_crofton"] - b["E_crofton"],
                      a["E_continuous"] - b["E_continuous"], per)
