"""Non-linear regional functionals ``R(S) = F(<f_1,S>, ..., <f_k,S>)`` and composite energies.

Each model splits into three pieces so that the optimizers and the tests can
work in feature space directly:

* ``features(img, s)``  -> vector ``v`` of linear functionals ``<f_i, S>``
* ``value(v)`` / ``grad(v)`` -> ``F(v)`` and ``dF/dv``
* ``broadcast(coef, img)`` -> per-pixel ``sum_i coef_i * f_i(x)``

The first-order functional derivative is then ``broadcast(grad(features))``.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import (Histogram, as_image, as_mask, bin_indices, channel_planes, coordinate_grids,
                   linear_sum, signed_distance)
from .length import crofton_length, crofton_weights, length_continuous

EPS_V = 1e-10
EPS_P = 1e-8


class EvalCounter:
    """Counts full energy evaluations ("updates"), the cost unit used to compare solvers."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def tick(self) -> int:
        with self._lock:
            self._n += 1
            return self._n

    @property
    def count(self) -> int:
        return self._n

    def reset(self):
        with self._lock:
            self._n = 0


default_counter = EvalCounter()


class RegionalModel:
    kind = "abstract"

    def features(self, img, s) -> np.ndarray:
        raise NotImplementedError

    def value(self, v: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def broadcast(self, coef: np.ndarray, img) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, img, s, counter: EvalCounter | None = None) -> float:
        (counter or default_counter).tick()
        return self.value(self.features(img, s))

    def gradient_field(self, img, s) -> np.ndarray:
        return self.broadcast(self.grad(self.features(img, s)), img)


def evaluate(model: RegionalModel, img, s, counter: EvalCounter | None = None) -> float:
    return model.evaluate(img, s, counter)


def gradient_field(model: RegionalModel, img, s) -> np.ndarray:
    return model.gradient_field(img, s)


@dataclass(frozen=True, eq=False)
class VolumeModel(RegionalModel):
    target: float
    kind = "volume"

    def features(self, img, s):
        return np.array([float(np.count_nonzero(as_mask(s)))])

    def value(self, v):
        return float((v[0] - self.target) ** 2)

    def grad(self, v):
        return np.array([2.0 * (v[0] - self.target)])

    def broadcast(self, coef, img):
        return np.full(np.shape(img)[:2], float(coef[0]))


@dataclass(frozen=True, eq=False)
class MomentsModel(RegionalModel):
    """Squared distance between raw geometric moments ``<x^p y^q, S>`` and targets.

    Coordinates are normalized to [0, 1] on both axes before raising to powers.
    """

    orders: tuple[tuple[int, int], ...]
    targets: np.ndarray
    kind = "moments"

    def feature_maps(self, shape) -> np.ndarray:
        x, y = coordinate_grids(shape)
        return np.stack([x ** p * y ** q for p, q in self.orders])

    def features(self, img, s):
        s = as_mask(s)
        maps = self.feature_maps(s.shape)
        return maps[:, s].sum(axis=1)

    def value(self, v):
        return float(np.sum((v - self.targets) ** 2))

    def grad(self, v):
        return 2.0 * (v - self.targets)

    def broadcast(self, coef, img):
        maps = self.feature_maps(np.shape(img)[:2])
        return np.tensordot(coef, maps, axes=1)


class _BinModel(RegionalModel):
    """Shared plumbing for histogram functionals; targets have shape (channels, bins)."""

    target: np.ndarray

    @property
    def bins(self) -> int:
        return self.target.shape[1]

    def _bin_counts(self, img, s):
        s = as_mask(s)
        idx = bin_indices(img, self.bins)
        if idx.shape[0] != self.target.shape[0]:
            raise ValueError(f"model expects {self.target.shape[0]} channel(s), image has {idx.shape[0]}")
        if idx.shape[1:] != s.shape:
            raise ValueError("dimension mismatch between image and mask")
        return np.stack([np.bincount(p[s], minlength=self.bins) for p in idx]).astype(np.float64)

    def _broadcast_bins(self, per_bin, img):
        idx = bin_indices(img, self.bins)
        out = np.zeros(idx.shape[1:])
        for c, plane in enumerate(idx):
            out += per_bin[c][plane]
        return out


@dataclass(frozen=True, eq=False)
class L2BinsModel(_BinModel):
    """``sqrt(sum_i (<f_i,S> - q_i)^2)`` over (non-normalized) bin counts."""

    target: np.ndarray
    kind = "l2"

    def features(self, img, s):
        return self._bin_counts(img, s).ravel()

    def value(self, v):
        return float(np.sqrt(np.sum((v - self.target.ravel()) ** 2)))

    def grad(self, v):
        diff = v - self.target.ravel()
        norm = np.sqrt(np.sum(diff ** 2))
        if norm == 0.0:
            return np.zeros_like(diff)  # minimal-norm subgradient at the kink
        return diff / norm

    def broadcast(self, coef, img):
        return self._broadcast_bins(coef.reshape(self.target.shape), img)


class _DistributionModel(_BinModel):
    """Features are the bin counts of every channel followed by the area ``<1,S>``.

    The observed distribution is ``p = (counts + eps) / (area + k*eps)``, which
    stays normalized whenever the counts sum to the area and is finite on the
    empty segment.
    """

    def features(self, img, s):
        counts = self._bin_counts(img, s)
        return np.append(counts.ravel(), float(np.count_nonzero(as_mask(s))))

    def _split(self, v):
        counts = v[:-1].reshape(self.target.shape)
        denom = v[-1] + self.bins * EPS_V
        return (counts + EPS_V) / denom, denom

    def broadcast(self, coef, img):
        per_bin = coef[:-1].reshape(self.target.shape)
        return self._broadcast_bins(per_bin, img) + coef[-1]


@dataclass(frozen=True, eq=False)
class KLModel(_DistributionModel):
    """``sum_i p_i log(p_i / q_i)`` summed over channels."""

    target: np.ndarray
    kind = "kl"

    def value(self, v):
        p, _ = self._split(v)
        return float(np.sum(p * np.log(p / self.target)))

    def grad(self, v):
        p, denom = self._split(v)
        t = np.log(p / self.target) + 1.0
        d_counts = t / denom
        d_area = -np.sum(t * p) / denom
        return np.append(d_counts.ravel(), d_area)


@dataclass(frozen=True, eq=False)
class BhattacharyyaModel(_DistributionModel):
    """``-log(sum_i sqrt(p_i q_i))`` summed over channels."""

    target: np.ndarray
    kind = "bhattacharyya"

    def value(self, v):
        p, _ = self._split(v)
        bc = np.sum(np.sqrt(p * self.target), axis=1)
        return float(-np.sum(np.log(bc)))

    def grad(self, v):
        p, denom = self._split(v)
        bc = np.sum(np.sqrt(p * self.target), axis=1, keepdims=True)
        dp = -0.5 * np.sqrt(self.target / p) / bc
        d_counts = dp / denom
        d_area = -np.sum(dp * p) / denom
        return np.append(d_counts.ravel(), d_area)


# -- constructors ---------------------------------------------------------------

def _as_target(q) -> np.ndarray:
    if isinstance(q, Histogram):
        q = q.counts
    q = np.atleast_2d(np.asarray(q, dtype=np.float64)).copy()
    if q.shape[1] < 1:
        raise ValueError("need at least one bin")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ValueError("targets must be finite and nonnegative")
    return q


def _as_distribution(q) -> np.ndarray:
    q = _as_target(q)
    if not np.allclose(q.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("target distribution must sum to 1 per channel")
    return q


def make_volume(v0: float) -> VolumeModel:
    if not v0 > 0:
        raise ValueError("target volume must be positive")
    return VolumeModel(float(v0))


def make_moments(targets: dict, order: int) -> MomentsModel:
    """``targets`` maps ``(p, q)`` to the target moment; every key needs ``p + q <= order``."""
    if order < 0:
        raise ValueError("order must be >= 0")
    if not targets:
        raise ValueError("at least one moment target is required")
    keys = tuple(sorted((int(p), int(q)) for p, q in targets))
    for p, q in keys:
        if p < 0 or q < 0 or p + q > order:
            raise ValueError(f"moment ({p}, {q}) not allowed for order {order}")
    vals = np.array([float(targets[k]) for k in keys])
    if not np.all(np.isfinite(vals)):
        raise ValueError("moment targets must be finite")
    return MomentsModel(keys, vals)


def make_l2_bins(q) -> L2BinsModel:
    return L2BinsModel(_as_target(q))


def make_kl(q) -> KLModel:
    q = _as_distribution(q)
    k = q.shape[1]
    # empty target bins would make the divergence infinite; floor and renormalize
    q = (q + EPS_V) / (1.0 + k * EPS_V)
    return KLModel(q)


def make_bhattacharyya(q) -> BhattacharyyaModel:
    return BhattacharyyaModel(_as_distribution(q))


def make_loglikelihood(fg: Histogram, bg: Histogram, img) -> np.ndarray:
    """Per-pixel ``-log P(I|fg) + log P(I|bg)``; channels are treated as independent."""
    if not (fg.normalized and bg.normalized):
        raise ValueError("appearance histograms must be normalized")
    if fg.counts.shape != bg.counts.shape:
        raise ValueError("foreground and background binning differ")
    img = as_image(img)
    idx = bin_indices(img, fg.bins)
    if idx.shape[0] != fg.channels:
        raise ValueError("histogram channel count does not match the image")
    out = np.zeros(idx.shape[1:])
    for c, plane in enumerate(idx):
        out += -np.log(fg.counts[c][plane] + EPS_P) + np.log(bg.counts[c][plane] + EPS_P)
    return out


# -- composite energy -----------------------------------------------------------

CROFTON = "crofton"
CONTINUOUS = "continuous"


@dataclass
class Energy:
    """Weighted sum ``sum w_r R_r(S) + sum w_u <u, S> + length_weight * L(S)``."""

    regional: list = field(default_factory=list)  # (weight, RegionalModel)
    unary: list = field(default_factory=list)  # (weight, field)
    length_weight: float = 0.0
    stencil_order: int = 16
    eps: float = 1.5

    def __post_init__(self):
        if not self.regional and not self.unary and self.length_weight == 0:
            raise ValueError("energy needs at least one term")
        for w, _ in list(self.regional) + list(self.unary):
            if w < 0:
                raise ValueError("term weights must be nonnegative")
        if self.length_weight < 0:
            raise ValueError("length weight must be nonnegative")
        self.stencil = crofton_weights(self.stencil_order)

    def unary_field(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        for w, u in self.unary:
            out += w * np.asarray(u, dtype=np.float64)
        return out


@dataclass
class EnergyReport:
    total: float
    regional: float
    unary: float
    length: float
    convention: str
    length_continuous: float
    length_crofton: float
    contributions: dict
    evaluations: int

    def total_with(self, convention: str) -> float:
        """Total energy re-expressed under the other length convention."""
        rest = self.total - self.contributions["length"]
        weight = self.contributions["length_weight"]
        length = self.length_crofton if convention == CROFTON else self.length_continuous
        return rest + weight * length


def composite_energy(energy: Energy, img, s, phi=None, convention: str = CROFTON,
                     counter: EvalCounter | None = None) -> EnergyReport:
    """Evaluate every term once and count a single energy evaluation.

    Both length conventions are computed; ``convention`` picks the one entering
    ``total``. The continuous length uses ``phi`` when given, otherwise the signed
    distance of ``s``.
    """
    if convention not in (CROFTON, CONTINUOUS):
        raise ValueError(f"unknown length convention {convention!r}")
    s = as_mask(s)
    n = (counter or default_counter).tick()
    contributions = {}
    regional = 0.0
    for i, (w, model) in enumerate(energy.regional):
        r = model.value(model.features(img, s))
        contributions[f"{model.kind}[{i}]"] = w * r
        regional += w * r
    unary = 0.0
    for i, (w, u) in enumerate(energy.unary):
        d = linear_sum(u, s)
        contributions[f"unary[{i}]"] = w * d
        unary += w * d
    l_crofton = crofton_length(s, energy.stencil)
    if phi is None:
        if s.any() and not s.all():
            phi = signed_distance(s)
        else:
            phi = np.full(s.shape, 1e3)  # no zero level set, no length
    l_cont = length_continuous(phi, energy.eps)
    length = l_crofton if convention == CROFTON else l_cont
    contributions["length"] = energy.length_weight * length
    contributions["length_weight"] = energy.length_weight
    total = regional + unary + energy.length_weight * length
    return EnergyReport(total=total, regional=regional, unary=unary, length=length,
                        convention=convention, length_continuous=l_cont, length_crofton=l_crofton,
                        contributions=contributions, evaluations=n)


# -- target serialization -------------------------------------------------------

def save_histogram(path, hist: Histogram | np.ndarray) -> None:
    counts = hist.counts if isinstance(hist, Histogram) else np.atleast_2d(hist)
    c, k = counts.shape
    lines = [f"# channels {c} bins {k}"]
    lines += [f"{i} {val!r}" for i, val in enumerate(counts.ravel().tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_histogram(path) -> np.ndarray:
    """Read ``bin_index value`` lines; bin indices are flattened ``channel * bins + bin``."""
    channels = bins = None
    entries = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 4 and parts[0] == "channels" and parts[2] == "bins":
                channels, bins = int(parts[1]), int(parts[3])
            continue
        i, val = line.split()
        entries[int(i)] = float(val)
    if not entries:
        raise ValueError(f"{path}: no histogram entries")
    if channels is None:
        channels, bins = 1, max(entries) + 1
    flat = np.zeros(channels * bins)
    for i, val in entries.items():
        if not 0 <= i < flat.size:
            raise ValueError(f"{path}: bin index {i} out of range")
        flat[i] = val
    return flat.reshape(channels, bins)


def save_moments(path, targets: dict) -> None:
    lines = [f"{p} {q} {m!r}" for (p, q), m in sorted(targets.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_moments(path) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        p, q, m = line.split()
        out[(int(p), int(q))] = float(m)
    return out


def isoperimetric_ratio(s, order: int = 16) -> float:
    area = float(np.count_nonzero(as_mask(s)))
    perim = crofton_length(s, order)
    return 4.0 * math.pi * area / perim ** 2 if perim > 0 else 0.0
