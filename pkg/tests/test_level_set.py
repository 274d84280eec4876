import numpy as np
import pytest

from segopt import level_set as ls
from segopt.functionals import CONTINUOUS, Energy, EvalCounter, composite_energy, make_volume
from segopt.grid import signed_distance


def disk_mask(r, size=64):
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return np.hypot(yy - c, xx - c) <= r


def exact_disk_phi(r, size=64):
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return np.hypot(yy - c, xx - c) - r


def test_init_phi_roundtrip_and_sign():
    s = disk_mask(15)
    f = ls.init_phi(s)
    assert np.array_equal(f.mask, s)
    assert np.all(f.phi[s] < 0) and np.all(f.phi[~s] > 0)
    with pytest.raises(ValueError):
        ls.init_phi(np.zeros((8, 8), bool))


@pytest.mark.parametrize("r", [10, 15, 25])
def test_curvature_of_circle(r):
    phi = exact_disk_phi(r, size=2 * r + 20)
    c = (2 * r + 20 - 1) / 2.0
    row = int(round(c))
    col = int(round(c + r))
    k = ls.curvature(phi, (row, col))
    assert k > 0
    assert abs(k * np.hypot(row - c, col - c) - 1) <= 0.1


def test_curvature_of_plane_is_zero():
    yy, xx = np.mgrid[0:30, 0:30]
    phi = 0.6 * xx - 0.8 * yy + 3.0
    k = ls.curvature_field(phi)
    assert np.max(np.abs(k[2:-2, 2:-2])) <= 1e-6


def test_zero_velocity_leaves_phi_unchanged():
    f = ls.init_phi(disk_mask(12))
    cfg = ls.LevelSetConfig(dt=5.0, mu=0.0, lam=0.0)
    out = ls.step(f, np.zeros_like(f.phi), cfg)
    assert np.array_equal(out.phi, f.phi) and out.iteration == 1


def test_curvature_flow_shrinks_disk():
    f = ls.LevelSetField(exact_disk_phi(20))
    cfg = ls.LevelSetConfig(dt=1.0, mu=0.0, lam=1.0)
    g = np.zeros_like(f.phi)
    areas = [f.mask.sum()]
    for _ in range(60):
        f = ls.step(f, g, cfg)
        areas.append(f.mask.sum())
    assert all(b <= a for a, b in zip(areas, areas[1:]))
    assert areas[-1] < areas[0]


def test_distance_penalty_keeps_gradient_unit():
    f = ls.init_phi(disk_mask(18))
    cfg = ls.LevelSetConfig(dt=1.0, mu=0.05, lam=0.0)
    g = np.zeros_like(f.phi)

    def band_defect(phi):
        band = np.abs(phi) < cfg.eps
        return np.mean(np.abs(np.hypot(*ls.central_gradient(phi))[band] - 1))

    before = band_defect(f.phi)
    for _ in range(100):
        f = ls.step(f, g, cfg)
    assert band_defect(f.phi) <= before


def test_step_only_moves_dirac_band():
    rng = np.random.default_rng(0)
    f = ls.init_phi(disk_mask(14))
    cfg = ls.LevelSetConfig(dt=10.0, mu=0.0, lam=2.0)
    out = ls.step(f, rng.normal(0, 5, f.phi.shape), cfg)
    far = np.abs(f.phi) > cfg.eps
    assert np.array_equal(out.phi[far], f.phi[far])


def test_step_signals_divergence():
    f = ls.init_phi(disk_mask(10))
    g = np.full(f.phi.shape, 1e308)
    with pytest.raises(ls.LevelSetDivergence):
        ls.step(f, g, ls.LevelSetConfig(dt=1e10))
    with pytest.raises(ValueError):
        ls.step(f, np.zeros((3, 3)), ls.LevelSetConfig())


def test_regional_term_drives_volume():
    # a segment that is too small grows under the volume term alone
    s = disk_mask(8)
    e = Energy(regional=[(1e-3, make_volume(900))])
    res = ls.run(np.zeros(s.shape), s, e, ls.LevelSetConfig(dt=1.0, max_iters=200))
    assert res.mask.sum() > s.sum()


def volume_problem():
    s = np.zeros((40, 40), bool)
    s[12:28, 12:28] = True
    e = Energy(regional=[(1e-3, make_volume(400))], length_weight=1.0)
    return np.zeros(s.shape), s, e


def test_trace_replay_equality():
    img, s, e = volume_problem()
    res = ls.run(img, s, e, ls.LevelSetConfig(dt=1.0, max_iters=60), record=True)
    assert len(res.history) == len(res.trace)
    c = EvalCounter()
    for row, (mask, phi) in zip(res.trace.rows, res.history):
        rep = composite_energy(e, img, mask, phi=phi, convention=CONTINUOUS, counter=c)
        assert rep.total == row["E"]
        assert int(mask.sum()) == row["area"]
    assert list(res.trace.column("evals")) == list(range(1, len(res.trace) + 1))


def test_run_returns_best_seen():
    img, s, e = volume_problem()
    res = ls.run(img, s, e, ls.LevelSetConfig(dt=1.0, max_iters=80))
    assert res.energy == min(res.trace.column("E"))


def test_max_iters_zero():
    img, s, e = volume_problem()
    res = ls.run(img, s, e, ls.LevelSetConfig(max_iters=0))
    assert np.array_equal(res.mask, s) and len(res.trace) == 0
    res = ls.run_adaptive(img, s, e, ls.LevelSetConfig(max_iters=0))
    assert len(res.trace) == 0


def test_snapshots(tmp_path):
    img, s, e = volume_problem()
    ls.run(img, s, e, ls.LevelSetConfig(max_iters=10), snapshot_every=5, snapshot_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["phi_000005.sfld", "phi_000010.sfld"]


def test_divergence_carries_partial_result():
    img, s, e = volume_problem()
    with pytest.raises(ls.LevelSetDivergence) as info:
        ls.run(img, s, e, ls.LevelSetConfig(dt=1000.0, max_iters=5000))
    res = info.value.result
    assert res.status == "diverged" and len(res.trace) >= 1


def test_adaptive_is_non_increasing():
    img, s, e = volume_problem()
    res = ls.run_adaptive(img, s, e, ls.LevelSetConfig(dt=1.0, max_iters=200))
    energies = res.trace.column("E")
    assert np.all(np.diff(energies) < 0)
    assert res.status in ("stalled", "capped")


def test_adaptive_stalls_without_forces():
    s = disk_mask(10, size=32)
    e = Energy(unary=[(1.0, np.zeros(s.shape))])
    res = ls.run_adaptive(np.zeros(s.shape), s, e, ls.LevelSetConfig(dt=1.0, mu=0.0))
    assert res.status == "stalled" and res.iterations == 0
    assert np.array_equal(res.mask, s)


def test_config_validation():
    for bad in (dict(dt=0), dict(eps=-1), dict(mu=-0.1), dict(max_iters=-1), dict(window=0)):
        with pytest.raises(ValueError):
            ls.LevelSetConfig(**bad)


def test_init_matches_signed_distance():
    s = disk_mask(9, size=30)
    assert np.array_equal(ls.init_phi(s).phi, signed_distance(s))
