import numpy as np
import pytest

from mklnet.data import Dataset, NoiseSpec, make_truth, sample_dataset
from mklnet.errors import InputError, SelectionError
from mklnet.kernels import SpectralKernel
from mklnet.selection import ClipSpec, ParamGrid, build_grid, clip, select, split
from mklnet.solver import FitOptions, RegParams, fit

KERNEL = SpectralKernel(s=0.5, K=64)


def toy(n=24, M=2, d=1, seed=0, noise=None):
    truth = make_truth(M, d, 0.0, seed=seed, kernel=KERNEL)
    return truth, sample_dataset(truth, n, noise or NoiseSpec("none", 0.0), seed=seed + 50)


@pytest.mark.parametrize("n, n_train", [(5, 2), (4, 2), (2, 1)])
def test_split_sizes(n, n_train):
    _, ds = toy(n=n)
    tr, va = split(ds)
    assert (tr.n, va.n) == (n_train, n - n_train)
    np.testing.assert_array_equal(np.vstack([tr.X, va.X]), ds.X)
    np.testing.assert_array_equal(np.concatenate([tr.y, va.y]), ds.y)


def test_split_too_small():
    with pytest.raises(InputError):
        split(Dataset(np.zeros((1, 2)), np.zeros(1)))


def test_clip_cases():
    B = 0.7
    assert clip(B + 1, B) == B
    assert clip(0.3, 1.0) == 0.3
    assert clip(-B - 5, B) == -B
    np.testing.assert_array_equal(clip(np.array([-2.0, 0.1, 2.0]), 1.0), [-1.0, 0.1, 1.0])
    with pytest.raises(InputError):
        clip(0.0, 0.0)


def test_exact_grid_n2():
    g = build_grid(2, mode="exact")
    np.testing.assert_allclose(g.gamma, [0.25, 0.5, 0.75, 1.0], rtol=0, atol=0)
    assert g.branches.count("elastic") == 16
    assert g.branches.count("l1") == 16


def test_exact_grid_refused_for_large_n():
    with pytest.raises(InputError, match="n <= 8"):
        build_grid(9, mode="exact")


@pytest.mark.parametrize("mode, n", [("exact", 3), ("log", 50)])
def test_grid_coupling_exact(mode, n):
    g = build_grid(n, mode=mode, budget=6)
    gamma = set(g.gamma)
    for (l1, l2, l3), br in zip(g.triples, g.branches):
        assert l1 in gamma
        if br == "elastic":
            assert l3 in gamma and l2 == l1 * np.sqrt(l3)
        else:
            assert l3 == 0.0 and l2 / l1 == pytest.approx(np.sqrt(l2 / l1) ** 2)
            assert any(l2 == l1 * np.sqrt(lam) for lam in gamma)


def test_log_grid_counts():
    g = build_grid(100, budget=6)
    assert g.branches.count("elastic") == 36 and g.branches.count("l1") == 36
    assert g.gamma[0] == pytest.approx(1e-4) and g.gamma[-1] == pytest.approx(1.0)
    with pytest.raises(InputError):
        build_grid(100, budget=3)


def test_auto_bound_strict():
    y = np.array([0.5, -1.25, 0.0])
    assert ClipSpec().resolve(y) > 1.25
    assert ClipSpec(delta=0.0).resolve(y) > 1.25
    assert ClipSpec(B=3.0).resolve(y) == 3.0
    with pytest.raises(InputError):
        ClipSpec(B=-1.0)


def test_single_triple_chosen():
    _, ds = toy()
    grid = ParamGrid(((0.1, 0.01, 0.01),), ("elastic",), "log", (0.1,))
    res = select(ds, KERNEL, grid)
    assert res.params == RegParams(0.1, 0.01, 0.01)
    assert res.index == 0


def test_selection_deterministic_and_table():
    truth, ds = toy(seed=3, noise=NoiseSpec("bounded", 0.2))
    grid = build_grid(ds.n, budget=4)
    a = select(ds, KERNEL, grid, truth=truth)
    b = select(ds, KERNEL, grid, truth=truth)
    assert a.to_csv() == b.to_csv() and a.index == b.index
    assert len(a.table) == len(grid)
    header = a.to_csv().splitlines()[0]
    assert header == "lam1,lam2,lam3,validation_mse,exact_l2_error,converged"
    best = min(r["validation_mse"] for r in a.table)
    assert a.table[a.index]["validation_mse"] == best


def test_tie_break_prefers_small_lam1():
    # zero responses: every candidate returns the zero model and ties exactly
    _, ds = toy()
    ds0 = Dataset(ds.X, np.zeros(ds.n))
    grid = ParamGrid(((0.5, 0.1, 0.2), (0.2, 0.1, 0.3), (0.2, 0.05, 0.3)), ("elastic",) * 3, "log", ())
    res = select(ds0, KERNEL, grid, ClipSpec(B=1.0))
    assert res.index == 2


def test_all_fits_fail():
    _, ds = toy(noise=NoiseSpec("bounded", 0.3))
    grid = ParamGrid(((1e-3, 1e-4, 0.0), (1e-3, 1e-4, 1e-3)), ("l1", "elastic"), "log", ())
    # one inner iteration and an unreachable tolerance: every nonzero block solve raises
    with pytest.raises(SelectionError) as info:
        select(ds, KERNEL, grid, opts=FitOptions(max_inner=1, inner_tol=1e-300))
    assert len(info.value.diagnostics) == 2
    assert all("NumericError" in d for d in info.value.diagnostics)


def test_clipped_predictions_bounded():
    _, ds = toy(seed=5, noise=NoiseSpec("gaussian", 0.3))
    res = select(ds, KERNEL, build_grid(ds.n, budget=4), ClipSpec(B=0.2))
    x = np.random.default_rng(0).uniform(size=(500, 2))
    assert np.max(np.abs(res.model.predict(x))) <= 0.2


def test_clipping_contraction_pointwise():
    truth, ds = toy(n=30, seed=7, noise=NoiseSpec("bounded", 0.5))
    B = truth.sup_norm_bound() * 1.01
    x = np.random.default_rng(1).uniform(size=(2000, 2))
    fstar = truth(x)
    assert np.max(np.abs(fstar)) < B
    for lam1 in [1e-3, 1e-2, 1e-1]:
        model = fit(ds, KERNEL, RegParams(lam1, lam1 * 0.1, 0.0))
        raw = model.predict(x)
        assert np.all(np.abs(clip(raw, B) - fstar) <= np.abs(raw - fstar))


def test_parallel_matches_serial():
    truth, ds = toy(seed=9, noise=NoiseSpec("bounded", 0.2))
    grid = build_grid(ds.n, budget=4)
    a = select(ds, KERNEL, grid, truth=truth, opts=FitOptions(max_sweeps=50))
    b = select(ds, KERNEL, grid, truth=truth, opts=FitOptions(max_sweeps=50), jobs=2)
    assert a.to_csv() == b.to_csv()
