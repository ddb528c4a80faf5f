"""Baseline selectors: uniform spacing, backward greedy against a naive
recompute, the per-axis learned variant, and the flat learned variant."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kronsample.baselines import (FLAT_GUARD, dps_topk_train,
                                  flat_loss_value_and_grad,
                                  format_flat_selection, greedy_selection,
                                  jdps_train, uniform_selection,
                                  write_flat_selection)
from kronsample.errors import (InvalidArgumentError, ResourceLimitError)
from kronsample.harness import _maybe_flat_indices
from kronsample.sampling import AxisLayout, HardSelection, gumbel_noise
from kronsample.train import TrainConfig


def naive_greedy(w, m, layout, min_per_axis=1):
    """Full-recompute reference for the backward greedy selector."""
    active = [list(range(n)) for n in layout.lengths]

    def total(act):
        return float(w[np.ix_(*act)].sum())

    while sum(len(a) for a in active) > m:
        best = None
        for i in range(layout.q):
            if len(active[i]) <= min_per_axis:
                continue
            for k in active[i]:
                trial = [list(a) for a in active]
                trial[i].remove(k)
                delta = total(active) - total(trial)
                cand = (delta, i, k)
                if best is None or cand < best:
                    best = cand
        _, i, k = best
        active[i].remove(k)
    return HardSelection(layout, tuple(tuple(a) for a in active))


def test_uniform_selection_examples():
    lay = AxisLayout((8,))
    assert uniform_selection((4,), lay).indices == ((0, 2, 5, 7),)
    assert uniform_selection((1,), lay).indices == ((3,),)
    assert uniform_selection((8,), lay).indices == (tuple(range(8)),)
    with pytest.raises(InvalidArgumentError):
        uniform_selection((9,), lay)
    with pytest.raises(InvalidArgumentError):
        uniform_selection((0,), lay)
    with pytest.raises(InvalidArgumentError):
        uniform_selection((1, 1), lay)


@given(st.integers(2, 40), st.integers(2, 40))
@settings(max_examples=200, deadline=None)
def test_uniform_selection_properties(n, m):
    if m > n:
        return
    lay = AxisLayout((n,))
    idx = uniform_selection((m,), lay).indices[0]
    assert len(idx) == m
    assert idx[0] == 0 and idx[-1] == n - 1
    assert all(0 <= i < n for i in idx)


def test_greedy_matches_naive_recompute(rng):
    lay = AxisLayout((3, 3, 4))
    for _ in range(10):
        w = rng.random(lay.lengths) + 0.01
        for m in range(3, lay.total + 1):
            fast, _ = greedy_selection(w, m, lay)
            assert fast == naive_greedy(w, m, lay)


def test_greedy_trace_bookkeeping(rng):
    lay = AxisLayout((3, 4))
    w = rng.random(lay.lengths)
    sigma = 0.5
    sel, trace = greedy_selection(w, 4, lay, sigma=sigma)
    assert sel.budget == 4
    assert len(trace.removals) == len(trace.traces) == lay.total - 4
    active = [list(range(n)) for n in lay.lengths]
    for (axis, index), t in zip(trace.removals, trace.traces):
        active[axis].remove(index)
        want = (2.0 / sigma ** 2) * w[np.ix_(*active)].sum()
        assert t == pytest.approx(want, rel=1e-12)
    assert sel.indices == tuple(tuple(a) for a in active)


def test_greedy_respects_min_per_axis(rng):
    lay = AxisLayout((2, 5))
    w = np.zeros(lay.lengths)
    w[1, :] = 1.0  # axis 0 index 0 contributes nothing, yet must be kept
    sel, _ = greedy_selection(w, 3, lay, min_per_axis=1)
    assert all(c >= 1 for c in sel.counts)
    with pytest.raises(InvalidArgumentError):
        greedy_selection(w, 1, lay)


def test_jdps_respects_allocation(small_ctx, small_dataset):
    cfg = TrainConfig(budget=4, steps=3, batch_size=4, seed=0)
    alloc = (1, 1, 2)
    sel = jdps_train(cfg, alloc, small_ctx, small_dataset)
    assert sel.counts == alloc
    again = jdps_train(cfg, alloc, small_ctx, small_dataset)
    assert sel == again
    with pytest.raises(InvalidArgumentError):
        jdps_train(cfg, (1, 1), small_ctx, small_dataset)
    with pytest.raises(InvalidArgumentError):
        jdps_train(cfg, (0, 2, 2), small_ctx, small_dataset)


def test_dps_topk_guard_and_smoke(small_ctx, small_dataset):
    cfg = TrainConfig(budget=4, steps=3, batch_size=4, seed=0)
    flat = dps_topk_train(cfg, 4, small_ctx, small_dataset)
    assert flat.shape == (4,)
    assert np.array_equal(flat, np.sort(flat))
    assert np.array_equal(flat, np.unique(flat))
    assert flat.min() >= 0 and flat.max() < small_ctx.n_total
    with pytest.raises(InvalidArgumentError):
        dps_topk_train(cfg, 0, small_ctx, small_dataset)


def test_dps_topk_refuses_oversized_flat_space(pulse, small_dataset):
    from kronsample.model import ArrayGeometry, FrequencyGrid, ModelContext
    geom = ArrayGeometry(64, 64, 3e-4)
    freqs = FrequencyGrid.centered(pulse, 113, span=0.9e6)
    big = ModelContext(geom, pulse, freqs)
    assert big.n_total > FLAT_GUARD
    cfg = TrainConfig(budget=16, steps=1, batch_size=4, seed=0)
    with pytest.raises(ResourceLimitError):
        dps_topk_train(cfg, 16, big, small_dataset)


def test_flat_loss_gradient_finite_differences(pulse, small_ctx, rng):
    from kronsample.model import Scatterer, jacobian
    cfg = TrainConfig(budget=4, sigma=0.2, reg_weight=1.0, mode="soft")
    jacs = [jacobian(small_ctx.geom, pulse, small_ctx.freqs,
                     Scatterer(1e-3, 12e-3, 1.0, 0.4))]
    n = small_ctx.n_total
    phi = rng.standard_normal(n)
    g = gumbel_noise(n, rng)
    value, grad = flat_loss_value_and_grad(phi, jacs, cfg, 4, g, 0.7)
    h = 1e-6
    fd = np.zeros(n)
    for i in range(n):
        plus, minus = phi.copy(), phi.copy()
        plus[i] += h
        minus[i] -= h
        vp, _ = flat_loss_value_and_grad(plus, jacs, cfg, 4, g, 0.7)
        vm, _ = flat_loss_value_and_grad(minus, jacs, cfg, 4, g, 0.7)
        fd[i] = (vp - vm) / (2 * h)
    assert np.abs(fd - grad).max() / np.abs(grad).max() < 1e-5


def test_flat_selection_file_round_trip(tmp_path):
    idx = np.array([0, 5, 17, 42])
    assert format_flat_selection(idx) == "flat: 0 5 17 42\n"
    path = tmp_path / "flat.txt"
    write_flat_selection(path, idx)
    back = _maybe_flat_indices(path)
    assert np.array_equal(back, idx)


def test_maybe_flat_rejects_structured_files(tmp_path):
    path = tmp_path / "sel.txt"
    path.write_text("axis T: 0 1\naxis R: 0\naxis F: 2\n")
    assert _maybe_flat_indices(path) is None
