"""Reference selectors: uniform spacing, greedy discarding, per-axis learned
budgets, and the flat (unstructured) learned baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidArgumentError, NumericalFailureError, ResourceLimitError
from .model import Dataset, ModelContext, jacobian
from .sampling import AxisLayout, HardSelection, gumbel_noise, topk_order
from .train import Adam, TrainConfig, anneal, fim_trace_batch_t, soft_rows_t

FLAT_GUARD = 65_536  # largest N_pi the flat baseline will attempt


def uniform_selection(alloc, layout: AxisLayout) -> HardSelection:
    """Equally spaced indices per axis.

    For M >= 2 the indices are round(k*(N-1)/(M-1)); rounding collisions are
    shifted upward to the nearest free index. M = 1 picks the midpoint.
    """
    alloc = tuple(int(m) for m in alloc)
    if len(alloc) != layout.q:
        raise InvalidArgumentError("one count per axis required")
    per_axis = []
    for m, n in zip(alloc, layout.lengths):
        if not 1 <= m <= n:
            raise InvalidArgumentError(f"count {m} invalid for axis of length {n}")
        if m == 1:
            per_axis.append(((n - 1) // 2,))
            continue
        chosen: list[int] = []
        taken = set()
        for k in range(m):
            idx = int(np.floor(k * (n - 1) / (m - 1) + 0.5))
            while idx in taken:
                idx += 1
            taken.add(idx)
            chosen.append(idx)
        per_axis.append(tuple(sorted(chosen)))
    return HardSelection(layout, tuple(per_axis))


@dataclass(frozen=True)
class GreedyTrace:
    removals: tuple[tuple[int, int], ...]  # (axis, index) in removal order
    traces: tuple[float, ...]  # fim trace after each removal


def greedy_selection(w: np.ndarray, m: int, layout: AxisLayout,
                     min_per_axis: int = 1,
                     sigma: float = 1.0) -> tuple[HardSelection, GreedyTrace]:
    """Backward greedy: discard the (axis, index) whose removal costs the
    least Fisher-trace until the budget is reached.

    Marginal sums over the currently active grid are maintained incrementally;
    each removal only re-sums the affected slice. Ties break toward the lower
    axis, then the lower index.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != layout.lengths:
        raise InvalidArgumentError("weight tensor does not match the layout")
    if not layout.q * min_per_axis <= m <= layout.total:
        raise InvalidArgumentError("budget infeasible")

    q = layout.q
    active = [list(range(n)) for n in layout.lengths]

    def axis_marginal(i: int) -> np.ndarray:
        """Sum of w over the active grid for each index of axis i."""
        idx = [active[j] if j != i else list(range(layout.lengths[i])) for j in range(q)]
        sub = w[np.ix_(*idx)]
        return sub.sum(axis=tuple(j for j in range(q) if j != i))

    marginals = [axis_marginal(i) for i in range(q)]
    total = float(w[np.ix_(*active)].sum())
    scale = 2.0 / sigma ** 2

    removals: list[tuple[int, int]] = []
    traces: list[float] = []
    while sum(len(a) for a in active) > m:
        best = None  # (delta, axis, index)
        for i in range(q):
            if len(active[i]) <= min_per_axis:
                continue
            for k in active[i]:
                cand = (marginals[i][k], i, k)
                if best is None or cand < best:
                    best = cand
        if best is None:
            raise InvalidArgumentError("budget infeasible under min_per_axis")
        delta, i, k = best
        active[i].remove(k)
        total -= delta
        # Other axes lose the contribution of the removed slice.
        for j in range(q):
            if j == i:
                continue
            idx = [active[l] if l not in (i, j) else None for l in range(q)]
            idx[i] = [k]
            idx[j] = list(range(layout.lengths[j]))
            sub = w[np.ix_(*idx)]
            marginals[j] -= sub.sum(axis=tuple(l for l in range(q) if l != j))
        removals.append((i, k))
        traces.append(scale * total)

    sel = HardSelection(layout, tuple(tuple(a) for a in active))
    return sel, GreedyTrace(tuple(removals), tuple(traces))


def jdps_train(cfg: TrainConfig, alloc, ctx: ModelContext,
               dataset: Dataset) -> HardSelection:
    """Per-axis learned selection with fixed per-axis budgets.

    Maintains q independent logits vectors; each axis samples exactly its
    allocated count without replacement through the same Gumbel machinery.
    The objective and optimizer match the joint training loop, minus the
    cross-axis allocation freedom.
    """
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    alloc = tuple(int(a) for a in alloc)
    if len(alloc) != layout.q or any(not 1 <= a <= n for a, n in zip(alloc, layout.lengths)):
        raise InvalidArgumentError("allocation infeasible for the layout")
    if len(dataset) < cfg.batch_size:
        raise InvalidArgumentError("dataset smaller than the batch size")

    rng = np.random.default_rng(cfg.seed)
    jacs_all = [jacobian(ctx.geom, ctx.pulse, ctx.freqs, s) for s in dataset.scatterers]

    phis = [np.zeros(n) for n in layout.lengths]
    opts = [Adam(n, cfg.learning_rate, cfg.betas, cfg.eps) for n in layout.lengths]
    prio = None
    if cfg.priority is not None:
        prio = [np.asarray(cfg.priority[o:o + n], dtype=float)
                for o, n in zip(layout.offsets, layout.lengths)]

    for step in range(cfg.steps):
        idx = rng.choice(len(dataset), size=cfg.batch_size, replace=False)
        gs = [gumbel_noise(n, rng) for n in layout.lengths]
        tau = anneal(step, cfg)

        phi_ts = [torch.as_tensor(p.copy()).requires_grad_(True) for p in phis]
        blocks = []
        reg = torch.zeros((), dtype=torch.float64)
        for i, (phi_t, g, mi) in enumerate(zip(phi_ts, gs, alloc)):
            rows = soft_rows_t(phi_t, g, mi, tau, cfg.mode)
            blocks.append(rows.T @ rows)
            rows0 = soft_rows_t(phi_t, np.zeros(layout.lengths[i]), mi, tau, "soft")
            diag0 = torch.diagonal(rows0.T @ rows0)
            if prio is not None:
                diag0 = diag0 * torch.as_tensor(prio[i])
            reg = reg + diag0.sum()
        jacs_t = torch.as_tensor(np.stack([jacs_all[i].T for i in idx]),
                                 dtype=torch.complex128)
        fim_term = fim_trace_batch_t(blocks, jacs_t, cfg.sigma)
        loss_t = -fim_term - cfg.reg_weight * reg
        if not torch.isfinite(loss_t):
            raise NumericalFailureError("non-finite loss", step=step)
        loss_t.backward()
        for i in range(layout.q):
            phis[i] = opts[i].step(phis[i], phi_ts[i].grad.numpy())

    indices = tuple(tuple(sorted(int(j) for j in topk_order(phis[i], alloc[i])))
                    for i in range(layout.q))
    return HardSelection(layout, indices)


def _flat_loss(phi_t: torch.Tensor, jacs_t: torch.Tensor, m_flat: int,
               g: np.ndarray, tau: float, mode: str, reg_weight: float,
               sigma: float) -> torch.Tensor:
    """Flat objective: diagonal mask from the column sums of the soft rows."""
    rows = soft_rows_t(phi_t, g, m_flat, tau, mode)
    d = rows.sum(dim=0)
    per_item = torch.sum(torch.abs(d[None, None, :].to(jacs_t.dtype) * jacs_t) ** 2,
                         dim=(1, 2))
    fim_term = (2.0 / sigma ** 2) * per_item.mean()

    rows0 = soft_rows_t(phi_t, np.zeros(phi_t.shape[0]), m_flat, tau, "soft")
    reg = torch.sum(rows0 * rows0)  # Trace of the flat Gram matrix
    return -fim_term - reg_weight * reg


def dps_topk_train(cfg: TrainConfig, m_flat: int, ctx: ModelContext,
                   dataset: Dataset) -> np.ndarray:
    """Unstructured learned baseline over the flat index space.

    Optimizes one logits vector of length N_pi. Refuses when N_pi exceeds the
    memory guard: the row matrices grow as m_flat x N_pi, which is the
    documented failure mode at full scale.
    """
    n_flat = ctx.n_total
    if n_flat > FLAT_GUARD:
        raise ResourceLimitError(
            f"flat baseline needs {m_flat} x {n_flat} matrices; guard is {FLAT_GUARD}")
    if not 1 <= m_flat <= n_flat:
        raise InvalidArgumentError("flat budget out of range")
    if len(dataset) < cfg.batch_size:
        raise InvalidArgumentError("dataset smaller than the batch size")

    rng = np.random.default_rng(cfg.seed)
    jacs_all = [jacobian(ctx.geom, ctx.pulse, ctx.freqs, s) for s in dataset.scatterers]

    phi = np.zeros(n_flat)
    opt = Adam(n_flat, cfg.learning_rate, cfg.betas, cfg.eps)
    for step in range(cfg.steps):
        idx = rng.choice(len(dataset), size=cfg.batch_size, replace=False)
        g = gumbel_noise(n_flat, rng)
        tau = anneal(step, cfg)
        phi_t = torch.as_tensor(phi.copy()).requires_grad_(True)
        jacs_t = torch.as_tensor(np.stack([jacs_all[i].T for i in idx]),
                                 dtype=torch.complex128)
        loss_t = _flat_loss(phi_t, jacs_t, m_flat, g, tau, cfg.mode,
                            cfg.reg_weight, cfg.sigma)
        if not torch.isfinite(loss_t):
            raise NumericalFailureError("non-finite loss", step=step)
        loss_t.backward()
        phi = opt.step(phi, phi_t.grad.numpy())

    return np.sort(topk_order(phi, m_flat))


def flat_loss_value_and_grad(phi: np.ndarray, jacs: list[np.ndarray],
                             cfg: TrainConfig, m_flat: int, g: np.ndarray,
                             tau: float) -> tuple[float, np.ndarray]:
    """Value and gradient of the flat objective for a fixed noise draw."""
    phi_t = torch.as_tensor(np.asarray(phi, dtype=float).copy()).requires_grad_(True)
    jacs_t = torch.as_tensor(np.stack([j.T for j in jacs]), dtype=torch.complex128)
    loss_t = _flat_loss(phi_t, jacs_t, m_flat, g, tau, cfg.mode,
                        cfg.reg_weight, cfg.sigma)
    loss_t.backward()
    return float(loss_t.detach()), phi_t.grad.numpy().copy()


def format_flat_selection(indices) -> str:
    return "flat: " + " ".join(str(int(i)) for i in indices) + "\n"


def write_flat_selection(path, indices) -> None:
    with open(path, "w") as fh:
        fh.write(format_flat_selection(indices))
