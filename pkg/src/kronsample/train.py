"""Training loop for the learned structured selection.

The objective over the logits is

    loss = -mean_batch Trace(FIM(soft selector)) - lambda * Trace(D Psi)

where the first term flows through the Gumbel-perturbed branch and the second
through the noiseless branch. Gradients come from reverse-mode autodiff
(torch, float64) with the Gumbel noise held fixed; the finite-difference
tests in the suite act as the independent oracle for that gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import InvalidArgumentError, NumericalFailureError
from .model import Dataset, ModelContext, jacobian
from .sampling import (AxisLayout, HardSelection, allocation, format_selection,
                       gumbel_noise, harden, topk_order)

MODES = ("soft", "straight_through")


@dataclass
class TrainConfig:
    budget: int
    steps: int = 2000
    batch_size: int = 8
    learning_rate: float = 0.05
    tau_start: float = 1.0
    tau_end: float = 0.1
    reg_weight: float = 1.0
    priority: np.ndarray | None = None  # diagonal of D, length N_sigma
    sigma: float = 0.1
    seed: int = 0
    mode: str = "straight_through"
    min_per_axis: int = 1
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def validate(self, layout: AxisLayout) -> None:
        if self.steps < 0:
            raise InvalidArgumentError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if not self.tau_start >= self.tau_end > 0:
            raise InvalidArgumentError("need tau_start >= tau_end > 0")
        if self.reg_weight < 0:
            raise InvalidArgumentError("reg_weight must be nonnegative")
        if self.sigma <= 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}")
        if not layout.q * self.min_per_axis <= self.budget <= layout.total:
            raise InvalidArgumentError("budget infeasible for the layout")
        if self.priority is not None and (
                len(self.priority) != layout.total or np.any(np.asarray(self.priority) < 0)):
            raise InvalidArgumentError("priority weights must be nonnegative, length N_sigma")


def anneal(step: int, cfg: TrainConfig) -> float:
    """Geometric temperature schedule from tau_start to tau_end."""
    if cfg.steps <= 1:
        return cfg.tau_start
    frac = step / (cfg.steps - 1)
    return cfg.tau_start * (cfg.tau_end / cfg.tau_start) ** frac


def soft_rows_t(phi_t: torch.Tensor, g: np.ndarray, m: int, tau: float,
                mode: str = "soft") -> torch.Tensor:
    """Differentiable sampling-without-replacement rows (m x n, torch).

    Row i is the masked softmax of the perturbed logits at temperature tau,
    with the first i winners excluded. In straight-through mode the forward
    value is the exact one-hot of each winner while the gradient is that of
    the soft rows.
    """
    n = phi_t.shape[0]
    phi_tilde = phi_t + torch.as_tensor(g, dtype=phi_t.dtype)
    order = topk_order(phi_tilde.detach().numpy(), m)
    mask = torch.zeros((m, n), dtype=torch.bool)
    for i in range(1, m):
        mask[i, order[:i]] = True
    scores = (phi_tilde / tau).expand(m, n)
    scores = torch.where(mask, torch.tensor(float("-inf"), dtype=phi_t.dtype), scores)
    rows = torch.softmax(scores, dim=1)
    if mode == "straight_through":
        hard = torch.zeros((m, n), dtype=phi_t.dtype)
        hard[torch.arange(m), torch.as_tensor(order.copy())] = 1.0
        rows = hard + rows - rows.detach()
    return rows


def _batch_jacobians(batch, ctx: ModelContext) -> list[np.ndarray]:
    jacs = []
    for item in batch:
        jacs.append(item if isinstance(item, np.ndarray)
                    else jacobian(ctx.geom, ctx.pulse, ctx.freqs, item))
    return jacs


def fim_trace_batch_t(blocks: list[torch.Tensor], jacs_t: torch.Tensor,
                      sigma: float) -> torch.Tensor:
    """Mean over the batch of Trace(FIM) = (2/sigma^2) sum_p ||S j_p||^2.

    `jacs_t` has shape (batch, P, N_pi) complex; the selector is applied by
    successive per-axis mode products on the reshaped tensor.
    """
    lengths = tuple(b.shape[0] for b in blocks)
    bsz, p, n = jacs_t.shape
    t = jacs_t.reshape((bsz, p) + lengths)
    for axis, block in enumerate(blocks):
        bc = block.to(jacs_t.dtype)
        t = torch.moveaxis(torch.tensordot(bc, t, dims=([1], [axis + 2])), 0, axis + 2)
    per_item = torch.sum(torch.abs(t) ** 2, dim=tuple(range(1, t.ndim)))
    return (2.0 / sigma ** 2) * per_item.mean()


def _loss_graph(phi_t: torch.Tensor, jacs: list[np.ndarray], cfg: TrainConfig,
                layout: AxisLayout, g: np.ndarray, tau: float):
    """Builds the torch graph and returns (loss, fim_term, reg_term)."""
    rows = soft_rows_t(phi_t, g, cfg.budget, tau, cfg.mode)
    psi = rows.T @ rows
    blocks = [psi[o:o + n, o:o + n]
              for o, n in zip(layout.offsets, layout.lengths)]
    jacs_t = torch.as_tensor(np.stack([j.T for j in jacs]), dtype=torch.complex128)
    fim_term = fim_trace_batch_t(blocks, jacs_t, cfg.sigma)

    rows0 = soft_rows_t(phi_t, np.zeros(layout.total), cfg.budget, tau, "soft")
    psi0 = rows0.T @ rows0
    diag0 = torch.diagonal(psi0)
    if cfg.priority is not None:
        diag0 = diag0 * torch.as_tensor(np.asarray(cfg.priority, dtype=float))
    reg_term = diag0.sum()

    loss_t = -fim_term - cfg.reg_weight * reg_term
    return loss_t, fim_term, reg_term


def _evaluate(phi: np.ndarray, jacs: list[np.ndarray], cfg: TrainConfig,
              layout: AxisLayout, g: np.ndarray, tau: float, want_grad: bool):
    phi_t = torch.as_tensor(np.asarray(phi, dtype=float).copy())
    phi_t.requires_grad_(want_grad)
    loss_t, fim_term, reg_term = _loss_graph(phi_t, jacs, cfg, layout, g, tau)
    if not torch.isfinite(loss_t):
        raise NumericalFailureError("non-finite loss")
    grad = None
    if want_grad:
        loss_t.backward()
        grad = phi_t.grad.numpy().copy()
        if not np.all(np.isfinite(grad)):
            raise NumericalFailureError("non-finite gradient")
    diagnostics = {"fim_trace": float(fim_term.detach()),
                   "reg": float(reg_term.detach()), "tau": tau}
    return float(loss_t.detach()), grad, diagnostics


def loss(phi: np.ndarray, batch, cfg: TrainConfig, ctx: ModelContext,
         rng: np.random.Generator, tau: float | None = None):
    """Objective value and diagnostics for one noise draw from `rng`."""
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    cfg.validate(layout)
    g = gumbel_noise(layout.total, rng)
    value, _, diag = _evaluate(phi, _batch_jacobians(batch, ctx), cfg, layout,
                               g, cfg.tau_start if tau is None else tau, False)
    return value, diag


def loss_gradient(phi: np.ndarray, batch, cfg: TrainConfig, ctx: ModelContext,
                  rng: np.random.Generator, tau: float | None = None) -> np.ndarray:
    """Gradient of the (soft-path) loss for the same noise draw as `loss`.

    The Gumbel noise is treated as a constant (reparameterization); calling
    this with an rng in the same state as the paired `loss` call reproduces
    the identical realization.
    """
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    cfg.validate(layout)
    g = gumbel_noise(layout.total, rng)
    _, grad, _ = _evaluate(phi, _batch_jacobians(batch, ctx), cfg, layout, g,
                           cfg.tau_start if tau is None else tau, True)
    return grad


@dataclass
class TrainReport:
    layout: AxisLayout
    losses: np.ndarray
    fim_traces: np.ndarray
    regs: np.ndarray
    taus: np.ndarray
    allocations: np.ndarray  # (steps, q)
    final_logits: np.ndarray
    selection: HardSelection
    config: TrainConfig = field(repr=False, default=None)


class Adam:
    """Plain Adam with bias correction; minimizes."""

    def __init__(self, n: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        b1, b2 = self.betas
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad ** 2
        m_hat = self.m / (1 - b1 ** self.t)
        v_hat = self.v / (1 - b2 ** self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(cfg: TrainConfig, ctx: ModelContext, dataset: Dataset) -> TrainReport:
    """Optimize the joint logits and harden the result.

    Logits start at zero (uniform selection probabilities); each step draws a
    fresh scatterer batch and fresh Gumbel noise, and the temperature anneals
    geometrically.
    """
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    cfg.validate(layout)
    if len(dataset) < cfg.batch_size:
        raise InvalidArgumentError("dataset smaller than the batch size")

    rng = np.random.default_rng(cfg.seed)
    jacs_all = [jacobian(ctx.geom, ctx.pulse, ctx.freqs, s) for s in dataset.scatterers]

    phi = np.zeros(layout.total)
    opt = Adam(layout.total, cfg.learning_rate, cfg.betas, cfg.eps)
    losses, fims, regs, taus, allocs = [], [], [], [], []
    for step in range(cfg.steps):
        idx = rng.choice(len(dataset), size=cfg.batch_size, replace=False)
        g = gumbel_noise(layout.total, rng)
        tau = anneal(step, cfg)
        try:
            value, grad, diag = _evaluate(phi, [jacs_all[i] for i in idx], cfg,
                                          layout, g, tau, True)
        except NumericalFailureError as exc:
            raise NumericalFailureError(str(exc), step=step) from exc
        phi = opt.step(phi, grad)
        losses.append(value)
        fims.append(diag["fim_trace"])
        regs.append(diag["reg"])
        taus.append(tau)
        allocs.append(allocation(topk_order(phi, cfg.budget), layout))

    selection = harden(phi, layout, cfg.budget, cfg.min_per_axis)
    return TrainReport(
        layout=layout,
        losses=np.asarray(losses),
        fim_traces=np.asarray(fims),
        regs=np.asarray(regs),
        taus=np.asarray(taus),
        allocations=np.asarray(allocs, dtype=int).reshape(len(allocs), layout.q),
        final_logits=phi,
        selection=selection,
        config=cfg,
    )


def format_report(report: TrainReport) -> str:
    """Key-value header plus a CSV body, one row per step."""
    cfg = report.config
    q = report.layout.q
    head = [
        f"budget = {cfg.budget}",
        f"steps = {cfg.steps}",
        f"batch_size = {cfg.batch_size}",
        f"learning_rate = {cfg.learning_rate!r}",
        f"tau_start = {cfg.tau_start!r}",
        f"tau_end = {cfg.tau_end!r}",
        f"reg_weight = {cfg.reg_weight!r}",
        f"sigma = {cfg.sigma!r}",
        f"seed = {cfg.seed}",
        f"mode = {cfg.mode}",
        f"min_per_axis = {cfg.min_per_axis}",
        f"final_allocation = {' '.join(str(c) for c in report.selection.counts)}",
        "",
    ]
    cols = ["step", "loss", "fim_trace", "reg", "tau"] + [f"M_{i+1}" for i in range(q)]
    lines = [",".join(cols)]
    for i in range(len(report.losses)):
        row = [str(i), repr(float(report.losses[i])), repr(float(report.fim_traces[i])),
               repr(float(report.regs[i])), repr(float(report.taus[i]))]
        row += [str(int(c)) for c in report.allocations[i]]
        lines.append(",".join(row))
    body = "\n".join(lines) + "\n"
    return "\n".join(head) + body + "\nselection:\n" + format_selection(report.selection)


def write_report(path, report: TrainReport) -> None:
    with open(path, "w") as fh:
        fh.write(format_report(report))
