"""Fisher information, Cramer-Rao bounds, and the Kronecker selector operator.

The selection operator is a Kronecker product of small per-axis blocks and is
only ever applied through per-axis mode products; the full N_pi x N_pi matrix
is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, InvalidArgumentError, SingularFimError
from .model import Dataset, ModelContext, P_PARAMS, jacobian
from .sampling import HardSelection, StructuredSelector


def kron_apply(selector: StructuredSelector, v: np.ndarray) -> np.ndarray:
    """Apply (B_1 kron B_2 kron ... kron B_q) to a vector via mode products."""
    lengths = selector.lengths
    n = int(np.prod(lengths))
    v = np.asarray(v)
    if v.shape != (n,):
        raise InvalidArgumentError(
            f"vector length {v.shape} does not match block sizes {lengths}")
    t = v.reshape(lengths)
    for axis, block in enumerate(selector.blocks):
        t = np.moveaxis(np.tensordot(block, t, axes=([1], [axis])), 0, axis)
    return t.reshape(n)


def fim(selector: StructuredSelector, jac: np.ndarray, sigma: float) -> np.ndarray:
    """Slepian-Bangs Fisher matrix (2/sigma^2) * Re(J^H S^T S J).

    The blocks are symmetric, so S^T S = S S and a single operator
    application per Jacobian column suffices after forming V = S J.
    """
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    jac = np.asarray(jac)
    v = np.stack([kron_apply(selector, jac[:, p]) for p in range(jac.shape[1])],
                 axis=1)
    f = (2.0 / sigma ** 2) * np.real(v.conj().T @ v)
    return 0.5 * (f + f.T)


def fim_trace(selector: StructuredSelector, jac: np.ndarray, sigma: float) -> float:
    """Trace of the Fisher matrix, (2/sigma^2) * sum_p ||S j_p||^2."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    jac = np.asarray(jac)
    total = 0.0
    for p in range(jac.shape[1]):
        total += float(np.sum(np.abs(kron_apply(selector, jac[:, p])) ** 2))
    return (2.0 / sigma ** 2) * total


def weight_tensor(jacs, shape) -> np.ndarray:
    """Per-sample information weight w[n] = mean_batch sum_p |J[n, p]|^2."""
    jacs = [np.asarray(j) for j in (jacs if isinstance(jacs, (list, tuple)) else [jacs])]
    acc = np.zeros(int(np.prod(shape)))
    for j in jacs:
        acc += np.sum(np.abs(j) ** 2, axis=1)
    return (acc / len(jacs)).reshape(shape)


def fim_trace_hard(sel: HardSelection, w: np.ndarray, sigma: float) -> float:
    """Fast trace for 0/1 diagonal selections: sum w over the selected grid."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    w = np.asarray(w)
    if w.shape != sel.layout.lengths:
        raise InvalidArgumentError("weight tensor does not match the selection layout")
    if any(c == 0 for c in sel.counts):
        return 0.0
    grid = np.ix_(*[np.asarray(ix, dtype=int) for ix in sel.indices])
    return (2.0 / sigma ** 2) * float(w[grid].sum())


@dataclass(frozen=True)
class CrbMatrix:
    matrix: np.ndarray
    jitter_added: float = 0.0

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def position_trace(self) -> float:
        """Trace of the (x, z) sub-block."""
        return float(np.trace(self.matrix[:2, :2]))


def crb(f: np.ndarray, jitter: float = 1e-10) -> CrbMatrix:
    """Inverse Fisher matrix, with diagonal jitter when badly conditioned."""
    f = np.asarray(f, dtype=float)
    if not np.allclose(f, f.T, atol=1e-9 * max(1.0, np.abs(f).max())):
        raise InvalidArgumentError("Fisher matrix must be symmetric")
    p = f.shape[0]
    added = 0.0
    work = f
    cond = np.linalg.cond(work)
    if not np.isfinite(cond) or cond > 1e12:
        added = jitter * float(np.trace(f)) / p
        work = f + added * np.eye(p)
        cond = np.linalg.cond(work)
        if not np.isfinite(cond) or cond > 1e15 or added <= 0:
            raise SingularFimError("Fisher matrix singular even after jitter")
    try:
        inv = np.linalg.inv(work)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularFimError(str(exc)) from exc
    if not np.all(np.isfinite(inv)):
        raise SingularFimError("non-finite CRB")
    return CrbMatrix(0.5 * (inv + inv.T), jitter_added=added)


def fim_flat(flat_indices, jac: np.ndarray, sigma: float) -> np.ndarray:
    """Fisher matrix for an unstructured selection of flat sample indices."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    j_sel = np.asarray(jac)[np.asarray(flat_indices, dtype=int), :]
    f = (2.0 / sigma ** 2) * np.real(j_sel.conj().T @ j_sel)
    return 0.5 * (f + f.T)


@dataclass(frozen=True)
class CrbSummary:
    traces: np.ndarray  # per included scatterer
    position_traces: np.ndarray
    excluded: int

    @property
    def mean_trace(self) -> float:
        return float(self.traces.mean())

    @property
    def mean_position_trace(self) -> float:
        return float(self.position_traces.mean())


def crb_summary(selection, dataset: Dataset, ctx: ModelContext,
                sigma: float, jitter: float = 1e-10,
                jacs: list[np.ndarray] | None = None) -> CrbSummary:
    """Per-scatterer CRB traces under a selection, singular cases excluded.

    `selection` may be a HardSelection (gather path), a StructuredSelector
    (general operator path), or a flat array of sample indices. Precomputed
    Jacobians can be passed via `jacs` to amortize the model evaluation
    across selections.
    """
    if len(dataset) == 0:
        raise InvalidArgumentError("dataset is empty")
    if isinstance(selection, HardSelection):
        hard = selection.to_selector()
        evaluate = lambda jac: fim(hard, jac, sigma)
    elif isinstance(selection, StructuredSelector):
        evaluate = lambda jac: fim(selection, jac, sigma)
    else:
        flat = np.asarray(selection, dtype=int)
        evaluate = lambda jac: fim_flat(flat, jac, sigma)
    if jacs is None:
        jacs = [jacobian(ctx.geom, ctx.pulse, ctx.freqs, s) for s in dataset.scatterers]
    traces, pos_traces, excluded = [], [], 0
    for jac in jacs:
        f = evaluate(jac)
        try:
            c = crb(f, jitter=jitter)
        except SingularFimError:
            excluded += 1
            continue
        traces.append(c.trace)
        pos_traces.append(c.position_trace)
    if not traces:
        raise EvaluationError("every scatterer produced a singular Fisher matrix")
    return CrbSummary(np.asarray(traces), np.asarray(pos_traces), excluded)
