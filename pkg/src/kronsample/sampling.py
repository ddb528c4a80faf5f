"""Differentiable sampling-without-replacement primitives.

A single logits vector of length N_sigma (the concatenation of one block per
data axis) parameterizes which samples to keep. Gumbel perturbation followed
by iterated masked softmax yields a row-stochastic auxiliary matrix whose
Gram matrix exposes per-axis selector blocks on its diagonal; the unknown
draw-order permutation cancels in the Gram product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class AxisLayout:
    """Ordered axis lengths plus concatenation offsets into the joint logits."""

    lengths: tuple[int, ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.lengths) < 1 or any(n < 1 for n in self.lengths):
            raise InvalidArgumentError("axis lengths must all be >= 1")
        if self.names is not None and len(self.names) != len(self.lengths):
            raise InvalidArgumentError("one name per axis required")
        if self.names is None:
            object.__setattr__(self, "names",
                               tuple(f"axis{i}" for i in range(len(self.lengths))))

    @property
    def q(self) -> int:
        return len(self.lengths)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.cumsum((0,) + self.lengths[:-1]))

    @property
    def total(self) -> int:
        return int(sum(self.lengths))

    @property
    def n_product(self) -> int:
        return int(np.prod(self.lengths))

    def axis_of(self, index: int) -> int:
        """Axis that a joint-logits index belongs to."""
        if not 0 <= index < self.total:
            raise InvalidArgumentError(f"index {index} out of range")
        return int(np.searchsorted(np.asarray(self.offsets), index, side="right") - 1)


@dataclass(frozen=True)
class StructuredSelector:
    """Per-axis symmetric blocks defining a Kronecker selection operator."""

    blocks: tuple[np.ndarray, ...]

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    @classmethod
    def identity(cls, lengths) -> "StructuredSelector":
        return cls(tuple(np.eye(n) for n in lengths))


@dataclass(frozen=True)
class HardSelection:
    """Sorted per-axis index sets; the deliverable of the whole pipeline."""

    layout: AxisLayout
    indices: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.indices) != self.layout.q:
            raise InvalidArgumentError("one index set per axis required")
        for n, idx in zip(self.layout.lengths, self.indices):
            arr = np.asarray(idx)
            if arr.size == 0:
                continue
            if len(set(idx)) != len(idx) or arr.min() < 0 or arr.max() >= n:
                raise InvalidArgumentError("indices must be unique and in range")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(i) for i in self.indices)

    @property
    def budget(self) -> int:
        return sum(self.counts)

    @property
    def m_product(self) -> int:
        return int(np.prod(self.counts))

    def to_selector(self) -> StructuredSelector:
        """Hard 0/1 diagonal blocks equivalent to this selection."""
        blocks = []
        for n, idx in zip(self.layout.lengths, self.indices):
            d = np.zeros(n)
            d[list(idx)] = 1.0
            blocks.append(np.diag(d))
        return StructuredSelector(tuple(blocks))


def write_selection(path, sel: HardSelection) -> None:
    with open(path, "w") as fh:
        fh.write(format_selection(sel))


def format_selection(sel: HardSelection) -> str:
    lines = []
    for name, idx in zip(sel.layout.names, sel.indices):
        lines.append(f"axis {name}: " + " ".join(str(i) for i in idx))
    return "\n".join(lines) + "\n"


def read_selection(path, layout: AxisLayout) -> HardSelection:
    indices = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if not line.startswith("axis "):
                raise InvalidArgumentError(f"unrecognized selection line: {line!r}")
            _, rest = line.split(" ", 1)
            _, values = rest.split(":", 1)
            indices.append(tuple(int(tok) for tok in values.split()))
    if len(indices) != layout.q:
        raise InvalidArgumentError("selection file does not match the layout")
    return HardSelection(layout, tuple(indices))


def gumbel_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Gumbel(0, 1) draws, g = -ln(-ln u)."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    u = rng.uniform(size=n)
    return -np.log(-np.log(u))


def topk_order(phi: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m largest entries in decreasing-value order.

    Ties are broken toward the lower index so results are deterministic.
    """
    phi = np.asarray(phi, dtype=float)
    if not 1 <= m <= phi.size:
        raise InvalidArgumentError(f"budget {m} out of range for {phi.size} logits")
    return np.argsort(-phi, kind="stable")[:m]


def build_mask(order, n: int) -> np.ndarray:
    """Mask matrix: row i carries -inf at the positions of the first i winners."""
    order = np.asarray(order, dtype=int)
    if len(set(order.tolist())) != order.size:
        raise InvalidArgumentError("winner indices must be unique")
    if order.size and (order.min() < 0 or order.max() >= n):
        raise InvalidArgumentError("winner index out of range")
    w = np.zeros((order.size, n))
    for i in range(1, order.size):
        w[i, order[:i]] = -np.inf
    return w


def soft_aux(phi: np.ndarray, w: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise softmax((phi + W[i]) / tau) with exact zeros at masked entries."""
    if tau <= 0:
        raise InvalidArgumentError("temperature must be positive")
    z = (np.asarray(phi, dtype=float)[None, :] + w) / tau
    finite = np.isfinite(z)
    if not finite.any(axis=1).all():
        raise InvalidArgumentError("a row has every entry masked")
    zmax = np.max(np.where(finite, z, -np.inf), axis=1, keepdims=True)
    e = np.where(finite, np.exp(z - zmax), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def gram(phi_mat: np.ndarray) -> np.ndarray:
    """Phi^T Phi; cancels the draw-order permutation by construction.

    Entries are accumulated with correctly rounded summation so the result
    is bit-identical under any row permutation, not just equal in exact
    arithmetic. The matrices involved are tiny (M_sigma rows), so the
    python-level loop is cheap.
    """
    phi = np.asarray(phi_mat, dtype=float)
    if phi.ndim != 2:
        raise InvalidArgumentError("auxiliary matrix must be 2-d")
    m, n = phi.shape
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            s = math.fsum(phi[k, i] * phi[k, j] for k in range(m))
            out[i, j] = out[j, i] = s
    return out


def extract_blocks(psi: np.ndarray, layout: AxisLayout) -> StructuredSelector:
    """Diagonal blocks of the Gram matrix, one per axis."""
    psi = np.asarray(psi)
    if psi.shape != (layout.total, layout.total):
        raise InvalidArgumentError("Gram matrix does not match the layout")
    blocks = []
    for o, n in zip(layout.offsets, layout.lengths):
        blocks.append(psi[o:o + n, o:o + n].copy())
    return StructuredSelector(tuple(blocks))


def allocation(order, layout: AxisLayout) -> tuple[int, ...]:
    """How many winners fall into each axis."""
    order = np.asarray(order, dtype=int)
    edges = np.asarray(layout.offsets + (layout.total,))
    counts = np.histogram(order, bins=edges)[0]
    return tuple(int(c) for c in counts)


def harden(phi: np.ndarray, layout: AxisLayout, m: int,
           min_per_axis: int = 1) -> HardSelection:
    """Noiseless top-K extraction with a deterministic per-axis repair.

    If an axis ends up with fewer than `min_per_axis` winners, the
    lowest-ranked winners from axes holding surplus are swapped for the
    highest-logit unselected indices of the deficient axis.
    """
    phi = np.asarray(phi, dtype=float)
    if m < layout.q * min_per_axis:
        raise InvalidArgumentError("budget too small for the per-axis minimum")
    order = list(topk_order(phi, m))
    axis_of = [layout.axis_of(i) for i in order]

    for ax in range(layout.q):
        o, n = layout.offsets[ax], layout.lengths[ax]
        while axis_of.count(ax) < min_per_axis:
            # Victim: the lowest-ranked winner on an axis that can spare one.
            victim_pos = None
            for pos in range(len(order) - 1, -1, -1):
                v_ax = axis_of[pos]
                if v_ax != ax and axis_of.count(v_ax) > min_per_axis:
                    victim_pos = pos
                    break
            if victim_pos is None:
                raise InvalidArgumentError("repair infeasible")  # pragma: no cover
            selected = {i for i in order if layout.axis_of(i) == ax}
            candidates = [o + k for k in range(n) if o + k not in selected]
            best = max(candidates, key=lambda i: (phi[i], -i))
            order[victim_pos] = best
            axis_of[victim_pos] = ax

    per_axis: list[list[int]] = [[] for _ in range(layout.q)]
    for i in order:
        ax = layout.axis_of(i)
        per_axis[ax].append(int(i) - layout.offsets[ax])
    return HardSelection(layout, tuple(tuple(sorted(ix)) for ix in per_axis))


def regularizer(psi: np.ndarray, d: np.ndarray | None = None) -> float:
    """Trace(D Psi) with diagonal priority weights D (identity by default)."""
    psi = np.asarray(psi)
    diag = np.diagonal(psi)
    if d is None:
        return float(diag.sum())
    d = np.asarray(d, dtype=float)
    if d.shape != diag.shape:
        raise InvalidArgumentError("priority weights do not match the Gram matrix")
    if np.any(d < 0):
        raise InvalidArgumentError("priority weights must be nonnegative")
    return float(np.dot(d, diag))
