"""Sparse localization over an ROI dictionary with complex FISTA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .model import ModelContext, forward
from .sampling import HardSelection


@dataclass(frozen=True)
class RoiGrid:
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        if x.size < 1 or z.size < 1:
            raise InvalidArgumentError("grid must be nonempty")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.z.size, self.x.size)

    @property
    def size(self) -> int:
        return self.x.size * self.z.size

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, z) coordinates, z-major to match image layout."""
        zz, xx = np.meshgrid(self.z, self.x, indexing="ij")
        return xx.reshape(-1), zz.reshape(-1)

    @classmethod
    def half_wavelength(cls, roi: tuple[float, float, float, float],
                        ctx: ModelContext) -> "RoiGrid":
        """Grid covering the ROI with pixel pitch of half a wavelength."""
        x_min, x_max, z_min, z_max = roi
        pitch = ctx.pulse.wavelength / 2.0
        nx = max(1, int(np.floor((x_max - x_min) / pitch)) + 1)
        nz = max(1, int(np.floor((z_max - z_min) / pitch)) + 1)
        return cls(x_min + pitch * np.arange(nx), z_min + pitch * np.arange(nz))


@dataclass(frozen=True)
class Dictionary:
    matrix: np.ndarray  # selected measurements x grid points, unit-norm columns
    norms: np.ndarray  # pre-normalization column norms
    grid: RoiGrid
    selection: HardSelection


@dataclass
class RecoveryResult:
    image: np.ndarray  # complex coefficients, shape (nz, nx)
    objective: np.ndarray  # per-iteration objective values
    step_size: float
    lambda_reg: float


def _flat_indices(sel: HardSelection) -> np.ndarray:
    """Flat indices of the selected grid in vectorization order."""
    n_t, n_r, n_f = sel.layout.lengths
    t = np.asarray(sel.indices[0], dtype=int)
    r = np.asarray(sel.indices[1], dtype=int)
    f = np.asarray(sel.indices[2], dtype=int)
    return ((t[:, None, None] * n_r + r[None, :, None]) * n_f
            + f[None, None, :]).reshape(-1)


def gather(b: np.ndarray, sel: HardSelection) -> np.ndarray:
    """Restrict a data tensor to the selected entries (vectorization order)."""
    return b.reshape(-1)[_flat_indices(sel)]


def _model_columns(grid: RoiGrid, ctx: ModelContext,
                   sel: HardSelection) -> np.ndarray:
    """Un-normalized unit-reflectivity model columns at the selected entries."""
    if sel.layout.lengths != ctx.lengths:
        raise InvalidArgumentError("selection does not match the model shape")
    sel_t = np.asarray(sel.indices[0], dtype=int)
    sel_r = np.asarray(sel.indices[1], dtype=int)
    sel_f = np.asarray(sel.indices[2], dtype=int)

    xs, zs = grid.points()
    tx = ctx.geom.tx_positions()[sel_t]
    rx = ctx.geom.rx_positions()[sel_r]
    c = ctx.pulse.sound_speed
    f = ctx.freqs.values[sel_f]
    env = ctx.pulse.envelope(f)

    # tau[e, g] per selected element, then phase over (t, r, f, g)
    tau_t = np.sqrt((xs[None, :] - tx[:, None]) ** 2 + zs[None, :] ** 2) / c
    tau_r = np.sqrt((xs[None, :] - rx[:, None]) ** 2 + zs[None, :] ** 2) / c
    tau_sum = tau_t[:, None, :] + tau_r[None, :, :]
    phase = -2j * np.pi * f[None, None, :, None] * tau_sum[:, :, None, :]
    cols = env[None, None, :, None] * np.exp(phase)
    return cols.reshape(sel.m_product, grid.size)


def _normalize(a: np.ndarray, grid: RoiGrid, sel: HardSelection) -> Dictionary:
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise InvalidArgumentError("dictionary column with zero norm")
    return Dictionary(a / norms[None, :], norms, grid, sel)


def build_dictionary(grid: RoiGrid, ctx: ModelContext,
                     sel: HardSelection) -> Dictionary:
    """Dictionary restricted to a structured selection: gather, then
    normalize each column to unit norm."""
    return _normalize(_model_columns(grid, ctx, sel), grid, sel)


def full_selection(ctx: ModelContext) -> HardSelection:
    from .sampling import AxisLayout
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    return HardSelection(layout, tuple(tuple(range(n)) for n in ctx.lengths))


def build_dictionary_flat(grid: RoiGrid, ctx: ModelContext,
                          flat_indices) -> Dictionary:
    """Dictionary restricted to an unstructured set of flat sample indices."""
    sel = full_selection(ctx)
    a = _model_columns(grid, ctx, sel)[np.asarray(flat_indices, dtype=int), :]
    return _normalize(a, grid, sel)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Complex shrinkage: scale magnitudes toward zero, keep phases."""
    v = np.asarray(v)
    mag = np.abs(v)
    factor = np.where(mag > t, 1.0 - t / np.where(mag > t, mag, 1.0), 0.0)
    return v * factor


def power_iteration_lipschitz(a: np.ndarray, iters: int = 50,
                              tol: float = 1e-8, inflate: float = 1.01,
                              seed: int = 0) -> float:
    """Largest eigenvalue of A^H A via power iteration, slightly inflated."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[1]) + 1j * rng.standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(iters):
        y = a.conj().T @ (a @ x)
        lam = float(np.real(np.vdot(x, y)))
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return inflate * max(lam, np.finfo(float).tiny)
        x = y / nrm
        if abs(lam - prev) <= tol * max(1.0, abs(lam)):
            prev = lam
            break
        prev = lam
    return inflate * prev


def fista(dictionary: Dictionary, y_s: np.ndarray, lambda_reg: float | None = None,
          iters: int = 2000) -> RecoveryResult:
    """l1-regularized least squares by accelerated proximal gradient.

    Minimizes 0.5*||A x - y||^2 + lambda*||x||_1 with step 1/L from power
    iteration, the standard momentum sequence, and x0 = 0. When lambda_reg is
    None it defaults to 0.05 * ||A^H y||_inf.
    """
    if iters < 1:
        raise InvalidArgumentError("iters must be >= 1")
    a = dictionary.matrix
    y_s = np.asarray(y_s)
    if y_s.shape != (a.shape[0],):
        raise InvalidArgumentError("measurement length does not match the dictionary")
    if lambda_reg is None:
        lambda_reg = 0.05 * float(np.abs(a.conj().T @ y_s).max())
    if lambda_reg < 0:
        raise InvalidArgumentError("lambda_reg must be nonnegative")

    lip = power_iteration_lipschitz(a)
    step = 1.0 / lip
    x = np.zeros(a.shape[1], dtype=complex)
    v = x.copy()
    t_k = 1.0
    objective = []
    for it in range(iters):
        grad = a.conj().T @ (a @ v - y_s)
        x_new = soft_threshold(v - step * grad, lambda_reg * step)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        v = x_new + ((t_k - 1.0) / t_next) * (x_new - x)
        x, t_k = x_new, t_next
        resid = a @ x - y_s
        obj = 0.5 * float(np.real(np.vdot(resid, resid))) + lambda_reg * float(np.abs(x).sum())
        if not np.isfinite(obj):
            raise NumericalFailureError("non-finite FISTA iterate", step=it)
        objective.append(obj)

    image = x.reshape(dictionary.grid.shape)
    return RecoveryResult(image=image, objective=np.asarray(objective),
                          step_size=step, lambda_reg=float(lambda_reg))


def fixed_point_residual(dictionary: Dictionary, result: RecoveryResult,
                         y_s: np.ndarray) -> float:
    """Max-abs violation of x = shrink(x - (1/L) A^H (A x - y), lambda/L)."""
    a = dictionary.matrix
    x = result.image.reshape(-1)
    step = result.step_size
    prox = soft_threshold(x - step * (a.conj().T @ (a @ x - y_s)),
                          result.lambda_reg * step)
    return float(np.abs(prox - x).max())


def metrics(result_image: np.ndarray, truth_image: np.ndarray,
            zero_threshold_rel: float = 1e-3) -> tuple[float, int]:
    """Max-normalized magnitude MSE and the nonzero count of the recovery."""
    r = np.abs(np.asarray(result_image))
    t = np.abs(np.asarray(truth_image))
    if r.shape != t.shape:
        raise InvalidArgumentError("image shapes differ")
    r_n = r / r.max() if r.max() > 0 else r
    t_n = t / t.max() if t.max() > 0 else t
    eps = float(np.mean((r_n - t_n) ** 2))
    l0 = int(np.count_nonzero(r_n > zero_threshold_rel * (r_n.max() if r_n.max() > 0 else 1.0)))
    return eps, l0


def truth_image(grid: RoiGrid, scatterers) -> np.ndarray:
    """Complex amplitude of each scatterer at its nearest grid node."""
    img = np.zeros(grid.shape, dtype=complex)
    for s in scatterers:
        ix = int(np.argmin(np.abs(grid.x - s.x)))
        iz = int(np.argmin(np.abs(grid.z - s.z)))
        img[iz, ix] += s.a * np.exp(1j * s.phi)
    return img


def measure(ctx: ModelContext, scatterers, sel: HardSelection) -> np.ndarray:
    """Noiseless selected measurement of a scatterer collection."""
    total = None
    for s in scatterers:
        b = forward(ctx.geom, ctx.pulse, ctx.freqs, s)
        total = b if total is None else total + b
    return gather(total, sel)
