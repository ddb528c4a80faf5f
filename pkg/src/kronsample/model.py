"""Frequency-domain full-matrix-capture ultrasound forward model.

A single point scatterer with parameters (x, z, a, phi) is observed by a
linear array of transmitters and receivers on the z = 0 line. The noiseless
measurement for transmitter t, receiver r and frequency f is

    b[t, r, f] = a * exp(j*phi) * P(f) * exp(-j*2*pi*f*(tau_t + tau_r))

with tau_e = sqrt((x - x_e)^2 + z^2) / c the one-way travel time to element e
and P a Gaussian spectral envelope with unit peak at the center frequency.
The tensor is vectorized with flat index n = (t*N_R + r)*N_F + f, so the
per-axis selector order is transmitters (x) receivers (x) frequencies.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularGeometryError

PARAM_NAMES = ("x", "z", "a", "phi")
P_PARAMS = len(PARAM_NAMES)

# FWHM of a Gaussian = 2*sqrt(2*ln 2) * std
_FWHM_TO_STD = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear aperture shared by transmit and receive elements."""

    element_count_tx: int
    element_count_rx: int
    pitch: float  # meters

    def __post_init__(self):
        if self.element_count_tx < 1 or self.element_count_rx < 1:
            raise InvalidArgumentError("element counts must be >= 1")
        if self.pitch <= 0:
            raise InvalidArgumentError("pitch must be positive")

    def tx_positions(self) -> np.ndarray:
        n = self.element_count_tx
        return (np.arange(n) - (n - 1) / 2.0) * self.pitch

    def rx_positions(self) -> np.ndarray:
        n = self.element_count_rx
        return (np.arange(n) - (n - 1) / 2.0) * self.pitch


@dataclass(frozen=True)
class PulseSpec:
    center_frequency: float  # Hz
    fractional_bandwidth: float  # FWHM of the envelope as a fraction of f_c
    sound_speed: float  # m/s

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise InvalidArgumentError("center_frequency must be positive")
        if not 0 < self.fractional_bandwidth < 2:
            raise InvalidArgumentError("fractional_bandwidth must be in (0, 2)")
        if self.sound_speed <= 0:
            raise InvalidArgumentError("sound_speed must be positive")

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.center_frequency

    @property
    def envelope_std(self) -> float:
        return self.fractional_bandwidth * self.center_frequency * _FWHM_TO_STD

    def envelope(self, freqs: np.ndarray) -> np.ndarray:
        """Gaussian spectral envelope, unit peak at the center frequency."""
        d = (np.asarray(freqs, dtype=float) - self.center_frequency) / self.envelope_std
        return np.exp(-0.5 * d * d)


@dataclass(frozen=True)
class FrequencyGrid:
    values: np.ndarray  # Hz, strictly increasing

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 1:
            raise InvalidArgumentError("frequency grid must be a nonempty 1-d array")
        if np.any(v <= 0):
            raise InvalidArgumentError("frequencies must be positive")
        if v.size > 1 and np.any(np.diff(v) <= 0):
            raise InvalidArgumentError("frequencies must be strictly increasing")

    @property
    def count(self) -> int:
        return self.values.size

    @classmethod
    def centered(cls, pulse: PulseSpec, count: int,
                 span: float | None = None) -> "FrequencyGrid":
        """Uniform band of `count` frequencies centered on the pulse.

        `span` is the total width in Hz; by default the grid covers one
        full fractional bandwidth.
        """
        if count < 1:
            raise InvalidArgumentError("count must be >= 1")
        if span is None:
            span = pulse.fractional_bandwidth * pulse.center_frequency
        if span <= 0:
            raise InvalidArgumentError("span must be positive")
        if count == 1:
            return cls(np.array([pulse.center_frequency]))
        return cls(np.linspace(pulse.center_frequency - span / 2.0,
                               pulse.center_frequency + span / 2.0, count))


@dataclass(frozen=True)
class Scatterer:
    x: float
    z: float
    a: float
    phi: float

    def __post_init__(self):
        if self.z <= 0:
            raise InvalidArgumentError("scatterer must lie in front of the array (z > 0)")
        if self.a < 0:
            raise InvalidArgumentError("reflectivity must be nonnegative")


@dataclass(frozen=True)
class ModelContext:
    """Bundles the acquisition description used throughout the pipeline."""

    geom: ArrayGeometry
    pulse: PulseSpec
    freqs: FrequencyGrid

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.geom.element_count_tx, self.geom.element_count_rx,
                self.freqs.count)

    @property
    def lengths(self) -> tuple[int, int, int]:
        return self.shape

    @property
    def n_total(self) -> int:
        t, r, f = self.shape
        return t * r * f


@dataclass(frozen=True)
class Dataset:
    scatterers: tuple[Scatterer, ...]
    roi: tuple[float, float, float, float]  # x_min, x_max, z_min, z_max
    amplitude_range: tuple[float, float]
    seed: int

    def __len__(self) -> int:
        return len(self.scatterers)


def _travel_times(positions: np.ndarray, s: Scatterer, c: float) -> tuple[np.ndarray, np.ndarray]:
    """One-way travel times and element distances, raising on coincidence."""
    d = np.sqrt((s.x - positions) ** 2 + s.z ** 2)
    return d / c, d


def forward(geom: ArrayGeometry, pulse: PulseSpec, freqs: FrequencyGrid,
            s: Scatterer) -> np.ndarray:
    """Noiseless data tensor of shape (N_T, N_R, N_F)."""
    tau_t, _ = _travel_times(geom.tx_positions(), s, pulse.sound_speed)
    tau_r, _ = _travel_times(geom.rx_positions(), s, pulse.sound_speed)
    f = freqs.values
    env = pulse.envelope(f)
    # phase[t, r, f] = -2*pi*f*(tau_t + tau_r)
    tau_sum = tau_t[:, None] + tau_r[None, :]
    phase = -2.0 * np.pi * tau_sum[:, :, None] * f[None, None, :]
    return (s.a * np.exp(1j * s.phi)) * env[None, None, :] * np.exp(1j * phase)


def jacobian(geom: ArrayGeometry, pulse: PulseSpec, freqs: FrequencyGrid,
             s: Scatterer) -> np.ndarray:
    """Analytic derivatives of vec(forward) w.r.t. (x, z, a, phi).

    Returns a complex matrix of shape (N_T*N_R*N_F, 4). The reflectivity
    column is computed from the amplitude-independent factor so that a = 0
    is not singular.
    """
    c = pulse.sound_speed
    tau_t, d_t = _travel_times(geom.tx_positions(), s, c)
    tau_r, d_r = _travel_times(geom.rx_positions(), s, c)
    if np.any(d_t == 0) or np.any(d_r == 0):
        raise SingularGeometryError("scatterer coincides with an array element")

    f = freqs.values
    env = pulse.envelope(f)
    tau_sum = tau_t[:, None] + tau_r[None, :]
    carrier = env[None, None, :] * np.exp(
        -2j * np.pi * tau_sum[:, :, None] * f[None, None, :])
    b = (s.a * np.exp(1j * s.phi)) * carrier

    # d tau_e / dx = (x - x_e) / (c * d_e); d tau_e / dz = z / (c * d_e)
    dtau_dx = (s.x - geom.tx_positions()) / (c * d_t), (s.x - geom.rx_positions()) / (c * d_r)
    dtau_dz = s.z / (c * d_t), s.z / (c * d_r)

    sum_dx = dtau_dx[0][:, None] + dtau_dx[1][None, :]
    sum_dz = dtau_dz[0][:, None] + dtau_dz[1][None, :]
    omega = -2j * np.pi * f[None, None, :]

    db_dx = b * omega * sum_dx[:, :, None]
    db_dz = b * omega * sum_dz[:, :, None]
    db_da = np.exp(1j * s.phi) * carrier
    db_dphi = 1j * b

    n = b.size
    jac = np.empty((n, P_PARAMS), dtype=complex)
    jac[:, 0] = db_dx.reshape(n)
    jac[:, 1] = db_dz.reshape(n)
    jac[:, 2] = db_da.reshape(n)
    jac[:, 3] = db_dphi.reshape(n)
    return jac


def add_noise(b: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric AWGN with per-entry variance sigma^2."""
    if sigma < 0:
        raise InvalidArgumentError("sigma must be nonnegative")
    if sigma == 0:
        return b.copy()
    scale = sigma / np.sqrt(2.0)
    noise = rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)
    return b + scale * noise


def generate_dataset(roi: tuple[float, float, float, float], count: int,
                     amplitude_range: tuple[float, float], seed: int) -> Dataset:
    """Scatterers uniform over the ROI with uniform reflectivity and phase.

    Each scatterer uses its own (seed, index)-derived stream so that the
    dataset is reproducible regardless of how generation is parallelized.
    """
    x_min, x_max, z_min, z_max = roi
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    if x_max <= x_min or z_max <= z_min or z_min <= 0:
        raise InvalidArgumentError("ROI is empty or behind the array")
    lo, hi = amplitude_range
    if lo < 0 or hi < lo:
        raise InvalidArgumentError("invalid amplitude range")

    scatterers = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        scatterers.append(Scatterer(
            x=rng.uniform(x_min, x_max),
            z=rng.uniform(z_min, z_max),
            a=rng.uniform(lo, hi),
            phi=rng.uniform(0.0, 2.0 * np.pi),
        ))
    return Dataset(tuple(scatterers), roi, amplitude_range, seed)


def export_tensor(path, b: np.ndarray) -> None:
    """Write a data tensor as little-endian binary.

    Layout: three int64 shape values, then float64 (re, im) pairs in
    vectorization order.
    """
    b = np.asarray(b)
    if b.ndim != 3:
        raise InvalidArgumentError("expected a 3-d tensor")
    flat = b.reshape(-1)
    inter = np.empty(2 * flat.size, dtype="<f8")
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3q", *b.shape))
        fh.write(inter.tobytes())


def import_tensor(path) -> np.ndarray:
    """Inverse of :func:`export_tensor`."""
    with open(path, "rb") as fh:
        shape = struct.unpack("<3q", fh.read(24))
        inter = np.frombuffer(fh.read(), dtype="<f8")
    flat = inter[0::2] + 1j * inter[1::2]
    return flat.reshape(shape)
