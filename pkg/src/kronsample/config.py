"""Experiment configuration: an INI-style file with sections.

The format is plain configparser INI (``#``/``;`` comments allowed). All
fields have desk-scale defaults, so an empty file is a valid configuration.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .model import ArrayGeometry, Dataset, FrequencyGrid, ModelContext, PulseSpec, generate_dataset
from .train import TrainConfig

SWEEP_METHODS = ("scosara", "uniform", "greedy", "jdps", "dps_topk")


@dataclass
class ExperimentConfig:
    # model
    tx: int = 8
    rx: int = 8
    freq_count: int = 16
    freq_span: float = 0.9e6  # total width of the measured band, Hz
    center_frequency: float = 5e6
    fractional_bandwidth: float = 0.6
    sound_speed: float = 1540.0
    pitch: float = 3e-4
    roi: tuple[float, float, float, float] = (-4e-3, 4e-3, 10e-3, 18e-3)
    amplitude_range: tuple[float, float] = (0.5, 1.5)
    # train
    budget: int = 12
    steps: int = 2000
    batch_size: int = 8
    learning_rate: float = 0.05
    tau_start: float = 1.0
    tau_end: float = 0.1
    reg_weight: float = 1.0
    sigma: float = 0.1
    mode: str = "straight_through"
    min_per_axis: int = 1
    train_count: int = 64
    # sweep
    budgets: tuple[int, ...] = (6, 8, 10, 12, 14, 16, 18, 20, 22, 24)
    methods: tuple[str, ...] = ("scosara", "uniform", "greedy")
    eval_count: int = 256
    dps_topk_budget: str = "product"  # or "sum"
    # recover
    fista_iters: int = 2000
    recover_noise: float = 0.0
    zero_threshold_rel: float = 1e-3
    separations: tuple[int, ...] = (2, 3, 4)
    # experiment
    seed: int = 0

    def validate(self) -> None:
        if any(b <= a for a, b in zip(self.budgets, self.budgets[1:])):
            raise InvalidArgumentError("sweep budgets must be strictly increasing")
        for m in self.methods:
            if m not in SWEEP_METHODS:
                raise InvalidArgumentError(f"unknown method {m!r}")
        if self.dps_topk_budget not in ("product", "sum"):
            raise InvalidArgumentError("dps_topk_budget must be 'product' or 'sum'")

    def model_context(self) -> ModelContext:
        pulse = PulseSpec(self.center_frequency, self.fractional_bandwidth,
                          self.sound_speed)
        return ModelContext(
            geom=ArrayGeometry(self.tx, self.rx, self.pitch),
            pulse=pulse,
            freqs=FrequencyGrid.centered(pulse, self.freq_count,
                                         span=self.freq_span),
        )

    def train_config(self, budget: int | None = None,
                     seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            budget=self.budget if budget is None else budget,
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            tau_start=self.tau_start,
            tau_end=self.tau_end,
            reg_weight=self.reg_weight,
            sigma=self.sigma,
            seed=self.seed if seed is None else seed,
            mode=self.mode,
            min_per_axis=self.min_per_axis,
        )

    def train_dataset(self) -> Dataset:
        return generate_dataset(self.roi, self.train_count, self.amplitude_range,
                                derived_seed(self.seed, "train-data"))

    def eval_dataset(self) -> Dataset:
        return generate_dataset(self.roi, self.eval_count, self.amplitude_range,
                                derived_seed(self.seed, "eval-data"))


def derived_seed(seed: int, *tokens) -> int:
    """Deterministic child seed from (seed, tokens)."""
    import zlib
    parts = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tokens]
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def _tuple_of(cast, text: str) -> tuple:
    return tuple(cast(tok) for tok in text.replace(",", " ").split())


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    return parse_config(parser)


def loads_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    return parse_config(parser)


def parse_config(parser: configparser.ConfigParser) -> ExperimentConfig:
    cfg = ExperimentConfig()

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            return cast(raw)
        return default

    m = "model"
    cfg.tx = get(m, "tx", int, cfg.tx)
    cfg.rx = get(m, "rx", int, cfg.rx)
    cfg.freq_count = get(m, "freqs", int, cfg.freq_count)
    cfg.freq_span = get(m, "freq_span", float, cfg.freq_span)
    cfg.center_frequency = get(m, "center_frequency", float, cfg.center_frequency)
    cfg.fractional_bandwidth = get(m, "fractional_bandwidth", float, cfg.fractional_bandwidth)
    cfg.sound_speed = get(m, "sound_speed", float, cfg.sound_speed)
    cfg.pitch = get(m, "pitch", float, cfg.pitch)
    cfg.roi = (
        get(m, "roi_x_min", float, cfg.roi[0]),
        get(m, "roi_x_max", float, cfg.roi[1]),
        get(m, "roi_z_min", float, cfg.roi[2]),
        get(m, "roi_z_max", float, cfg.roi[3]),
    )
    cfg.amplitude_range = (
        get(m, "amp_min", float, cfg.amplitude_range[0]),
        get(m, "amp_max", float, cfg.amplitude_range[1]),
    )

    t = "train"
    cfg.budget = get(t, "budget", int, cfg.budget)
    cfg.steps = get(t, "steps", int, cfg.steps)
    cfg.batch_size = get(t, "batch_size", int, cfg.batch_size)
    cfg.learning_rate = get(t, "learning_rate", float, cfg.learning_rate)
    cfg.tau_start = get(t, "tau_start", float, cfg.tau_start)
    cfg.tau_end = get(t, "tau_end", float, cfg.tau_end)
    cfg.reg_weight = get(t, "reg_weight", float, cfg.reg_weight)
    cfg.sigma = get(t, "sigma", float, cfg.sigma)
    cfg.mode = get(t, "mode", str, cfg.mode)
    cfg.min_per_axis = get(t, "min_per_axis", int, cfg.min_per_axis)
    cfg.train_count = get(t, "train_count", int, cfg.train_count)

    s = "sweep"
    cfg.budgets = get(s, "budgets", lambda x: _tuple_of(int, x), cfg.budgets)
    cfg.methods = get(s, "methods", lambda x: _tuple_of(str, x), cfg.methods)
    cfg.eval_count = get(s, "eval_count", int, cfg.eval_count)
    cfg.dps_topk_budget = get(s, "dps_topk_budget", str, cfg.dps_topk_budget)

    r = "recover"
    cfg.fista_iters = get(r, "fista_iters", int, cfg.fista_iters)
    cfg.recover_noise = get(r, "noise", float, cfg.recover_noise)
    cfg.zero_threshold_rel = get(r, "zero_threshold_rel", float, cfg.zero_threshold_rel)
    cfg.separations = get(r, "separations", lambda x: _tuple_of(int, x), cfg.separations)

    cfg.seed = get("experiment", "seed", int, cfg.seed)
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize back to the INI dialect accepted by load_config."""
    parser = configparser.ConfigParser()
    parser["model"] = {
        "tx": str(cfg.tx), "rx": str(cfg.rx), "freqs": str(cfg.freq_count),
        "freq_span": repr(cfg.freq_span),
        "center_frequency": repr(cfg.center_frequency),
        "fractional_bandwidth": repr(cfg.fractional_bandwidth),
        "sound_speed": repr(cfg.sound_speed), "pitch": repr(cfg.pitch),
        "roi_x_min": repr(cfg.roi[0]), "roi_x_max": repr(cfg.roi[1]),
        "roi_z_min": repr(cfg.roi[2]), "roi_z_max": repr(cfg.roi[3]),
        "amp_min": repr(cfg.amplitude_range[0]), "amp_max": repr(cfg.amplitude_range[1]),
    }
    parser["train"] = {
        "budget": str(cfg.budget), "steps": str(cfg.steps),
        "batch_size": str(cfg.batch_size), "learning_rate": repr(cfg.learning_rate),
        "tau_start": repr(cfg.tau_start), "tau_end": repr(cfg.tau_end),
        "reg_weight": repr(cfg.reg_weight), "sigma": repr(cfg.sigma),
        "mode": cfg.mode, "min_per_axis": str(cfg.min_per_axis),
        "train_count": str(cfg.train_count),
    }
    parser["sweep"] = {
        "budgets": " ".join(str(b) for b in cfg.budgets),
        "methods": " ".join(cfg.methods),
        "eval_count": str(cfg.eval_count),
        "dps_topk_budget": cfg.dps_topk_budget,
    }
    parser["recover"] = {
        "fista_iters": str(cfg.fista_iters),
        "noise": repr(cfg.recover_noise),
        "zero_threshold_rel": repr(cfg.zero_threshold_rel),
        "separations": " ".join(str(s) for s in cfg.separations),
    }
    parser["experiment"] = {"seed": str(cfg.seed)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
