"""Experiment orchestration: training runs, CRB sweeps, recovery benchmarks,
run manifests, and the CSV/SVG emission behind the CLI."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import baselines, recovery
from .config import ExperimentConfig, derived_seed, dump_config
from .errors import EvaluationError, InvalidArgumentError
from .fim import crb_summary, weight_tensor
from .model import add_noise, jacobian
from .sampling import AxisLayout, HardSelection, read_selection, write_selection
from .train import TrainReport, train as train_logits, write_report


def _sci(x: float) -> str:
    return format(float(x), ".17e")


class RunManifest:
    """Records seeds, config hash and per-stage outputs; written before a
    stage runs and finalized afterwards."""

    def __init__(self, out_dir: Path, stage: str, cfg: ExperimentConfig):
        self.path = out_dir / f"manifest_{stage}.json"
        self.data = {
            "stage": stage,
            "config_sha256": hashlib.sha256(dump_config(cfg).encode()).hexdigest(),
            "seed": cfg.seed,
            "tool_version": _version(),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "finished": None,
            "status": "running",
            "files": [],
        }
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2) + "\n")

    def add(self, path: Path):
        self.data["files"].append(path.name)
        self._write()

    def finalize(self):
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.data["status"] = "done"
        self._write()


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version
    try:
        return version("kronsample")
    except PackageNotFoundError:  # pragma: no cover
        return "unknown"


def run_train(cfg: ExperimentConfig, out_dir: Path) -> TrainReport:
    """Train the structured selector and write the report plus selection."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out_dir, "train", cfg)
    ctx = cfg.model_context()
    dataset = cfg.train_dataset()
    tcfg = cfg.train_config(seed=derived_seed(cfg.seed, "train"))
    report = train_logits(tcfg, ctx, dataset)

    report_path = out_dir / "train_report.txt"
    write_report(report_path, report)
    manifest.add(report_path)
    sel_path = out_dir / "selection_scosara.txt"
    write_selection(sel_path, report.selection)
    manifest.add(sel_path)
    manifest.finalize()
    return report


def _selection_for(method: str, budget: int, cfg: ExperimentConfig, ctx,
                   train_jacs, dataset, layout: AxisLayout, scosara_alloc):
    """Returns (selection object, compression factor). Flat baselines return
    index arrays instead of HardSelection."""
    n_pi = layout.n_product
    seed = derived_seed(cfg.seed, method, budget)
    if method == "scosara":
        tcfg = cfg.train_config(budget=budget, seed=seed)
        report = train_logits(tcfg, ctx, dataset)
        sel = report.selection
    elif method == "uniform":
        sel = baselines.uniform_selection(scosara_alloc, layout)
    elif method == "greedy":
        w = weight_tensor(train_jacs, layout.lengths)
        sel, _ = baselines.greedy_selection(w, budget, layout,
                                            cfg.min_per_axis, cfg.sigma)
    elif method == "jdps":
        tcfg = cfg.train_config(budget=budget, seed=seed)
        sel = baselines.jdps_train(tcfg, scosara_alloc, ctx, dataset)
    elif method == "dps_topk":
        if cfg.dps_topk_budget == "product":
            m_flat = int(np.prod(scosara_alloc))
        else:
            m_flat = budget
        tcfg = cfg.train_config(budget=budget, seed=seed)
        flat = baselines.dps_topk_train(tcfg, m_flat, ctx, dataset)
        return flat, m_flat / n_pi
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    return sel, sel.m_product / n_pi


def run_sweep(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """CRB-vs-budget sweep over the configured methods.

    The learned selector runs first at each budget; its allocation is reused
    for the allocation-constrained baselines.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out_dir, "sweep", cfg)
    ctx = cfg.model_context()
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    train_ds = cfg.train_dataset()
    eval_ds = cfg.eval_dataset()
    train_jacs = [jacobian(ctx.geom, ctx.pulse, ctx.freqs, s)
                  for s in train_ds.scatterers]
    eval_jacs = [jacobian(ctx.geom, ctx.pulse, ctx.freqs, s)
                 for s in eval_ds.scatterers]

    methods = list(cfg.methods)
    ordered = [m for m in ("scosara",) if m in methods]
    ordered += [m for m in methods if m != "scosara"]
    needs_alloc = any(m in methods for m in ("uniform", "jdps", "dps_topk"))

    rows = []
    for budget in cfg.budgets:
        if not layout.q * cfg.min_per_axis <= budget <= layout.total:
            print(f"warning: skipping infeasible budget {budget}")
            continue
        scosara_alloc = None
        if needs_alloc and "scosara" not in methods:
            # Fall back to a balanced split when the learned run is absent.
            scosara_alloc = _balanced_alloc(budget, layout)
        for method in ordered:
            sel, factor = _selection_for(method, budget, cfg, ctx, train_jacs,
                                         train_ds, layout, scosara_alloc)
            if method == "scosara":
                scosara_alloc = sel.counts
            sel_path = out_dir / f"selection_{method}_{budget}.txt"
            if isinstance(sel, HardSelection):
                write_selection(sel_path, sel)
            else:
                baselines.write_flat_selection(sel_path, sel)
            manifest.add(sel_path)
            try:
                summary = crb_summary(sel, eval_ds, ctx, cfg.sigma,
                                          jacs=eval_jacs)
            except EvaluationError:
                print(f"warning: all scatterers singular for {method} at {budget}")
                continue
            rows.append((method, budget, factor, summary.mean_trace,
                         summary.mean_position_trace, summary.excluded))

    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "budget", "compression_factor",
                         "mean_trace_crb", "mean_position_crb", "excluded_count"])
        for method, budget, factor, tr, ptr, exc in rows:
            writer.writerow([method, budget, _sci(factor), _sci(tr), _sci(ptr), exc])
    manifest.add(csv_path)
    manifest.finalize()
    return csv_path


def _balanced_alloc(budget: int, layout: AxisLayout) -> tuple[int, ...]:
    alloc = [1] * layout.q
    remaining = budget - layout.q
    i = 0
    while remaining > 0:
        ax = i % layout.q
        if alloc[ax] < layout.lengths[ax]:
            alloc[ax] += 1
            remaining -= 1
        i += 1
    return tuple(alloc)


def scatterer_pairs(cfg: ExperimentConfig, ctx, grid: recovery.RoiGrid):
    """The multi-scatterer scenarios: pairs separated by whole pixels in x."""
    from .model import Scatterer
    nz, nx = grid.shape
    cx, cz = nx // 2, nz // 2
    scenarios = []
    for sep in cfg.separations:
        if cx + sep >= nx:
            raise InvalidArgumentError("separation exceeds the grid")
        pair = (Scatterer(grid.x[cx], grid.z[cz], 1.0, 0.0),
                Scatterer(grid.x[cx + sep], grid.z[cz], 1.0, 0.0))
        scenarios.append((sep, pair))
    return scenarios


def run_recover(cfg: ExperimentConfig, out_dir: Path,
                selection_files: list[Path]) -> Path:
    """FISTA recovery benchmark on the scatterer-pair scenarios."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out_dir, "recover", cfg)
    ctx = cfg.model_context()
    layout = AxisLayout(ctx.lengths, ("T", "R", "F"))
    grid = recovery.RoiGrid.half_wavelength(cfg.roi, ctx)
    scenarios = scatterer_pairs(cfg, ctx, grid)

    summary_rows = []
    from .svgplot import heatmap
    for sel_path in selection_files:
        sel_path = Path(sel_path)
        name = sel_path.stem.removeprefix("selection_")
        flat = _maybe_flat_indices(sel_path)
        if flat is not None:
            sel = None
            dictionary = recovery.build_dictionary_flat(grid, ctx, flat)
        else:
            sel = read_selection(sel_path, layout)
            dictionary = recovery.build_dictionary(grid, ctx, sel)
        for sep, pair in scenarios:
            if sel is None:
                full = recovery.measure(ctx, pair, recovery.full_selection(ctx))
                y_s = full[flat]
            else:
                y_s = recovery.measure(ctx, pair, sel)
            if cfg.recover_noise > 0:
                rng = np.random.default_rng(derived_seed(cfg.seed, "recover", name, sep))
                y_s = add_noise(y_s.reshape(1, 1, -1), cfg.recover_noise, rng).reshape(-1)
            result = recovery.fista(dictionary, y_s, iters=cfg.fista_iters)
            truth = recovery.truth_image(grid, pair)
            eps, l0 = recovery.metrics(result.image, truth, cfg.zero_threshold_rel)
            summary_rows.append((name, sep, eps, l0))

            img_csv = out_dir / f"image_{name}_sep{sep}.csv"
            _write_image_csv(img_csv, grid, result.image)
            manifest.add(img_csv)
            svg_path = out_dir / f"image_{name}_sep{sep}.svg"
            heatmap(np.abs(result.image), svg_path)
            manifest.add(svg_path)

    csv_path = out_dir / "recovery.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["selection", "separation_pixels", "epsilon", "l0"])
        for name, sep, eps, l0 in summary_rows:
            writer.writerow([name, sep, _sci(eps), l0])
    manifest.add(csv_path)
    manifest.finalize()
    return csv_path


def _maybe_flat_indices(path: Path) -> np.ndarray | None:
    """Flat index list when the file carries the flat-baseline header."""
    text = path.read_text().strip()
    if text.startswith("flat:"):
        return np.asarray([int(tok) for tok in text.split(":", 1)[1].split()])
    return None


def _write_image_csv(path: Path, grid: recovery.RoiGrid, image: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "z", "re", "im", "magnitude"])
        for iz in range(grid.z.size):
            for ix in range(grid.x.size):
                v = image[iz, ix]
                writer.writerow([_sci(grid.x[ix]), _sci(grid.z[iz]),
                                 _sci(v.real), _sci(v.imag), _sci(abs(v))])


def run_plot(sweep_csv: Path, out_dir: Path) -> Path:
    """Render the sweep CSV as a log-scale CRB line chart."""
    from .svgplot import line_chart
    series: dict[str, list[tuple[float, float]]] = {}
    with open(sweep_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            series.setdefault(row["method"], []).append(
                (float(row["compression_factor"]), float(row["mean_trace_crb"])))
    if not series:
        raise InvalidArgumentError("sweep CSV has no data rows")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.svg"
    line_chart(series, path, log_y=True,
               x_label="compression factor", y_label="mean trace CRB")
    return path
