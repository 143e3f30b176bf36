"""Quadrant error reporting, field-snapshot export, spectra and ablations.

Test records are scored in four cells: Seen/Unseen crossed with
Covered/Uncovered. Seen means the record's design appears in the training
split; Covered means its time stamp lies in the trained span [0, 5].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from . import training as tr
from .dataset import RecordSet, Splits, SplitSpec, _design_key, _keys
from .physics import FluidConstants

CELLS = ("seen_covered", "unseen_covered", "seen_uncovered", "unseen_uncovered")


class NoDominantFrequency(Exception):
    pass


@dataclass
class QuadrantReport:
    """MSE per (Seen|Unseen) x (Covered|Uncovered) cell; absent cells are None."""

    cells: dict
    counts: dict
    per_design: dict  # (u_inlet, d_y) -> {cell: (mse, count)}

    def to_text(self) -> str:
        lines = ["cell             mse            records"]
        for cell in CELLS:
            mse = self.cells[cell]
            shown = f"{mse:.6e}" if mse is not None else "absent"
            lines.append(f"{cell:<16} {shown:<14} {self.counts[cell]}")
        return "\n".join(lines) + "\n"


def _chunked_forward(params: mdl.SurrogateParams, inputs: np.ndarray,
                     chunk: int = 65536) -> np.ndarray:
    outs = [mdl.batch_forward(params, inputs[lo:lo + chunk])
            for lo in range(0, len(inputs), chunk)]
    return np.concatenate(outs) if outs else np.zeros((0, 3))


def record_errors(params: mdl.SurrogateParams, records: RecordSet) -> np.ndarray:
    """Per-record summand: (u-u')^2 + (v-v')^2 + (p-p')^2."""
    pred = _chunked_forward(params, records.inputs())
    return np.sum((records.labels() - pred) ** 2, axis=1)


def quadrant_masks(records: RecordSet, spec: SplitSpec):
    key = _design_key(records.data["u_inlet"], records.data["d_y"])
    seen = np.isin(key, _keys(spec.train_designs))
    covered = records.data["t"] <= spec.t_covered + spec.time_tol
    return {
        "seen_covered": seen & covered,
        "unseen_covered": ~seen & covered,
        "seen_uncovered": seen & ~covered,
        "unseen_uncovered": ~seen & ~covered,
    }


def quadrant_mse(params: mdl.SurrogateParams, test_records: RecordSet,
                 spec: SplitSpec) -> QuadrantReport:
    errors = record_errors(params, test_records)
    masks = quadrant_masks(test_records, spec)
    cells = {}
    counts = {}
    for cell, mask in masks.items():
        n = int(mask.sum())
        counts[cell] = n
        cells[cell] = float(errors[mask].mean()) if n else None

    per_design = {}
    key = _design_key(test_records.data["u_inlet"], test_records.data["d_y"])
    for k in np.unique(key):
        sel = key == k
        u_in = float(test_records.data["u_inlet"][sel][0])
        d_y = float(test_records.data["d_y"][sel][0])
        entry = {}
        for cell, mask in masks.items():
            both = mask & sel
            n = int(both.sum())
            if n:
                entry[cell] = (float(errors[both].mean()), n)
        per_design[(round(u_in, 6), round(d_y, 6))] = entry
    return QuadrantReport(cells=cells, counts=counts, per_design=per_design)


def write_quadrant_report(report: QuadrantReport, txt_path, kv_path) -> None:
    with open(txt_path, "w") as fh:
        fh.write(report.to_text())
    with open(kv_path, "w") as fh:
        for cell in CELLS:
            mse = report.cells[cell]
            fh.write(f"{cell}={mse!r}\n")
            fh.write(f"{cell}_count={report.counts[cell]}\n")


# ---------------------------------------------------------------------------
# snapshot triptychs
# ---------------------------------------------------------------------------

@dataclass
class SnapshotTriptych:
    design: mdl.DesignPoint
    requested_t: float
    used_t: float
    xs: np.ndarray
    ys: np.ndarray
    layers: dict  # field -> {"truth": grid, "prediction": grid, "error": grid}

    @property
    def off_grid(self) -> bool:
        return abs(self.used_t - self.requested_t) > 1e-9


def extract_grid(records: RecordSet, design: mdl.DesignPoint, t: float):
    """Records of one (design, stamp) reshaped onto the ROI grid."""
    key = _design_key(records.data["u_inlet"], records.data["d_y"])
    sel = key == _design_key(np.array(design.u_inlet), np.array(design.d_y))
    if not sel.any():
        raise ValueError(f"no records for design {design}")
    times = np.unique(records.data["t"][sel])
    used_t = float(times[np.argmin(np.abs(times - t))])
    sel &= np.abs(records.data["t"] - used_t) <= 1e-9
    xs = np.unique(records.data["x"][sel])
    ys = np.unique(records.data["y"][sel])
    if len(xs) * len(ys) != int(sel.sum()):
        raise ValueError("snapshot records do not form a tensor grid")
    order = np.lexsort((records.data["y"][sel], records.data["x"][sel]))
    grids = {}
    for name in ("u", "v", "p"):
        grids[name] = records.data[name][sel][order].reshape(len(xs), len(ys))
    inputs = RecordSet({k: v[sel][order] for k, v in records.data.items()})
    return xs, ys, grids, inputs, used_t


def export_snapshot(params: mdl.SurrogateParams, records: RecordSet,
                    design: mdl.DesignPoint, t: float, out_dir,
                    render: bool = True) -> SnapshotTriptych:
    """Write truth/prediction/error grids for u, v, p at one (design, t).

    Nine CSV files plus one raster image per field; if t is off the data
    grid the nearest stamp is used and recorded in the metadata file.
    """
    import pathlib

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    xs, ys, truth, inputs, used_t = extract_grid(records, design, t)
    pred_cols = _chunked_forward(params, inputs.inputs())
    layers = {}
    for j, name in enumerate(("u", "v", "p")):
        pred = pred_cols[:, j].reshape(len(xs), len(ys))
        layers[name] = {"truth": truth[name], "prediction": pred,
                        "error": truth[name] - pred}
    trip = SnapshotTriptych(design=design, requested_t=t, used_t=used_t,
                            xs=xs, ys=ys, layers=layers)

    stem = f"snap_{design.u_inlet!r}_{design.d_y!r}_{t!r}"
    for name in ("u", "v", "p"):
        for layer in ("truth", "prediction", "error"):
            path = out_dir / f"{stem}_{name}_{layer}.csv"
            _write_grid_csv(path, xs, ys, trip.layers[name][layer])
    meta = {"requested_t": t, "used_t": used_t, "off_grid": trip.off_grid,
            "u_inlet": design.u_inlet, "d_y": design.d_y}
    (out_dir / f"{stem}_meta.json").write_text(json.dumps(meta, indent=1))
    if render:
        for name in ("u", "v", "p"):
            _render_triptych(out_dir / f"{stem}_{name}.png", trip, name)
    return trip


def _write_grid_csv(path, xs, ys, grid) -> None:
    with open(path, "w") as fh:
        fh.write("x\\y," + ",".join(repr(float(y)) for y in ys) + "\n")
        for i, x in enumerate(xs):
            fh.write(repr(float(x)) + "," + ",".join(repr(float(v)) for v in grid[i]) + "\n")


def _render_triptych(path, trip: SnapshotTriptych, name: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    layers = trip.layers[name]
    limit = float(np.max(np.abs(layers["truth"]))) or 1.0
    fig, axes = plt.subplots(3, 1, figsize=(8, 6), constrained_layout=True)
    extent = (trip.xs[0], trip.xs[-1], trip.ys[0], trip.ys[-1])
    for ax, layer in zip(axes, ("truth", "prediction", "error")):
        im = ax.imshow(layers[layer].T, origin="lower", extent=extent,
                       vmin=-limit, vmax=limit, cmap="RdBu_r", aspect="auto")
        ax.set_title(f"{name} {layer}")
        fig.colorbar(im, ax=ax)
    fig.suptitle(f"u_inlet={trip.design.u_inlet}, d_y={trip.design.d_y}, t={trip.used_t:g}")
    fig.savefig(path, dpi=110)
    plt.close(fig)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def dominant_frequency(signal: np.ndarray, dt: float) -> float:
    """Frequency (cycles per unit time) of the largest spectral magnitude."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size < 32:
        raise ValueError(f"need at least 32 samples, got {signal.size}")
    sig = signal - signal.mean()
    if np.max(np.abs(sig)) == 0.0:
        raise NoDominantFrequency("constant signal has no dominant frequency")
    spectrum = np.abs(np.fft.rfft(sig))
    freqs = np.fft.rfftfreq(signal.size, d=dt)
    k = int(np.argmax(spectrum[1:])) + 1
    return float(freqs[k])


def probe_series(snapshots, xs_roi: np.ndarray, ys_roi: np.ndarray,
                 x_local: float, y_local: float, fld: str = "v"):
    """Bilinear probe of a snapshot sequence at one ROI-local point."""
    sx = xs_roi[1] - xs_roi[0]
    sy = ys_roi[1] - ys_roi[0]
    fx = np.clip((x_local - xs_roi[0]) / sx, 0, len(xs_roi) - 1)
    fy = np.clip((y_local - ys_roi[0]) / sy, 0, len(ys_roi) - 1)
    ix = min(int(fx), len(xs_roi) - 2)
    iy = min(int(fy), len(ys_roi) - 2)
    wx, wy = fx - ix, fy - iy
    out = []
    for snap in snapshots:
        g = getattr(snap, fld)
        out.append((1 - wx) * (1 - wy) * g[ix, iy] + wx * (1 - wy) * g[ix + 1, iy]
                   + (1 - wx) * wy * g[ix, iy + 1] + wx * wy * g[ix + 1, iy + 1])
    times = np.array([s.time for s in snapshots])
    return np.array(out), times


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

ABLATION_VARIANTS = ("full", "no_ffm", "strong_reg", "no_reg")


@dataclass
class AblationRow:
    name: str
    lam: float
    variant: str
    per_seed: list = field(default_factory=list)  # QuadrantReport or None per seed
    failed: list = field(default_factory=list)

    def mean_cell(self, cell: str):
        vals = [r.cells[cell] for r, bad in zip(self.per_seed, self.failed)
                if not bad and r is not None and r.cells[cell] is not None]
        return float(np.mean(vals)) if vals else None


@dataclass
class AblationTable:
    rows: list
    seeds: tuple

    def to_text(self) -> str:
        lines = ["variant      " + "  ".join(f"{c:<16}" for c in CELLS)]
        for row in self.rows:
            cells = []
            for cell in CELLS:
                mean = row.mean_cell(cell)
                cells.append(f"{mean:<16.6e}" if mean is not None else "failed" if all(row.failed) else "absent          ")
            lines.append(f"{row.name:<12} " + "  ".join(cells))
        if len(self.seeds) > 1:
            lines.append("")
            lines.append("per-seed unseen_covered:")
            for row in self.rows:
                vals = []
                for r, bad in zip(row.per_seed, row.failed):
                    vals.append("failed" if bad else f"{r.cells['unseen_covered']:.6e}")
                lines.append(f"  {row.name:<12} " + "  ".join(vals))
        return "\n".join(lines) + "\n"


def run_ablations(base_cfg: tr.TrainConfig, splits: Splits,
                  model_config: mdl.ModelConfig, work_dir,
                  seeds: tuple = (0,), lam_strong: float = 0.1,
                  c: FluidConstants = FluidConstants(), log=None) -> AblationTable:
    """Train the four published variants and score them on the test quadrants.

    A diverging variant is marked failed for that seed; the others still
    report. The regularization ordering lam_strong > lam_full > 0 is asserted
    up front.
    """
    import pathlib

    work_dir = pathlib.Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    if not (lam_strong > base_cfg.lam > 0.0):
        raise ValueError(f"need lam_strong > lam_full > lam_no_reg: "
                         f"{lam_strong} > {base_cfg.lam} > 0")

    def variant_cfg(name, seed):
        kw = dict(lam=base_cfg.lam, learning_rate=base_cfg.learning_rate,
                  epochs=base_cfg.epochs, batch_size=base_cfg.batch_size,
                  collocation_per_step=base_cfg.collocation_per_step,
                  patience=base_cfg.patience, min_delta=base_cfg.min_delta,
                  seed=seed, pde_points=base_cfg.pde_points,
                  mask_cylinder_collocation=base_cfg.mask_cylinder_collocation)
        if name == "strong_reg":
            kw["lam"] = lam_strong
        elif name == "no_reg":
            kw["lam"] = 0.0
        return tr.TrainConfig(**kw)

    rows = []
    for name in ABLATION_VARIANTS:
        mc = model_config if name != "no_ffm" else mdl.ModelConfig(
            variant="no_ffm", trunk_layers=model_config.trunk_layers,
            trunk_width=model_config.trunk_width,
            ffm_layers=model_config.ffm_layers, ffm_width=model_config.ffm_width,
            n_frequencies=model_config.n_frequencies,
            dropout_rate=model_config.dropout_rate,
            freq_bias_init=model_config.freq_bias_init)
        row = AblationRow(name=name, lam=variant_cfg(name, 0).lam,
                          variant=mc.variant)
        for seed in seeds:
            cfg = variant_cfg(name, seed)
            ck = work_dir / f"{name}_seed{seed}.ck"
            try:
                params, _ = tr.train(cfg, splits, mc, ck,
                                     history_path=work_dir / f"{name}_seed{seed}_history.txt",
                                     c=c, log=log)
                row.per_seed.append(quadrant_mse(params, splits.test, splits.spec))
                row.failed.append(False)
            except tr.DivergedTrainingError:
                row.per_seed.append(None)
                row.failed.append(True)
        rows.append(row)
    table = AblationTable(rows=rows, seeds=tuple(seeds))
    (work_dir / "ablation_table.txt").write_text(table.to_text())
    return table
