"""Flat key-value run configuration with presets and strict key checking.

Configuration files are plain text, one ``key = value`` per line, ``#``
comments allowed. Resolution order: built-in defaults, then the preset,
then the file, then command-line overrides; later wins. Unknown keys are
rejected everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset import SplitSpec
from .model import DesignPoint, ModelConfig
from .solver import ChannelGeometry, SolverConfig
from .training import TrainConfig


class ConfigError(Exception):
    pass


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes", "on"):
        return True
    if text.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# key -> (default, parser, help)
KEYS = {
    "preset": ("desk", str, "desk | paper; sets the scale of everything below"),
    "seed": (0, int, "master seed for init, shuffling, collocation, dropout"),
    "split.mode": ("desk", str, "desk | paper design-to-split assignment"),
    "designs": ("all", str, "'all' or 'u,d;u,d;...' subset to simulate"),
    "data.csv": (False, _bool, "also write CSV twins of the dataset files"),
    "solver.nx": (180, int, "grid cells along the channel"),
    "solver.ny": (40, int, "grid cells across the channel"),
    "solver.dt": (1e-3, float, "time step (s)"),
    "solver.t_end": (6.0, float, "simulated span (s)"),
    "solver.output_dt": (0.05, float, "snapshot cadence (s)"),
    "solver.inlet": ("parabolic", str, "parabolic | uniform inlet profile"),
    "solver.walls": ("freeslip", str, "freeslip | noslip channel walls"),
    "solver.roi_spacing": (0.075, float, "ROI sample grid spacing"),
    "solver.kick_strength": (0.5, float, "startup symmetry-breaking impulse"),
    "solver.kick_time": (1.0, float, "kick duration (s)"),
    "solver.warmup": (4.0, float, "startup transient discarded before sampling (s)"),
    "solver.phase_align": (True, _bool, "start sampling at a fixed phase of the wake cycle"),
    "solver.upwind_blend": (1.2, float, "donor-cell blend factor"),
    "model.variant": ("full", str, "full | no_ffm"),
    "model.trunk_layers": (6, int, "trunk hidden layers"),
    "model.trunk_width": (64, int, "trunk hidden width"),
    "model.ffm_layers": (2, int, "FFM hidden layers"),
    "model.ffm_width": (32, int, "FFM hidden width"),
    "model.n_frequencies": (5, int, "sinusoid count"),
    "model.dropout": (0.0, float, "FFM dropout rate (desk default off)"),
    "model.freq_bias_init": (True, _bool, "seed frequency biases at the expected shedding band"),
    "train.lambda": (0.001, float, "PDE-loss weight"),
    "train.lr": (0.001, float, "Adam learning rate"),
    "train.epochs": (2000, int, "epoch cap"),
    "train.batch": (4096, int, "labeled minibatch size"),
    "train.collocation": (512, int, "collocation points per step"),
    "train.patience": (500, int, "early-stopping patience (epochs)"),
    "train.min_delta": (0.0, float, "required validation improvement"),
    "train.pde_points": ("collocation", str, "collocation | collocation+labeled"),
    "train.mask_cylinder_collocation": (False, _bool, "resample collocation points over the cylinder"),
    "eval.snapshots": ("", str, "'u,d,t;u,d,t;...' triptychs to export"),
    "ablate.seeds": (1, int, "seeds per ablation variant"),
    "ablate.lam_strong": (0.1, float, "lambda for the strong-regularization variant"),
}

PRESETS = {
    "desk": {},  # the defaults above are the desk scale
    "paper": {
        "split.mode": "paper",
        "model.dropout": 0.1,
        "solver.nx": 360, "solver.ny": 80, "solver.dt": 5e-4,
        "solver.roi_spacing": 0.01,
        "model.trunk_layers": 10, "model.trunk_width": 120,
        "model.ffm_layers": 3, "model.ffm_width": 120,
        "train.epochs": 20_000, "train.batch": 32_768,
        "train.collocation": 32_768, "train.patience": 50,
    },
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def to_text(self) -> str:
        lines = [f"{key} = {self._fmt(self.values[key])}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def _fmt(val) -> str:
        if isinstance(val, bool):
            return "true" if val else "false"
        if isinstance(val, float):
            return repr(val)
        return str(val)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


def parse_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key] = val
    return out


def resolve(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults -> preset -> file -> overrides; every key validated."""
    file_values = parse_config_file(file_path) if file_path else {}
    overrides = dict(overrides or {})

    for source in (file_values, overrides):
        for key in source:
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")

    preset = overrides.get("preset", file_values.get("preset", KEYS["preset"][0]))
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")

    values = {key: default for key, (default, _, _) in KEYS.items()}
    values.update(PRESETS[preset])
    values["preset"] = preset
    for source in (file_values, overrides):
        for key, raw in source.items():
            parser = KEYS[key][1]
            try:
                values[key] = parser(raw) if isinstance(raw, str) else raw
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
    return RunConfig(values)


# ---------------------------------------------------------------------------
# projections onto the component configs
# ---------------------------------------------------------------------------

def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(nx=cfg["solver.nx"], ny=cfg["solver.ny"], dt=cfg["solver.dt"],
                        t_end=cfg["solver.t_end"], output_dt=cfg["solver.output_dt"],
                        inlet_profile=cfg["solver.inlet"], wall_bc=cfg["solver.walls"],
                        roi_spacing=cfg["solver.roi_spacing"],
                        kick_strength=cfg["solver.kick_strength"],
                        kick_time=cfg["solver.kick_time"],
                        warmup_time=cfg["solver.warmup"],
                        phase_align=cfg["solver.phase_align"],
                        upwind_blend=cfg["solver.upwind_blend"])


def model_config(cfg: RunConfig, variant: str | None = None) -> ModelConfig:
    return ModelConfig(variant=variant or cfg["model.variant"],
                       trunk_layers=cfg["model.trunk_layers"],
                       trunk_width=cfg["model.trunk_width"],
                       ffm_layers=cfg["model.ffm_layers"],
                       ffm_width=cfg["model.ffm_width"],
                       n_frequencies=cfg["model.n_frequencies"],
                       dropout_rate=cfg["model.dropout"],
                       freq_bias_init=cfg["model.freq_bias_init"])


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(lam=cfg["train.lambda"], learning_rate=cfg["train.lr"],
                       epochs=cfg["train.epochs"], batch_size=cfg["train.batch"],
                       collocation_per_step=cfg["train.collocation"],
                       patience=cfg["train.patience"], min_delta=cfg["train.min_delta"],
                       seed=cfg["seed"], pde_points=cfg["train.pde_points"],
                       mask_cylinder_collocation=cfg["train.mask_cylinder_collocation"])


def split_spec(cfg: RunConfig) -> SplitSpec:
    mode = cfg["split.mode"]
    if mode == "paper":
        return SplitSpec.paper()
    if mode == "desk":
        return SplitSpec.desk()
    raise ConfigError(f"unknown split.mode {mode!r}")


def design_list(cfg: RunConfig) -> list[DesignPoint]:
    from .dataset import ALL_DESIGNS

    raw = cfg["designs"]
    if raw == "all":
        pairs = ALL_DESIGNS
    else:
        try:
            pairs = [tuple(float(x) for x in part.split(",")) for part in raw.split(";") if part]
        except ValueError as exc:
            raise ConfigError(f"bad designs spec {raw!r}") from exc
    designs = []
    for pair in pairs:
        if len(pair) != 2:
            raise ConfigError(f"bad design pair {pair!r}")
        d = DesignPoint(*pair)
        validate_design(d)
        designs.append(d)
    return designs


def validate_design(d: DesignPoint) -> None:
    """Reject geometries that cannot run before any compute happens."""
    if not 0.0 < d.u_inlet <= 2.0:
        raise ConfigError(f"u_inlet {d.u_inlet} outside the runnable range (0, 2]")
    if not 0.0 < d.d_y <= 0.15:
        raise ConfigError(f"d_y {d.d_y} outside the runnable range (0, 0.15]")
    ChannelGeometry().check(d.d_y)


def snapshot_list(cfg: RunConfig) -> list[tuple[float, float, float]]:
    raw = cfg["eval.snapshots"]
    if not raw:
        return []
    out = []
    for part in raw.split(";"):
        if not part:
            continue
        try:
            u, d, t = (float(x) for x in part.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad snapshot spec {part!r}; expected u,d,t") from exc
        out.append((u, d, t))
    return out
