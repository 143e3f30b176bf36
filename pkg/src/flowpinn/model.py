"""The frequency-compensated surrogate network.

Two subnetworks: a mapping from the design pair (inlet velocity, vertical
cylinder diameter) to sinusoid frequencies and phases, and a trunk MLP that
maps the space-time-design coordinates plus the sin/cos features to the flow
fields (u, v, p).

Two equivalent forward paths exist. ``batch_forward`` is plain vectorized
numpy for fast inference; ``predict_graph``/``graph_forward`` build the same
computation as an autodiff graph so derivatives with respect to the inputs
and the weights are available. The two paths share the arithmetic and agree
to floating-point roundoff (well inside 1e-12 relative).

Coordinates are region-of-interest local: x in [0, 1.5], y in [0, 0.3]
measured from the lower-left corner of the sampling window, t in seconds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .physics import FluidConstants, PoisonedParametersError, shedding_frequency


U_INLET_RANGE = (0.8, 1.0)
D_Y_RANGE = (0.08, 0.11)

# fixed affine rescaling of the inputs over their domain bounds. Time and the
# design pair map to [-1, 1]; the spatial coordinates map to [-5, 5] and
# [-2, 2] so one normalized unit is roughly a third of a vortex-street
# wavelength. Box-normalized spatial inputs stall: the street spans 3-5
# spatial periods, far above a tanh layer's initial frequency reach, and the
# trunk then never learns the traveling-wave structure.
_INPUT_RANGES = ((0.0, 1.5), (0.0, 0.3), (0.0, 5.0), U_INLET_RANGE, D_Y_RANGE)
_INPUT_SPANS = (5.0, 2.0, 1.0, 1.0, 1.0)
INPUT_SCALE = np.array([2.0 * s / (hi - lo) for (lo, hi), s in zip(_INPUT_RANGES, _INPUT_SPANS)])
INPUT_SHIFT = np.array([-s * (lo + hi) / (hi - lo) for (lo, hi), s in zip(_INPUT_RANGES, _INPUT_SPANS)])


@dataclass(frozen=True)
class DesignPoint:
    """One geometry/boundary-condition configuration."""

    u_inlet: float
    d_y: float

    def in_design_box(self) -> bool:
        return (U_INLET_RANGE[0] <= self.u_inlet <= U_INLET_RANGE[1]
                and D_Y_RANGE[0] <= self.d_y <= D_Y_RANGE[1])


@dataclass(frozen=True)
class FourierParams:
    """Learned sinusoid parameters for one design: 5 frequencies (rad/s), 5 phases."""

    frequencies: np.ndarray
    phases: np.ndarray


@dataclass(frozen=True)
class FlowPrediction:
    u: float
    v: float
    p: float


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "full"  # "full" | "no_ffm"
    trunk_layers: int = 10
    trunk_width: int = 120
    ffm_layers: int = 3
    ffm_width: int = 120
    n_frequencies: int = 5
    dropout_rate: float = 0.1
    freq_bias_init: bool = True

    def __post_init__(self):
        if self.variant not in ("full", "no_ffm"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def trunk_in_dim(self) -> int:
        return 5 + 2 * self.n_frequencies if self.variant == "full" else 5


@dataclass
class SurrogateParams:
    """All learnable weights: FFM layers then trunk layers, each (W, b)."""

    config: ModelConfig
    seed: int
    ffm: list = field(default_factory=list)
    trunk: list = field(default_factory=list)

    @property
    def dropout_rate(self) -> float:
        return self.config.dropout_rate

    def flat_arrays(self) -> list[np.ndarray]:
        """Canonical flat weight order: FFM W0, b0, ... then trunk W0, b0, ..."""
        out = []
        for w, b in self.ffm:
            out.extend((w, b))
        for w, b in self.trunk:
            out.extend((w, b))
        return out


def _layer_sizes(config: ModelConfig) -> tuple[list[int], list[int]]:
    ffm = [2] + [config.ffm_width] * config.ffm_layers + [2 * config.n_frequencies]
    trunk = [config.trunk_in_dim] + [config.trunk_width] * config.trunk_layers + [3]
    return ffm, trunk


def init_params(seed: int, config: ModelConfig | None = None) -> SurrogateParams:
    """Xavier-uniform weights, zero biases, deterministic per seed.

    The biases of the 5 frequency outputs start at 2*pi times the expected
    shedding frequency at the design-box midpoint so the sinusoids begin in
    the physically right band (disable with ``freq_bias_init=False``).
    """
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    ffm_sizes, trunk_sizes = _layer_sizes(config)

    def make_layers(sizes):
        layers = []
        for fin, fout in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fin + fout))
            w = rng.uniform(-limit, limit, size=(fin, fout))
            layers.append((w, np.zeros(fout)))
        return layers

    ffm = make_layers(ffm_sizes) if config.variant == "full" else []
    trunk = make_layers(trunk_sizes)
    if config.variant == "full" and config.freq_bias_init:
        mid = DesignPoint(0.9, 0.095)
        f_mid = shedding_frequency(mid, FluidConstants())
        ffm[-1][1][: config.n_frequencies] = 2.0 * np.pi * f_mid
    return SurrogateParams(config=config, seed=seed, ffm=ffm, trunk=trunk)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise PoisonedParametersError(f"non-finite values in {what}")


def ffm_dropout_masks(config: ModelConfig, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Inverted-dropout masks for the FFM hidden layers, one per layer."""
    rate = config.dropout_rate
    keep = 1.0 - rate
    return [(rng.random((n, config.ffm_width)) >= rate) / keep
            for _ in range(config.ffm_layers)]


# ---------------------------------------------------------------------------
# vectorized numpy path
# ---------------------------------------------------------------------------

def _ffm_arrays(params: SurrogateParams, uv_norm: np.ndarray, masks=None) -> np.ndarray:
    a = uv_norm
    for i, (w, b) in enumerate(params.ffm[:-1]):
        a = a @ w + b
        _check_finite(a, "FFM activations")  # tanh would mask a poisoned layer
        if masks is not None:
            a = a * masks[i]
        a = np.tanh(a)
    w, b = params.ffm[-1]
    out = a @ w + b
    _check_finite(out, "FFM output")
    return out


def _forward_arrays(params: SurrogateParams, inputs: np.ndarray, masks=None) -> np.ndarray:
    norm = inputs * INPUT_SCALE + INPUT_SHIFT
    if params.config.variant == "full":
        nf = params.config.n_frequencies
        ffm_out = _ffm_arrays(params, norm[:, 3:5], masks)
        freq, phase = ffm_out[:, :nf], ffm_out[:, nf:]
        arg = freq * inputs[:, 2:3] + phase  # raw, unscaled t
        a = np.concatenate([norm, np.sin(arg), np.cos(arg)], axis=1)
    else:
        a = norm
    for w, b in params.trunk[:-1]:
        a = a @ w + b
        _check_finite(a, "trunk activations")
        a = np.tanh(a)
    w, b = params.trunk[-1]
    return a @ w + b


def batch_forward(params: SurrogateParams, inputs: np.ndarray,
                  training_mode: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Row-wise network evaluation: (n, 5) inputs -> (n, 3) predictions.

    Input columns are x, y, t, u_inlet, d_y. With ``training_mode`` the FFM
    dropout masks are drawn from ``rng``; without it the output is a pure
    function of (params, inputs).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != 5:
        raise ValueError(f"expected (n, 5) inputs, got {inputs.shape}")
    masks = None
    if training_mode and params.config.variant == "full" and params.config.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training_mode needs an rng for the dropout masks")
        masks = ffm_dropout_masks(params.config, inputs.shape[0], rng)
    out = _forward_arrays(params, inputs, masks)
    _check_finite(out, "network output")
    return out


def ffm_forward(params: SurrogateParams, d: DesignPoint,
                training_mode: bool = False, rng: np.random.Generator | None = None) -> FourierParams:
    """Frequencies and phases the FFM subnetwork assigns to one design."""
    if params.config.variant != "full":
        raise ValueError("the no_ffm variant has no FFM subnetwork")
    for w, b in params.ffm:
        _check_finite(w, "FFM weights")
        _check_finite(b, "FFM biases")
    uv = np.array([[d.u_inlet, d.d_y]]) * INPUT_SCALE[3:5] + INPUT_SHIFT[3:5]
    masks = None
    if training_mode and params.config.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training_mode needs an rng for the dropout masks")
        masks = ffm_dropout_masks(params.config, 1, rng)
    out = _ffm_arrays(params, uv, masks)[0]
    _check_finite(out, "FFM output")
    nf = params.config.n_frequencies
    return FourierParams(frequencies=out[:nf].copy(), phases=out[nf:].copy())


def fourier_features(fp: FourierParams, t: float) -> np.ndarray:
    """[sin(F t + phi) ..., cos(F t + phi) ...]; every entry in [-1, 1]."""
    arg = fp.frequencies * t + fp.phases
    return np.concatenate([np.sin(arg), np.cos(arg)])


def predict(params: SurrogateParams, x: float, y: float, t: float, d: DesignPoint,
            training_mode: bool = False, rng: np.random.Generator | None = None) -> FlowPrediction:
    row = np.array([[x, y, t, d.u_inlet, d.d_y]])
    out = batch_forward(params, row, training_mode=training_mode, rng=rng)[0]
    return FlowPrediction(u=float(out[0]), v=float(out[1]), p=float(out[2]))


# ---------------------------------------------------------------------------
# graph path
# ---------------------------------------------------------------------------

@dataclass
class ParamNodes:
    """The weights wrapped as graph leaves, for differentiable forwards."""

    config: ModelConfig
    ffm: list
    trunk: list

    def leaves(self) -> list[ad.Node]:
        out = []
        for w, b in self.ffm:
            out.extend((w, b))
        for w, b in self.trunk:
            out.extend((w, b))
        return out


def params_to_nodes(params: SurrogateParams) -> ParamNodes:
    wrap = lambda layers: [(ad.variable(w), ad.variable(b)) for w, b in layers]
    return ParamNodes(config=params.config, ffm=wrap(params.ffm), trunk=wrap(params.trunk))


def _graph_ffm(pn: ParamNodes, uv_norm: ad.Node, masks=None) -> ad.Node:
    a = uv_norm
    for i, (w, b) in enumerate(pn.ffm[:-1]):
        a = ad.matmul(a, w) + b
        if masks is not None:
            a = a * ad.constant(masks[i])
        a = ad.tanh(a)
    w, b = pn.ffm[-1]
    return ad.matmul(a, w) + b


def _trunk_input(pn: ParamNodes, x, y, t, u, d, masks=None):
    """Normalized coordinate columns plus sin/cos features, as one (n, D) node.

    Returns (trunk_input, freq, phase); freq/phase are None for no_ffm.
    """
    cols = [x, y, t, u, d]
    norm = [c * float(INPUT_SCALE[i]) + float(INPUT_SHIFT[i]) for i, c in enumerate(cols)]
    if pn.config.variant != "full":
        return ad.concat_cols(norm), None, None
    nf = pn.config.n_frequencies
    ffm_out = _graph_ffm(pn, ad.concat_cols(norm[3:5]), masks)
    freq = ad.slice_cols(ffm_out, 0, nf)
    phase = ad.slice_cols(ffm_out, nf, 2 * nf)
    arg = freq * t + phase  # raw t; broadcasting (n, nf) * (n, 1)
    return ad.concat_cols(norm + [ad.sin(arg), ad.cos(arg)]), freq, phase


def graph_forward(pn: ParamNodes, x, y, t, u, d, masks=None):
    """Differentiable forward on column nodes; returns (u, v, p) nodes (n, 1)."""
    a, _, _ = _trunk_input(pn, x, y, t, u, d, masks)
    for w, b in pn.trunk[:-1]:
        a = ad.tanh(ad.matmul(a, w) + b)
    w, b = pn.trunk[-1]
    out = ad.matmul(a, w) + b
    return (ad.slice_cols(out, 0, 1), ad.slice_cols(out, 1, 2), ad.slice_cols(out, 2, 3))


def predict_graph(params: SurrogateParams, x: float, y: float, t: float, d: DesignPoint):
    """Graph-path prediction at one point with x, y, t as tagged leaves.

    Returns (u, v, p) root nodes; differentiate them with
    ``autodiff.derivative`` using tags "x", "y", "t".
    """
    pn = params_to_nodes(params)
    xn = ad.variable(np.array([[x]]), tag="x")
    yn = ad.variable(np.array([[y]]), tag="y")
    tn = ad.variable(np.array([[t]]), tag="t")
    un = ad.constant(np.array([[d.u_inlet]]))
    dn = ad.constant(np.array([[d.d_y]]))
    return graph_forward(pn, xn, yn, tn, un, dn)


def graph_forward_with_derivs(pn: ParamNodes, x, y, t, u, d, masks=None) -> dict:
    """Forward pass that carries exact input-derivative streams.

    Alongside the activations, first-derivative streams with respect to
    physical x, y, t and second-derivative streams for x, y are propagated
    through every layer in closed form (still as graph nodes, so weight
    gradients flow through them). Returns the fields and their derivatives
    needed by the momentum/continuity residuals: u, v, p, u_x, u_y, u_t,
    u_xx, u_yy, v_x, v_y, v_t, v_xx, v_yy, p_x, p_y.
    """
    a, freq, phase = _trunk_input(pn, x, y, t, u, d, masks)
    n = a.value.shape[0]
    dim = a.value.shape[1]
    sx, sy, st = float(INPUT_SCALE[0]), float(INPUT_SCALE[1]), float(INPUT_SCALE[2])

    def seed(col, scale):
        m = np.zeros((n, dim))
        m[:, col] = scale
        return ad.constant(m)

    tx, ty = seed(0, sx), seed(1, sy)
    if pn.config.variant == "full":
        nf = pn.config.n_frequencies
        arg = freq * t + phase
        dsin = freq * ad.cos(arg)
        dcos = ad.neg(freq * ad.sin(arg))
        head = np.zeros((n, 5))
        head[:, 2] = st
        tt = ad.concat_cols([ad.constant(head), dsin, dcos])
    else:
        tt = seed(2, st)

    # second-derivative streams start at zero (affine inputs; features are t-only)
    sxx = None
    syy = None
    for w, b in pn.trunk[:-1]:
        z = ad.matmul(a, w) + b
        a_new = ad.tanh(z)
        d1 = 1.0 - a_new * a_new
        d2 = -2.0 * a_new * d1
        tzx, tzy, tzt = ad.matmul(tx, w), ad.matmul(ty, w), ad.matmul(tt, w)
        sxx_new = d2 * (tzx * tzx)
        syy_new = d2 * (tzy * tzy)
        if sxx is not None:
            sxx_new = sxx_new + d1 * ad.matmul(sxx, w)
            syy_new = syy_new + d1 * ad.matmul(syy, w)
        a, tx, ty, tt = a_new, d1 * tzx, d1 * tzy, d1 * tzt
        sxx, syy = sxx_new, syy_new
    w, b = pn.trunk[-1]
    out = ad.matmul(a, w) + b
    ox, oy, ot = ad.matmul(tx, w), ad.matmul(ty, w), ad.matmul(tt, w)
    oxx, oyy = ad.matmul(sxx, w), ad.matmul(syy, w)

    def col(node, j):
        return ad.slice_cols(node, j, j + 1)

    return {
        "u": col(out, 0), "v": col(out, 1), "p": col(out, 2),
        "u_x": col(ox, 0), "v_x": col(ox, 1), "p_x": col(ox, 2),
        "u_y": col(oy, 0), "v_y": col(oy, 1), "p_y": col(oy, 2),
        "u_t": col(ot, 0), "v_t": col(ot, 1),
        "u_xx": col(oxx, 0), "v_xx": col(oxx, 1),
        "u_yy": col(oyy, 0), "v_yy": col(oyy, 1),
    }


# ---------------------------------------------------------------------------
# checkpoint file format (version 1)
#
#   magic     8 bytes  b"FPNCKPT1"
#   version   u32      1
#   variant   u8       0 = full, 1 = no_ffm
#   freqbias  u8       frequency-bias init flag
#   pad       u16      0
#   n_freq    u32
#   ffm_layers, ffm_width, trunk_layers, trunk_width   4 x u32
#   dropout   f64
#   seed      i64
#   n_arrays  u32
#   then per array: ndim u32, dims (u32 each), raw float64 data
#   all little-endian; arrays in canonical flat order (FFM then trunk)
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"FPNCKPT1"
_CKPT_VERSION = 1


def save_params(params: SurrogateParams, path) -> None:
    cfg = params.config
    arrays = params.flat_arrays()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IBBHIIIII", _CKPT_VERSION,
                             0 if cfg.variant == "full" else 1,
                             1 if cfg.freq_bias_init else 0, 0,
                             cfg.n_frequencies, cfg.ffm_layers, cfg.ffm_width,
                             cfg.trunk_layers, cfg.trunk_width))
        fh.write(struct.pack("<dq", cfg.dropout_rate, params.seed))
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> SurrogateParams:
    with open(path, "rb") as fh:
        if fh.read(8) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, variant_code, freqbias, _, n_freq, ffm_layers, ffm_width, \
            trunk_layers, trunk_width = struct.unpack("<IBBHIIIII", fh.read(28))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        dropout, seed = struct.unpack("<dq", fh.read(16))
        (n_arrays,) = struct.unpack("<I", fh.read(4))
        arrays = []
        for _ in range(n_arrays):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            arrays.append(np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy())
    config = ModelConfig(variant="full" if variant_code == 0 else "no_ffm",
                         trunk_layers=trunk_layers, trunk_width=trunk_width,
                         ffm_layers=ffm_layers, ffm_width=ffm_width,
                         n_frequencies=n_freq, dropout_rate=dropout,
                         freq_bias_init=bool(freqbias))
    n_ffm = (ffm_layers + 1) if config.variant == "full" else 0
    ffm = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(n_ffm)]
    rest = arrays[2 * n_ffm:]
    trunk = [(rest[2 * i], rest[2 * i + 1]) for i in range(len(rest) // 2)]
    expected = trunk_layers + 1
    if len(trunk) != expected:
        raise ValueError(f"{path}: expected {expected} trunk layers, found {len(trunk)}")
    return SurrogateParams(config=config, seed=seed, ffm=ffm, trunk=trunk)
