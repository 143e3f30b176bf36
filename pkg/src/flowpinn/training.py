"""Loss assembly, Adam optimization and the training loop.

The combined loss is the labeled mean-square prediction error plus a
weighted mean-square Navier-Stokes residual over freshly sampled collocation
points, differentiated end-to-end (the PDE term reaches the frequency
subnetwork's weights through the sinusoid features).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .dataset import CollocationDomain, Splits, minibatches, sample_collocation
from .physics import FluidConstants, residual_nodes


class EmptyBatchError(Exception):
    pass


class DivergedTrainingError(Exception):
    """Training hit a non-finite loss or gradient; the best checkpoint survives."""

    def __init__(self, message: str, checkpoint_path=None):
        self.checkpoint_path = checkpoint_path
        super().__init__(message)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.001  # PDE-loss weight
    learning_rate: float = 0.001
    epochs: int = 20_000
    batch_size: int = 32_768
    collocation_per_step: int = 32_768
    patience: int = 50
    min_delta: float = 0.0
    seed: int = 0
    pde_points: str = "collocation"  # | "collocation+labeled"
    mask_cylinder_collocation: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.pde_points not in ("collocation", "collocation+labeled"):
            raise ValueError(f"unknown pde_points mode {self.pde_points!r}")


@dataclass
class EpochStats:
    epoch: int
    prediction: float
    pde: float
    total: float
    val_mse: float


@dataclass
class TrainState:
    params: mdl.SurrogateParams
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    best_val: float = np.inf
    epochs_since_improve: int = 0

    @classmethod
    def fresh(cls, params: mdl.SurrogateParams) -> "TrainState":
        arrays = params.flat_arrays()
        return cls(params=params, m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays])


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def prediction_loss(inputs: np.ndarray, labels: np.ndarray, params: mdl.SurrogateParams) -> float:
    """Mean over the batch of (u-u')^2 + (v-v')^2 + (p-p')^2."""
    if len(inputs) == 0:
        raise EmptyBatchError("prediction loss needs a non-empty batch")
    pred = mdl.batch_forward(params, inputs)
    return float(np.mean(np.sum((labels - pred) ** 2, axis=1)))


def pde_loss(points: np.ndarray, params: mdl.SurrogateParams,
             c: FluidConstants = FluidConstants()) -> float:
    """Mean squared residual norm over unlabeled points."""
    if len(points) == 0:
        raise EmptyBatchError("PDE loss needs a non-empty point set")
    pn = mdl.params_to_nodes(params)
    cols = [ad.constant(points[:, i:i + 1]) for i in range(5)]
    rx, ry, rc = residual_nodes(mdl.graph_forward_with_derivs(pn, *cols), c)
    return float(np.mean(rx.value**2 + ry.value**2 + rc.value**2))


def total_loss(pred: float, pde: float, lam: float) -> float:
    for name, val in (("prediction", pred), ("pde", pde)):
        if not np.isfinite(val) or val < 0:
            raise ValueError(f"{name} loss must be finite and non-negative, got {val}")
    return pred + lam * pde


def _loss_graph(pn: mdl.ParamNodes, X: np.ndarray, Y: np.ndarray,
                colloc: np.ndarray | None, lam: float, c: FluidConstants,
                masks_label=None, masks_colloc=None):
    """Differentiable combined loss; returns (total, pred_value, pde_value)."""
    cols = [ad.constant(X[:, i:i + 1]) for i in range(5)]
    u, v, p = mdl.graph_forward(pn, *cols, masks=masks_label)
    yu = ad.constant(Y[:, 0:1])
    yv = ad.constant(Y[:, 1:2])
    yp = ad.constant(Y[:, 2:3])
    du, dv, dp = u - yu, v - yv, p - yp
    pred = ad.sumall(du * du + dv * dv + dp * dp) / float(len(X))
    if colloc is None:
        return pred, pred.value.item(), float("nan")
    ccols = [ad.constant(colloc[:, i:i + 1]) for i in range(5)]
    rx, ry, rc = residual_nodes(mdl.graph_forward_with_derivs(pn, *ccols, masks=masks_colloc), c)
    pde = ad.sumall(rx * rx + ry * ry + rc * rc) / float(len(colloc))
    total = pred + float(lam) * pde
    return total, pred.value.item(), pde.value.item()


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def adam_step(state: TrainState, grads: list[np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> TrainState:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    arrays = state.params.flat_arrays()
    if len(grads) != len(arrays):
        raise ValueError("gradient list does not match parameter list")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergedTrainingError("non-finite gradient")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for theta, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def validation_mse(params: mdl.SurrogateParams, splits: Splits) -> float:
    return prediction_loss(splits.validation.inputs(), splits.validation.labels(), params)


def write_history(path, history: list[EpochStats]) -> None:
    """One line per epoch: epoch, L_prediction, L_PDE, L, validation MSE."""
    with open(path, "w") as fh:
        fh.write("# epoch L_prediction L_PDE L val_mse\n")
        for row in history:
            fh.write(f"{row.epoch} {row.prediction!r} {row.pde!r} {row.total!r} {row.val_mse!r}\n")


def train(cfg: TrainConfig, splits: Splits, model_config: mdl.ModelConfig,
          checkpoint_path, history_path=None, domain: CollocationDomain | None = None,
          c: FluidConstants = FluidConstants(), log=None):
    """Train the surrogate; returns (best params, history).

    An epoch is one full pass over the labeled training split; collocation
    points are freshly sampled every step. The best-validation checkpoint is
    persisted as it improves; early stopping fires after ``patience`` epochs
    without improvement beyond ``min_delta``.
    """
    domain = domain or CollocationDomain(mask_cylinder=cfg.mask_cylinder_collocation)
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_colloc = np.random.default_rng(seeds[0])
    rng_dropout = np.random.default_rng(seeds[1])
    shuffle_base = int(seeds[2].generate_state(1)[0] % (2**31))

    params = mdl.init_params(cfg.seed, model_config)
    state = TrainState.fresh(params)
    history: list[EpochStats] = []
    use_dropout = (model_config.variant == "full" and model_config.dropout_rate > 0.0)
    saved_any = False

    def persist():
        mdl.save_params(state.params, checkpoint_path)

    def finish():
        if history_path is not None:
            write_history(history_path, history)
        best = mdl.load_params(checkpoint_path) if saved_any else state.params
        return best, history

    for epoch in range(1, cfg.epochs + 1):
        sums = np.zeros(3)
        n_steps = 0
        for X, Y in minibatches(splits.train, cfg.batch_size, seed=shuffle_base + epoch):
            pn = mdl.params_to_nodes(state.params)
            masks_l = masks_c = None
            if use_dropout:
                masks_l = mdl.ffm_dropout_masks(model_config, len(X), rng_dropout)
            if cfg.lam > 0.0:
                colloc = sample_collocation(cfg.collocation_per_step, domain, rng_colloc)
                if cfg.pde_points == "collocation+labeled":
                    colloc = np.concatenate([colloc, X], axis=0)
                if use_dropout:
                    masks_c = mdl.ffm_dropout_masks(model_config, len(colloc), rng_dropout)
            else:
                colloc = None
            loss, pred_v, pde_v = _loss_graph(pn, X, Y, colloc, cfg.lam, c, masks_l, masks_c)
            if not np.isfinite(loss.value):
                if history_path is not None:
                    write_history(history_path, history)
                raise DivergedTrainingError(
                    f"non-finite loss at epoch {epoch}",
                    checkpoint_path if saved_any else None)
            grads = [g.value for g in ad.grad(loss, pn.leaves())]
            adam_step(state, grads, cfg.learning_rate)
            sums += (pred_v, 0.0 if np.isnan(pde_v) else pde_v, loss.value.item())
            n_steps += 1

        val = validation_mse(state.params, splits)
        pde_mean = sums[1] / n_steps if cfg.lam > 0 else float("nan")
        history.append(EpochStats(epoch=epoch, prediction=sums[0] / n_steps,
                                  pde=pde_mean, total=sums[2] / n_steps, val_mse=val))
        if log:
            log(history[-1])

        if val < state.best_val - cfg.min_delta:
            state.best_val = val
            state.epochs_since_improve = 0
            persist()
            saved_any = True
        else:
            state.epochs_since_improve += 1
            if state.epochs_since_improve > cfg.patience:
                return finish()
    return finish()
