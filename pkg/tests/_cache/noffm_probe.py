from pathlib import Path
import numpy as np
from flowpinn import model as mdl, training as tr, evaluation as ev
from flowpinn.dataset import SplitSpec, build_splits

data = Path("/root/pkg/tests/_cache/desk_data/dataset")
splits = build_splits(sorted(data.glob("data_*.bin")), SplitSpec.desk())
mcfg = mdl.ModelConfig(variant="no_ffm", trunk_layers=6, trunk_width=64,
                       ffm_layers=2, ffm_width=32, dropout_rate=0.0)
tcfg = tr.TrainConfig(lam=0.001, epochs=1000, patience=500, batch_size=4096,
                      collocation_per_step=128, seed=0)
def log(h):
    if h.epoch % 100 == 0:
        print(f"epoch {h.epoch}: pred {h.prediction:.5f} val {h.val_mse:.5f}", flush=True)
params, hist = tr.train(tcfg, splits, mcfg, "/root/pkg/tests/_cache/noffm.ck", log=log)
rep = ev.quadrant_mse(params, splits.test, splits.spec)
print("epochs run:", len(hist), flush=True)
print("quadrants:", {c: None if rep.cells[c] is None else round(rep.cells[c], 6) for c in ev.CELLS}, flush=True)
print("NOFFM DONE", flush=True)
