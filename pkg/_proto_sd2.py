# scratch: why the detection refiner trains slowly; floors + optimizer combos
import numpy as np
import ddstlab as d
from ddstlab.link import LinkModel
from ddstlab import datasets
from ddstlab.mlp import (MlpModel, MlpArchitecture, TrainingConfig, AdamOptimizer,
                         channel_refiner_architecture, detection_refiner_architecture, train)

cfg = d.DdstConfig(n=120, p=12)
proj = d.DdstProjector(cfg)
rng = np.random.default_rng(1)
frames = [d.build_tx_frame(d.draw_bits(cfg, rng), d.build_training_sequence(cfg, rng), cfg, proj).x for _ in range(100)]
hpa = d.SalehHpa().with_input_scale(d.calibrate_drive_level(55.0, d.SalehHpa(), frames))
link = LinkModel.build(cfg, hpa, 12, rng=2)
grid = np.arange(0, 50, 5)

ce_tr = datasets.build_ce_dataset(link, 6000, grid, seed=11)
ce_va = datasets.build_ce_dataset(link, 1200, grid, seed=12)
ce_model, ce_hist = train(MlpModel.glorot_init(channel_refiner_architecture(cfg.n), seed=5),
                          ce_tr.inputs, ce_tr.labels, ce_va.inputs, ce_va.labels,
                          TrainingConfig(learning_rate=1e-3, epochs=8, l2_coeff=1e-5))
tr = datasets.build_sd_dataset(link, ce_model, 8000, grid, seed=13)
va = datasets.build_sd_dataset(link, ce_model, 1500, grid, seed=14)
X, Y, Xv, Yv = tr.inputs, tr.labels, va.inputs, va.labels
nz = float(np.sum(Yv**2) / len(Yv))
print(f"zero predictor {nz:.1f}")

def ridge(A, B, Av, lam=1e-2):
    W = np.linalg.solve(A.T @ A + lam * np.eye(A.shape[1]), A.T @ B)
    return Av @ W

pred = ridge(np.hstack([X, np.ones((len(X), 1))]), Y, np.hstack([Xv, np.ones((len(Xv), 1))]))
print(f"input ridge {float(np.sum((pred - Yv) ** 2) / len(Yv)):.1f}")

# random-feature floor: frozen glorot hidden stack, regress from last hidden
sd_init = MlpModel.glorot_init(detection_refiner_architecture(cfg.n), seed=7)
def last_hidden(model, A):
    out, cache = model._forward_cached(A, training=False)
    z = cache["preacts"][-2]
    return np.maximum(z, 0.0)
H = last_hidden(sd_init, X); Hv = last_hidden(sd_init, Xv)
pred = ridge(np.hstack([H, np.ones((len(H), 1))]), Y, np.hstack([Hv, np.ones((len(Hv), 1))]), lam=1e-1)
print(f"random-feature ridge (init h_last) {float(np.sum((pred - Yv) ** 2) / len(Yv)):.1f}")

# shallow (channel-refiner) architecture on the same data
m, h = train(MlpModel.glorot_init(channel_refiner_architecture(cfg.n), seed=9),
             X, Y, Xv, Yv, TrainingConfig(learning_rate=1e-3, epochs=10, l2_coeff=1e-7))
print(f"shallow arch on detector data: best val {h.best_val_loss:.1f}")

# optimizer combos on the true architecture
for lr, eps in ((1e-3, 1e-4), (3e-3, 1e-3), (1e-2, 1e-2), (3e-2, 3e-2)):
    m, h = train(MlpModel.glorot_init(detection_refiner_architecture(cfg.n), seed=7),
                 X, Y, Xv, Yv,
                 TrainingConfig(learning_rate=lr, epsilon=eps, epochs=10, l2_coeff=1e-7))
    print(f"lr={lr:g} eps={eps:g}: val curve {[f'{v:.1f}' for v in h.val_loss]}", flush=True)
