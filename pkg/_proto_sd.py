# scratch: SD-Net ReLU-death study across learning rates (not part of the package)
import sys
import numpy as np
import ddstlab as d
from ddstlab.link import LinkModel
from ddstlab import datasets
from ddstlab.mlp import (MlpModel, TrainingConfig, AdamOptimizer,
                         channel_refiner_architecture, detection_refiner_architecture, train)

n = int(sys.argv[1]) if len(sys.argv) > 1 else 120
cfg = d.DdstConfig(n=n, p=12)
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
print(f"CE best val {ce_hist.best_val_loss:.2f}")
X_tr_ds = datasets.build_sd_dataset(link, ce_model, 8000, grid, seed=13)
X_va_ds = datasets.build_sd_dataset(link, ce_model, 1500, grid, seed=14)
X, Y = X_tr_ds.inputs, X_tr_ds.labels
zero_loss = float(np.sum(Y**2)/len(Y))
print(f"zero-predictor loss {zero_loss:.2f}")

for lr in (1e-3, 3e-4, 1e-4, 3e-5):
    model = MlpModel.glorot_init(detection_refiner_architecture(cfg.n), seed=7)
    opt = AdamOptimizer(lr, 0.99, 0.999, 1e-8)
    order_rng = np.random.default_rng(0)
    step = 0
    probe = X[:400]
    report = []
    for epoch in range(20):
        order = order_rng.permutation(len(X))
        for start in range(0, len(X), 80):
            idx = order[start:start+80]
            if len(idx) < 2: continue
            model.update_bn_stats(X[idx], 0.99)
            loss, gw, gb, _ = model.gradients(X[idx], Y[idx], 1e-7)
            opt.step(model.weights + model.biases, gw + gb)
            step += 1
        val = model.loss(X_va_ds.inputs, X_va_ds.labels, 1e-7)
        dead = [float(np.mean(model._forward_cached(probe, False)[1]["preacts"][i].max(0) <= 0)) for i in range(3)]
        report.append((epoch, val, dead))
    print(f"lr={lr:g}: " + " | ".join(f"e{e} val={v:.1f} dead={[f'{x:.2f}' for x in dd]}" for e, v, dd in report[::4] + [report[-1]]), flush=True)
