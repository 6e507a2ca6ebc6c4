# scratch prototype: desk-scale channel-refiner training vs LS/MMSE (not part of the package)
import sys
import time
import numpy as np
import ddstlab as d
from ddstlab.link import LinkModel
from ddstlab import datasets, dsp, receiver
from ddstlab.mlp import MlpModel, TrainingConfig, channel_refiner_architecture, train

lr = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-4
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 10
count = int(sys.argv[3]) if len(sys.argv) > 3 else 10000

cfg = d.DdstConfig()
proj = d.DdstProjector(cfg)
rng = np.random.default_rng(1)
frames = [d.build_tx_frame(d.draw_bits(cfg, rng), d.build_training_sequence(cfg, rng), cfg, proj).x for _ in range(100)]
hpa = d.SalehHpa().with_input_scale(d.calibrate_drive_level(55.0, d.SalehHpa(), frames))
link = LinkModel.build(cfg, hpa, 12, rng=2)

t0 = time.time()
ds = datasets.build_ce_dataset(link, count, np.arange(0, 50, 5), seed=11)
val = datasets.build_ce_dataset(link, 2000, np.arange(0, 50, 5), seed=12)
print(f"datasets in {time.time()-t0:.0f}s")

t0 = time.time()
model = MlpModel.glorot_init(channel_refiner_architecture(cfg.n), seed=5)
tc = TrainingConfig(learning_rate=lr, epochs=epochs, l2_coeff=1e-5, shuffle_seed=6)
best, hist = train(model, ds.inputs, ds.labels, val.inputs, val.labels, tc)
print(f"trained in {time.time()-t0:.0f}s; val curve: {[f'{v:.3f}' for v in hist.val_loss]}")

# estimate-MSE comparison at fixed SNRs
for snr in (24.0, 30.0):
    sigma2 = link.noise_variance(snr)
    mses = {"ls": 0.0, "mmse": 0.0, "net": 0.0}
    trials = 400
    rng = np.random.default_rng(99)
    ls_pack = np.empty((trials, 2 * cfg.n))
    truth = np.empty((trials, cfg.n), dtype=complex)
    ests = []
    for i in range(trials):
        obs = link.simulate_frame(snr, rng, proj)
        est_ls = receiver.ls_estimate(obs.y, obs.training, cfg)
        est_mmse = receiver.mmse_estimate(obs.y, obs.training, cfg, link.tap_profile(), sigma2)
        ls_pack[i] = dsp.complex_to_real(est_ls.freq_full)
        truth[i] = obs.channel.freq_response
        mses["ls"] += np.mean(np.abs(est_ls.freq_full - truth[i]) ** 2)
        mses["mmse"] += np.mean(np.abs(est_mmse.freq_full - truth[i]) ** 2)
    refined = dsp.real_to_complex(best.forward(ls_pack, training=False))
    mses["net"] = float(np.mean(np.abs(refined - truth) ** 2)) * trials
    print(f"SNR {snr}: " + "  ".join(f"{k} MSE={v/trials:.5f}" for k, v in mses.items()))
