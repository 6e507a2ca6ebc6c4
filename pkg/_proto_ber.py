# scratch prototype: end-to-end BER orderings at desk scale (not part of the package)
import sys
import time
import numpy as np
import ddstlab as d
from ddstlab.link import LinkModel
from ddstlab import datasets, dsp, receiver
from ddstlab.mlp import (MlpModel, TrainingConfig, channel_refiner_architecture,
                         detection_refiner_architecture, train)

ce_lr = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-3
sd_lr = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-3
count = int(sys.argv[3]) if len(sys.argv) > 3 else 10000

cfg = d.DdstConfig()
proj = d.DdstProjector(cfg)
rng = np.random.default_rng(1)
frames = [d.build_tx_frame(d.draw_bits(cfg, rng), d.build_training_sequence(cfg, rng), cfg, proj).x for _ in range(100)]
hpa = d.SalehHpa().with_input_scale(d.calibrate_drive_level(55.0, d.SalehHpa(), frames))
link = LinkModel.build(cfg, hpa, 12, rng=2)
grid = np.arange(0, 50, 5)

t0 = time.time()
ce_tr = datasets.build_ce_dataset(link, count, grid, seed=11)
ce_va = datasets.build_ce_dataset(link, count // 5, grid, seed=12)
ce_model, ce_hist = train(
    MlpModel.glorot_init(channel_refiner_architecture(cfg.n), seed=5),
    ce_tr.inputs, ce_tr.labels, ce_va.inputs, ce_va.labels,
    TrainingConfig(learning_rate=ce_lr, epochs=10, l2_coeff=1e-5, shuffle_seed=6))
print(f"[{time.time()-t0:.0f}s] CE trained, best val {ce_hist.best_val_loss:.2f}")

sd_tr = datasets.build_sd_dataset(link, ce_model, count, grid, seed=13)
sd_va = datasets.build_sd_dataset(link, ce_model, count // 5, grid, seed=14)
print(f"[{time.time()-t0:.0f}s] SD datasets done")
sd_model, sd_hist = train(
    MlpModel.glorot_init(detection_refiner_architecture(cfg.n), seed=7),
    sd_tr.inputs, sd_tr.labels, sd_va.inputs, sd_va.labels,
    TrainingConfig(learning_rate=sd_lr, epochs=20, l2_coeff=1e-7, shuffle_seed=8))
print(f"[{time.time()-t0:.0f}s] SD trained, val curve {[f'{v:.2f}' for v in sd_hist.val_loss]}")

VARIANTS = {
    "LS_CE + ZF_SD": ("ls", "zf"),
    "MMSE_CE + MMSE_SD": ("mmse", "mmse"),
    "CE_Net + SD_Net": ("ce_net", "sd_net"),
    "CE_Net + ZF_SD": ("ce_net", "zf"),
    "MMSE_CE + ZF_SD": ("mmse", "zf"),
    "LS_CE + SD_Net": ("ls", "sd_net"),
}

def run_cell(variant, snr, min_err=100, max_bits=10**6, chunk=100, seed=0):
    est_kind, det_kind = VARIANTS[variant]
    sigma2 = link.noise_variance(snr)
    profile = link.tap_profile()
    es = cfg.data_power_fraction * cfg.total_power
    rng = np.random.default_rng(seed)
    errors = bits = 0
    while errors < min_err and bits < max_bits:
        obs_list = [link.simulate_frame(snr, rng, proj) for _ in range(chunk)]
        ls_pack = np.empty((chunk, 2 * cfg.n))
        for i, obs in enumerate(obs_list):
            est = receiver.ls_estimate(obs.y, obs.training, cfg)
            ls_pack[i] = dsp.complex_to_real(est.freq_full)
        if est_kind == "ce_net":
            freqs = dsp.real_to_complex(ce_model.forward(ls_pack, training=False))
        eq_pack = np.empty((chunk, 2 * cfg.n))
        for i, obs in enumerate(obs_list):
            if est_kind == "ls":
                est = receiver.ls_estimate(obs.y, obs.training, cfg)
            elif est_kind == "mmse":
                est = receiver.mmse_estimate(obs.y, obs.training, cfg, profile, sigma2)
            else:
                est = receiver.ChannelEstimate(freqs[i], None, "refined")
            y_clean = receiver.remove_training(obs.y, proj)
            if det_kind == "mmse":
                eq = receiver.mmse_equalize(y_clean, est, sigma2, es)
            else:
                eq = receiver.zf_equalize(y_clean, est)
            if det_kind == "sd_net":
                eq_pack[i] = datasets.pack_detector_input(eq.time_symbols, cfg.symbol_energy)
            else:
                eq_pack[i] = dsp.complex_to_real(eq.time_symbols)
        if det_kind == "sd_net":
            out = sd_model.forward(eq_pack, training=False)
            symbols = dsp.real_to_complex(out)
        else:
            symbols = dsp.real_to_complex(eq_pack)
        for i, obs in enumerate(obs_list):
            e, t = receiver.count_errors(receiver.demap_qpsk(symbols[i]), obs.bits)
            errors += e; bits += t
    return errors / bits, errors, bits

for snr in (24.0, 27.0, 30.0):
    line = [f"SNR {snr:>4}:"]
    for v in VARIANTS:
        ber, e, b = run_cell(v, snr, seed=int(snr))
        line.append(f"{v}={ber:.5f}({e}/{b})")
    print("  ".join(line), flush=True)
print(f"total {time.time()-t0:.0f}s")
