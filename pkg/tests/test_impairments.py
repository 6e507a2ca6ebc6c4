import numpy as np
import pytest

from ddstlab import dsp
from ddstlab.errors import CalibrationError, ConfigError, UndefinedInputError
from ddstlab.frame import DdstConfig, DdstProjector, build_training_sequence, build_tx_frame, draw_bits
from ddstlab.impairments import (
    NoiseSpec,
    SalehHpa,
    add_noise,
    apply_hpa,
    calibrate_drive_level,
    draw_channel,
    measure_evm,
    mean_distorted_power,
    tap_power_profile,
    transmit,
)


def reference_frames(cfg, count=40, seed=21):
    rng = np.random.default_rng(seed)
    proj = DdstProjector(cfg)
    return [
        build_tx_frame(draw_bits(cfg, rng), build_training_sequence(cfg, rng), cfg, proj).x
        for _ in range(count)
    ]


# ---- amplifier ----------------------------------------------------------------


def test_zero_maps_to_zero():
    out = apply_hpa(np.array([0.0 + 0.0j, 1.0 + 0j]), SalehHpa())
    assert out[0] == 0.0


def test_unit_drive_point():
    hpa = SalehHpa()  # input_scale 1
    out = apply_hpa(np.array([1.0 + 0j]), hpa)
    np.testing.assert_allclose(np.abs(out[0]), 1.96 / 1.99, rtol=1e-12)
    np.testing.assert_allclose(np.angle(out[0]), 2.53 / 3.82, rtol=1e-12)


def test_saturation_asymptotics():
    hpa = SalehHpa()
    r = 1e6
    out = apply_hpa(np.array([r + 0j]), hpa)
    np.testing.assert_allclose(np.abs(out[0]), hpa.alpha_a / (hpa.beta_a * r), rtol=1e-6)
    np.testing.assert_allclose(np.angle(out[0]), hpa.alpha_phi / hpa.beta_phi, rtol=1e-6)


def test_amam_peak_location_and_value():
    hpa = SalehHpa()
    r = np.linspace(1e-4, 5.0, 2_000_001)
    a = hpa.amam(r)
    k = np.argmax(a)
    assert abs(r[k] - 1.0 / np.sqrt(hpa.beta_a)) < 1e-5
    assert abs(a[k] - hpa.alpha_a / (2.0 * np.sqrt(hpa.beta_a))) < 1e-6


def test_amam_monotone_up_then_down():
    hpa = SalehHpa()
    peak = 1.0 / np.sqrt(hpa.beta_a)
    up = hpa.amam(np.linspace(0.0, peak, 500))
    down = hpa.amam(np.linspace(peak, 10.0, 500))
    assert np.all(np.diff(up) > 0)
    assert np.all(np.diff(down) < 0)


# ---- EVM ------------------------------------------------------------------------


def test_evm_zero_for_linearized_amplifier():
    cfg = DdstConfig()
    frames = reference_frames(cfg, count=3)
    linear = SalehHpa(beta_a=0.0, alpha_phi=0.0, beta_phi=0.0)
    assert measure_evm(frames[0], linear) < 1e-12


def test_evm_vanishes_at_small_drive():
    cfg = DdstConfig()
    frames = reference_frames(cfg, count=3)
    assert measure_evm(frames[0], SalehHpa(input_scale=1e-6)) < 1e-3


def test_evm_undefined_for_zero_input():
    with pytest.raises(UndefinedInputError):
        measure_evm(np.zeros(8, dtype=complex), SalehHpa())


def test_calibration_hits_target_and_is_monotone():
    cfg = DdstConfig()
    frames = reference_frames(cfg, count=30)
    hpa = SalehHpa()
    scales = []
    for target in (45.0, 50.0, 55.0, 60.0, 65.0):
        scale = calibrate_drive_level(target, hpa, frames)
        scales.append(scale)
        remeasured = np.mean([measure_evm(f, hpa.with_input_scale(scale)) for f in frames])
        assert abs(remeasured - target) <= 0.5
    assert np.all(np.diff(scales) > 0)


def test_calibration_rejects_out_of_range_target():
    with pytest.raises(CalibrationError):
        calibrate_drive_level(95.0, SalehHpa(), [np.ones(4, dtype=complex)])


# ---- channel -----------------------------------------------------------------------


def test_channel_energy_normalized():
    cfg = DdstConfig()
    for seed in range(10):
        ch = draw_channel(12, cfg, rng=seed)
        np.testing.assert_allclose(np.sum(np.abs(ch.taps) ** 2), 1.0, atol=1e-12)


def test_single_path_has_unit_gain():
    cfg = DdstConfig()
    ch = draw_channel(1, cfg, rng=22)
    np.testing.assert_allclose(np.abs(ch.taps[0]), 1.0, atol=1e-12)


def test_frequency_response_matches_dft_of_taps():
    cfg = DdstConfig()
    ch = draw_channel(12, cfg, rng=23)
    padded = ch.padded_taps(cfg.n)
    expected = np.sqrt(cfg.n) * dsp.dft(padded)
    np.testing.assert_allclose(ch.freq_response, expected, atol=1e-10)
    assert len(ch.freq_response) == 240


def test_too_many_paths_rejected():
    cfg = DdstConfig()
    with pytest.raises(ConfigError):
        draw_channel(13, cfg, rng=24)


def test_profile_normalized():
    np.testing.assert_allclose(tap_power_profile(12).sum(), 1.0, atol=1e-15)


# ---- noise and the transmit chain ---------------------------------------------------


def test_noise_variance_matches_spec():
    rng = np.random.default_rng(25)
    spec = NoiseSpec(snr_db=7.0, signal_power=0.8)
    samples = add_noise(np.zeros(100_000, dtype=complex), spec.variance, rng)
    empirical = np.mean(np.abs(samples) ** 2)
    assert abs(empirical - spec.variance) < 0.02 * spec.variance


def test_transmit_is_identity_without_impairments():
    cfg = DdstConfig()
    frames = reference_frames(cfg, count=1)
    out = transmit(frames[0], None, None, None)
    np.testing.assert_array_equal(out, frames[0])


def test_transmit_spectrum_is_pointwise_channel_product():
    cfg = DdstConfig()
    frames = reference_frames(cfg, count=1)
    ch = draw_channel(12, cfg, rng=26)
    out = transmit(frames[0], None, ch, None)
    np.testing.assert_allclose(
        np.fft.fft(out), ch.freq_response * np.fft.fft(frames[0]), atol=1e-9
    )
    # and equals the shared circular-convolution primitive
    np.testing.assert_allclose(
        out, dsp.circular_convolve(ch.padded_taps(cfg.n), frames[0]), atol=1e-12
    )


def test_zero_db_noise_power_matches_signal_power():
    cfg = DdstConfig()
    hpa = SalehHpa(input_scale=0.6)
    rng = np.random.default_rng(27)
    power = mean_distorted_power(cfg, hpa, rng, num_frames=300)
    proj = DdstProjector(cfg)
    noise_energy = 0.0
    signal_energy = 0.0
    trials = 400
    for _ in range(trials):
        tx = build_tx_frame(draw_bits(cfg, rng), build_training_sequence(cfg, rng), cfg, proj)
        x_dis = apply_hpa(tx.x, hpa)
        noise = add_noise(np.zeros(cfg.n, dtype=complex), NoiseSpec(0.0, power).variance, rng)
        noise_energy += np.sum(np.abs(noise) ** 2)
        signal_energy += np.sum(np.abs(x_dis) ** 2)
    assert abs(noise_energy / signal_energy - 1.0) < 0.03
