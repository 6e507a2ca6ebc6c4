import numpy as np
import pytest

from ddstlab import dsp
from ddstlab.errors import ConfigError, DimensionError, FormatError
from ddstlab.frame import (
    DdstConfig,
    DdstProjector,
    build_training_sequence,
    build_tx_frame,
    draw_bits,
    modulate_qpsk,
    pilot_spectrum_is_cleared,
    superimpose,
)


def small_config(n=8, p=2, t=0):
    return DdstConfig(n=n, p=p, t=t)


def dense_interference_matrix(config):
    """Explicit (1/Q) * J_Q kron I_P construction, test-side oracle."""
    q, p, t = config.q, config.p, config.t
    idx = np.arange(q)
    j_q = np.exp(2j * np.pi * t * (idx[:, None] - idx[None, :]) / q)
    return np.kron(j_q, np.eye(p)) / q


# ---- config validation ------------------------------------------------------


def test_defaults():
    cfg = DdstConfig()
    assert (cfg.n, cfg.p, cfg.t, cfg.q) == (240, 12, 0, 20)
    assert cfg.data_power_fraction == 0.9


def test_rejects_non_divisible_period():
    with pytest.raises(ConfigError):
        DdstConfig(n=10, p=3)


def test_rejects_bad_power_split():
    with pytest.raises(ConfigError):
        DdstConfig(data_power_fraction=0.9, training_power_fraction=0.2)


# ---- modulation --------------------------------------------------------------


def test_qpsk_mapping_convention():
    s = modulate_qpsk(np.array([0, 0, 1, 1, 0, 1, 1, 0]), 1.0)
    inv = 1 / np.sqrt(2)
    np.testing.assert_allclose(
        s, [inv + 1j * inv, -inv - 1j * inv, inv - 1j * inv, -inv + 1j * inv]
    )


def test_qpsk_symbol_power_exact():
    rng = np.random.default_rng(6)
    bits = rng.integers(0, 2, 480)
    s = modulate_qpsk(bits, 0.9)
    np.testing.assert_allclose(np.abs(s) ** 2, 0.9)


def test_qpsk_odd_bits_rejected():
    with pytest.raises(FormatError):
        modulate_qpsk(np.array([0, 1, 0]), 1.0)


# ---- projector ----------------------------------------------------------------


def test_projection_idempotent():
    cfg = DdstConfig()
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(7)
    s = rng.standard_normal(cfg.n) + 1j * rng.standard_normal(cfg.n)
    once = proj.project(s)
    np.testing.assert_allclose(proj.project(once), once, atol=1e-10)


def test_projection_annihilates_periodic():
    cfg = DdstConfig()
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(8)
    base = rng.standard_normal(cfg.p) + 1j * rng.standard_normal(cfg.p)
    periodic = np.tile(base, cfg.q)
    np.testing.assert_allclose(proj.project(periodic), 0, atol=1e-10)


def test_projection_leaves_zero_block_mean_untouched():
    cfg = small_config(n=8, p=2)
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(9)
    s = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    s = s - np.kron(np.ones(cfg.q), np.zeros(cfg.p)) - np.tile(
        s.reshape(cfg.q, cfg.p).mean(axis=0), cfg.q
    )
    np.testing.assert_allclose(proj.project(s), s, atol=1e-12)


@pytest.mark.parametrize("t", [0, 1, 2])
@pytest.mark.parametrize("n,p", [(8, 2), (12, 3), (16, 4), (6, 3)])
def test_structural_matches_dense(n, p, t):
    cfg = small_config(n=n, p=p, t=t)
    proj = DdstProjector(cfg)
    dense_theta = np.eye(n) - dense_interference_matrix(cfg)
    rng = np.random.default_rng(10 + n + t)
    for _ in range(5):
        s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        np.testing.assert_allclose(proj.project(s), dense_theta @ s, atol=1e-10)
        np.testing.assert_allclose(
            proj.interference_component(s), dense_interference_matrix(cfg) @ s, atol=1e-10
        )


def test_theta_then_j_is_zero():
    cfg = DdstConfig()
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(11)
    s = rng.standard_normal(cfg.n) + 1j * rng.standard_normal(cfg.n)
    np.testing.assert_allclose(proj.interference_component(proj.project(s)), 0, atol=1e-10)


def test_projection_length_checked():
    proj = DdstProjector(DdstConfig())
    with pytest.raises(DimensionError):
        proj.project(np.ones(10))


# ---- pilot-bin diagnostics -----------------------------------------------------


def test_projected_frame_clears_pilot_bins():
    cfg = DdstConfig()
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(12)
    s = modulate_qpsk(rng.integers(0, 2, cfg.bits_per_frame), cfg.symbol_energy)
    assert pilot_spectrum_is_cleared(proj.project(s), cfg)


def test_raw_frame_keeps_pilot_energy():
    cfg = DdstConfig()
    rng = np.random.default_rng(13)
    s = modulate_qpsk(rng.integers(0, 2, cfg.bits_per_frame), cfg.symbol_energy)
    assert not pilot_spectrum_is_cleared(s, cfg)


def test_zero_frame_counts_as_cleared():
    cfg = DdstConfig()
    assert pilot_spectrum_is_cleared(np.zeros(cfg.n, dtype=complex), cfg)


# ---- training sequence -----------------------------------------------------------


def test_training_sequence_is_periodic():
    cfg = DdstConfig()
    c = build_training_sequence(cfg, rng=14)
    np.testing.assert_array_equal(c.reshape(cfg.q, cfg.p), np.tile(c[: cfg.p], (cfg.q, 1)))


def test_training_sequence_spectrum_on_pilot_bins_only():
    cfg = DdstConfig()
    c = build_training_sequence(cfg, rng=15)
    spectrum = dsp.dft(c)
    mask = np.ones(cfg.n, dtype=bool)
    mask[cfg.pilot_bins()] = False
    assert np.max(np.abs(spectrum[mask])) < 1e-9 * np.linalg.norm(c)


def test_training_sequence_power():
    cfg = DdstConfig()
    c = build_training_sequence(cfg, rng=16)
    np.testing.assert_allclose(np.mean(np.abs(c) ** 2), 0.1, atol=1e-12)


def test_training_sequence_deterministic():
    cfg = DdstConfig()
    np.testing.assert_array_equal(
        build_training_sequence(cfg, rng=17), build_training_sequence(cfg, rng=17)
    )


# ---- superposition -----------------------------------------------------------------


def test_superimpose_degenerate_cases():
    cfg = DdstConfig()
    c = build_training_sequence(cfg, rng=18)
    zero = np.zeros(cfg.n, dtype=complex)
    np.testing.assert_array_equal(superimpose(zero, c), c)
    np.testing.assert_array_equal(superimpose(c, zero), c)
    with pytest.raises(DimensionError):
        superimpose(np.ones(3), np.ones(4))


def test_pilot_bins_carry_training_only():
    cfg = DdstConfig()
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(19)
    c = build_training_sequence(cfg, rng)
    tx = build_tx_frame(draw_bits(cfg, rng), c, cfg, proj)
    bins = cfg.pilot_bins()
    np.testing.assert_allclose(
        dsp.dft(tx.x)[bins], dsp.dft(c)[bins], atol=1e-9 * np.linalg.norm(tx.x)
    )


def test_power_accounting():
    # data and training shares add to the total since the cross terms live
    # on disjoint bins; averaged over many frames the frame power is ~1
    cfg = DdstConfig()
    proj = DdstProjector(cfg)
    rng = np.random.default_rng(20)
    total = 0.0
    frames = 50  # 12000 samples
    for _ in range(frames):
        tx = build_tx_frame(draw_bits(cfg, rng), build_training_sequence(cfg, rng), cfg, proj)
        total += np.mean(np.abs(tx.x) ** 2)
    assert abs(total / frames - 1.0) < 0.02
