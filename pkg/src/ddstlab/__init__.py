"""Link-level lab for data-dependent superimposed training receivers.

The library simulates a cyclic single-carrier link where a known periodic
training sequence is power-shared with projected data symbols, the
transmitter amplifier distorts the frame, and the receiver runs classic
linear stages (LS/MMSE estimation, ZF/MMSE equalization) optionally refined
by two small dense networks trained on simulated data.
"""

from .dsp import circular_convolve, complex_to_real, dft, real_to_complex
from .errors import (
    CalibrationError,
    ConfigError,
    DependencyError,
    DimensionError,
    FormatError,
    IllConditionedPilotError,
    TrainingDivergenceError,
    UndefinedInputError,
)
from .frame import (
    DdstConfig,
    DdstProjector,
    build_training_sequence,
    build_tx_frame,
    draw_bits,
    modulate_qpsk,
    pilot_spectrum_is_cleared,
    superimpose,
)
from .impairments import (
    ChannelRealization,
    NoiseSpec,
    SalehHpa,
    apply_hpa,
    calibrate_drive_level,
    draw_channel,
    measure_evm,
    mean_distorted_power,
    tap_power_profile,
    transmit,
)
from .link import FrameObservation, LinkModel
from .mlp import (
    AdamOptimizer,
    MlpArchitecture,
    MlpModel,
    TrainingConfig,
    channel_refiner_architecture,
    detection_refiner_architecture,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .receiver import (
    ChannelEstimate,
    EqualizedFrame,
    count_errors,
    demap_qpsk,
    ls_estimate,
    mmse_equalize,
    mmse_estimate,
    remove_training,
    zf_equalize,
)

__version__ = "0.1.0"
