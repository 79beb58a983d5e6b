"""SNR-gated spectral-change enhancement toolkit for hearing research."""

from .audio import (
    AudioBuffer,
    FrameSpectrum,
    SpectrumTrack,
    StftConfig,
    istft,
    read_wav,
    stft,
    write_wav,
)
from .auditory import (
    Audiogram,
    ExcitationPattern,
    apply_linear_gain,
    cambridge_gain,
    erb_hz,
    erb_number,
    excitation_pattern,
    freq_of_erb_number,
)
from .enhance import (
    DogKernel,
    EnhancementState,
    SceParams,
    accumulate_gain,
    apply_enhancement,
    dog_kernel,
    enhance_track,
    enhancement_function,
    spectral_change,
)
from .mixing import MixResult, MixSpec, make_ssn, mix_at_smr
from .snr import (
    EsnrConfig,
    GateConfig,
    SnrTrack,
    esnr_track,
    gate_scale,
    isnr_track,
    schedule_from_snr,
)

__version__ = "0.1.0"
