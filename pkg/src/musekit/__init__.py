"""musekit: enriched music-caption datasets, controllability metrics, and
verified diffusion/conditioning numerics at desk scale."""

from .audio import AudioClip, Chromagram, Spectrogram, chroma, onset_envelope, read_wav, resample, stft, write_wav
from .augment import (
    PitchShift,
    TimeStretch,
    VolumeRamp,
    co_transform_features,
    pitch_shift,
    time_stretch,
    volume_ramp,
)
from .captions import (
    Caption,
    enrich_caption,
    is_low_quality,
    render_control_sentences,
    tempo_to_marking,
    training_dropout,
)
from .control_metrics import ControlSample, MetricReport, evaluate_dataset
from .diffusion import NoiseSchedule, cfg_mix, forward_sample, make_schedule, reverse_step, toy_denoise_loop
from .extract import (
    BeatGrid,
    ChordSequence,
    FeatureSet,
    KeyEstimate,
    TempoBPM,
    estimate_key,
    estimate_tempo,
    extract_features,
    recognize_chords,
    track_beats,
)
from .quality_metrics import EmbeddingSet, ProbabilitySet, frechet_distance, kl_divergence
from .verbalize import (
    decode_beat_prediction,
    parse_beats_verbalization,
    parse_chords_verbalization,
    verbalize_beats,
    verbalize_chords,
)

__version__ = "0.1.0"
