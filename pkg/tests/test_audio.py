import numpy as np
import pytest

from musekit.audio import AudioClip, chroma, onset_envelope, read_wav, resample, stft, write_wav
from musekit.errors import AudioFormatError

from conftest import SR, click_train, dominant_frequency, sine_clip, sine_mix


class TestWavRoundTrip:
    def test_mono_16bit_sample_count(self, tmp_path):
        clip = sine_clip(440.0, 1.0)
        path = tmp_path / "tone.wav"
        write_wav(clip, path)
        back = read_wav(path)
        assert len(back.samples) == SR
        assert back.sample_rate == SR

    def test_round_trip_quantization_bound(self, tmp_path, rng):
        clip = AudioClip(rng.uniform(-0.99, 0.99, 5000), SR)
        path = tmp_path / "noise.wav"
        write_wav(clip, path)
        back = read_wav(path)
        assert np.max(np.abs(back.samples - clip.samples)) <= 2.0**-15

    def test_stereo_opposite_channels_cancel(self, tmp_path):
        from scipy.io import wavfile

        x = (sine_mix([440.0], 0.5) * 32767).astype(np.int16)
        stereo = np.stack([x, -x], axis=1)
        path = tmp_path / "stereo.wav"
        wavfile.write(path, SR, stereo)
        back = read_wav(path)
        assert np.max(np.abs(back.samples)) <= 2.0**-15

    def test_out_of_range_clipped_with_warning(self, tmp_path):
        clip = AudioClip(np.array([0.0, 1.5, -1.5, 0.5] * 100), SR)
        path = tmp_path / "hot.wav"
        with pytest.warns(UserWarning, match="clipping"):
            write_wav(clip, path)
        back = read_wav(path)
        assert np.max(np.abs(back.samples)) <= 1.0

    def test_empty_clip_write_fails(self, tmp_path):
        clip = AudioClip(np.array([]), SR)
        with pytest.raises(ValueError):
            write_wav(clip, tmp_path / "empty.wav")

    def test_truncated_header_fails(self, tmp_path):
        path = tmp_path / "good.wav"
        write_wav(sine_clip(440.0, 0.5), path)
        broken = tmp_path / "broken.wav"
        broken.write_bytes(path.read_bytes()[:20])
        with pytest.raises(AudioFormatError):
            read_wav(broken)

    def test_zero_length_audio_fails(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "zero.wav"
        wavfile.write(path, SR, np.zeros(0, dtype=np.int16))
        with pytest.raises(AudioFormatError):
            read_wav(path)

    def test_unsupported_dtype_fails(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "u8.wav"
        wavfile.write(path, SR, np.full(100, 128, dtype=np.uint8))
        with pytest.raises(AudioFormatError):
            read_wav(path)

    def test_float32_accepted(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "f32.wav"
        wavfile.write(path, SR, sine_mix([440.0], 0.5).astype(np.float32))
        back = read_wav(path)
        assert back.samples.dtype == np.float64
        assert len(back.samples) == SR // 2


class TestResample:
    def test_sine_peak_survives_441_to_16k(self):
        clip = sine_clip(440.0, 1.0, sr=44100)
        out = resample(clip, 16000)
        assert out.sample_rate == 16000
        # full-length FFT: 1 Hz bins, peak must land within 1 bin of 440
        assert abs(dominant_frequency(out) - 440.0) <= 1.0

    def test_identity_when_rates_match(self):
        clip = sine_clip(440.0, 1.0)
        out = resample(clip, SR)
        assert out.samples is clip.samples

    def test_duration_preserved(self):
        clip = sine_clip(440.0, 1.0, sr=44100)
        out = resample(clip, 16000)
        assert abs(len(out.samples) - 16000) <= 1

    def test_round_trip_duration_and_rms(self):
        clip = sine_clip(330.0, 1.0)
        back = resample(resample(clip, 22050), SR)
        assert abs(len(back.samples) - len(clip.samples)) <= 2
        rms = lambda x: np.sqrt(np.mean(x**2))
        assert abs(rms(back.samples) - rms(clip.samples)) / rms(clip.samples) < 0.05

    def test_rejects_low_rate(self):
        with pytest.raises(ValueError):
            resample(sine_clip(440.0, 1.0), 4000)


class TestStft:
    def test_tone_peak_bin_every_frame(self):
        clip = sine_clip(1000.0, 1.0)
        spec = stft(clip, 1024, 256)
        expected_bin = round(1000 * 1024 / SR)
        peaks = np.argmax(spec.frames, axis=1)
        assert np.all(np.abs(peaks - expected_bin) <= 1)

    def test_silence_all_zero(self):
        spec = stft(AudioClip(np.zeros(SR), SR))
        assert np.allclose(spec.frames, 0.0)

    def test_frame_count_formula(self):
        spec = stft(AudioClip(np.zeros(16000), SR), 1024, 256)
        assert spec.n_frames == 59

    def test_linearity(self):
        clip = sine_clip(500.0, 1.0)
        a = 3.5
        s1 = stft(clip)
        s2 = stft(AudioClip(a * clip.samples, SR))
        assert np.allclose(s2.frames, a * s1.frames, rtol=1e-6, atol=1e-9)

    def test_rejects_short_clip(self):
        with pytest.raises(ValueError):
            stft(AudioClip(np.zeros(512), SR), 1024, 256)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            stft(sine_clip(440.0, 1.0), 1000, 250)


class TestOnsetEnvelope:
    def test_constant_spectrogram_zero(self):
        from musekit.audio import Spectrogram

        spec = Spectrogram(
            frames=np.full((40, 513), 0.7),
            hop_seconds=256 / SR,
            bin_hz=np.fft.rfftfreq(1024, 1 / SR),
            window_seconds=1024 / SR,
        )
        assert np.allclose(onset_envelope(spec), 0.0)

    def test_click_train_peaks_at_clicks(self):
        clip = click_train(0.5)
        spec = stft(clip)
        env = onset_envelope(spec)
        click_frames = [
            round((t - spec.window_seconds / 2) / spec.hop_seconds)
            for t in np.arange(0.5, 9.5, 0.5)
        ]
        for frame in click_frames:
            window = env[frame - 2 : frame + 3]
            assert window.max() > 0
            local_peak = frame - 2 + int(np.argmax(window))
            assert abs(local_peak - frame) <= 1

    def test_single_frame_zero(self):
        spec = stft(AudioClip(np.zeros(1024), SR), 1024, 256)
        env = onset_envelope(spec)
        assert env.shape == (1,)
        assert env[0] == 0.0


class TestChroma:
    def test_a440_concentrates_in_class_9(self):
        cg = chroma(stft(sine_clip(440.0, 1.0), 4096, 1024))
        mass = cg.frames.sum(axis=0)
        assert mass[9] / mass.sum() >= 0.9

    def test_c_major_triad_top3(self):
        clip = AudioClip(sine_mix([261.63, 329.63, 392.0], 1.0), SR)
        cg = chroma(stft(clip, 4096, 1024))
        top3 = set(np.argsort(cg.frames.sum(axis=0))[-3:])
        assert top3 == {0, 4, 7}

    def test_silence_all_zero(self):
        cg = chroma(stft(AudioClip(np.zeros(SR), SR)))
        assert np.allclose(cg.frames, 0.0)

    def test_octave_invariance(self):
        for f in (220.0, 440.0, 880.0):
            cg = chroma(stft(sine_clip(f, 1.0), 4096, 1024))
            assert int(np.argmax(cg.frames.sum(axis=0))) == 9
