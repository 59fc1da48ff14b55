import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaloforge.signal_io import (
    AliasingError,
    AudioClip,
    ChannelCountError,
    ManifestError,
    SynthSpec,
    WavFormatError,
    WavTruncationError,
    WavUnsupportedError,
    derive_channels,
    load_manifest,
    parse_synth_source,
    read_wav,
    synth_signal,
)
from wavutil import write_wav, write_wav_int


class TestReadWav:
    def test_16bit_full_scale_sample(self, tmp_path):
        path = tmp_path / "one.wav"
        write_wav_int(path, np.array([[0x7FFF]]), rate=48000, bits=16)
        clip = read_wav(path)
        assert clip.num_channels == 1
        assert clip.samples[0, 0] == pytest.approx(32767 / 32768)

    def test_24bit_stereo_duration(self, tmp_path):
        path = tmp_path / "ten.wav"
        rng = np.random.default_rng(0)
        write_wav(path, rng.uniform(-0.5, 0.5, size=(2, 480000)), rate=48000, bits=24)
        clip = read_wav(path)
        assert clip.num_channels == 2
        assert clip.sample_rate == 48000
        assert clip.duration == pytest.approx(10.0)

    def test_rifx_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.wav"
        write_wav(path, np.zeros((1, 4)), rate=8000)
        raw = bytearray(path.read_bytes())
        raw[0:4] = b"RIFX"
        path.write_bytes(bytes(raw))
        with pytest.raises(WavFormatError):
            read_wav(path)

    def test_truncated_data_names_byte_counts(self, tmp_path):
        path = tmp_path / "cut.wav"
        write_wav(path, np.zeros((1, 100)), rate=8000)
        raw = path.read_bytes()
        path.write_bytes(raw[:-30])
        with pytest.raises(WavTruncationError, match=r"expected 200 bytes, found 170"):
            read_wav(path)

    def test_unsupported_bit_depth(self, tmp_path):
        path = tmp_path / "odd.wav"
        write_wav(path, np.zeros((1, 8)), rate=8000)
        raw = bytearray(path.read_bytes())
        # fmt chunk starts at byte 20; bits-per-sample is its last u16
        struct.pack_into("<H", raw, 34, 8)
        path.write_bytes(bytes(raw))
        with pytest.raises(WavUnsupportedError):
            read_wav(path)

    def test_float_format_tag_unsupported(self, tmp_path):
        path = tmp_path / "f32.wav"
        write_wav(path, np.zeros((1, 8)), rate=8000)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<H", raw, 20, 3)
        path.write_bytes(bytes(raw))
        with pytest.raises(WavUnsupportedError):
            read_wav(path)

    def test_16bit_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        ints = rng.integers(-32768, 32768, size=(2, 1000))
        path = tmp_path / "rt.wav"
        write_wav_int(path, ints, rate=44100, bits=16)
        clip = read_wav(path)
        back = np.round(clip.samples * 32768).astype(np.int64)
        assert np.array_equal(back, ints)

    def test_24bit_scaling_convention(self, tmp_path):
        path = tmp_path / "s24.wav"
        write_wav_int(path, np.array([[1 << 22, -(1 << 23)]]), rate=8000, bits=24)
        clip = read_wav(path)
        assert clip.samples[0, 0] == pytest.approx(0.5)
        assert clip.samples[0, 1] == pytest.approx(-1.0)


class TestDeriveChannels:
    def test_identical_channels_zero_difference(self):
        clip = AudioClip(samples=np.array([[1.0, 0.0], [1.0, 0.0]]), sample_rate=8000)
        pair = derive_channels(clip, "ave-diff")
        assert np.array_equal(pair.a, [1.0, 0.0])
        assert np.array_equal(pair.b, [0.0, 0.0])

    def test_antisymmetric_channels(self):
        clip = AudioClip(samples=np.array([[1.0, -1.0], [-1.0, 1.0]]), sample_rate=8000)
        pair = derive_channels(clip, "ave-diff")
        assert np.array_equal(pair.a, [0.0, 0.0])
        assert np.array_equal(pair.b, [1.0, -1.0])

    def test_left_right_passthrough(self):
        clip = AudioClip(samples=np.array([[0.5], [0.1]]), sample_rate=8000)
        pair = derive_channels(clip, "left-right")
        assert pair.a[0] == 0.5 and pair.b[0] == 0.1

    def test_mono_input_rejected(self):
        clip = AudioClip(samples=np.zeros((1, 4)), sample_rate=8000)
        with pytest.raises(ChannelCountError):
            derive_channels(clip, "ave-diff")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_ave_diff_invertible(self, seed):
        rng = np.random.default_rng(seed)
        samples = rng.uniform(-1, 1, size=(2, 64))
        pair = derive_channels(AudioClip(samples=samples, sample_rate=8000), "ave-diff")
        assert np.allclose(pair.a + pair.b, samples[0], atol=1e-12)
        assert np.allclose(pair.a - pair.b, samples[1], atol=1e-12)


class TestSynthSignal:
    def test_tone_length_and_phase(self):
        clip = synth_signal(SynthSpec(kind="tone", freq=1000.0, duration=1.0, rate=48000))
        assert clip.num_samples == 48000
        assert clip.samples[0, 0] == 0.0

    def test_silence(self):
        clip = synth_signal(SynthSpec(kind="silence", duration=0.5, rate=48000))
        assert clip.num_samples == 24000
        assert not clip.samples.any()

    def test_noise_determinism(self):
        spec = SynthSpec(kind="white-noise", duration=0.25, rate=8000, seed=7)
        a = synth_signal(spec)
        b = synth_signal(spec)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_nyquist_rejected(self):
        with pytest.raises(AliasingError):
            SynthSpec(kind="tone", freq=4000.0, duration=1.0, rate=8000)

    def test_stereo_noise_channels_differ(self):
        clip = synth_signal(SynthSpec(kind="white-noise", duration=0.1, rate=8000, seed=1, num_channels=2))
        assert clip.num_channels == 2
        assert not np.array_equal(clip.samples[0], clip.samples[1])

    def test_parse_synth_source(self):
        spec = parse_synth_source("synth:kind=tone,freq=440,duration=2,rate=8000,seed=3,channels=2")
        assert spec == SynthSpec(
            kind="tone", duration=2.0, rate=8000, freq=440.0, seed=3, num_channels=2
        )


class TestLoadManifest:
    HEADER = "id\tsource\tscene_label\tcity_label\n"

    def test_first_appearance_vocabulary(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text(
            self.HEADER
            + "a\tx.wav\tpark\thelsinki\n"
            + "b\ty.wav\tmetro\tparis\n"
            + "c\tz.wav\tpark\thelsinki\n"
        )
        manifest = load_manifest(path)
        assert manifest.scene_vocabulary == ("park", "metro")
        assert manifest.city_vocabulary == ("helsinki", "paris")
        assert manifest.ids == ("a", "b", "c")

    def test_missing_column_schema_error(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("id\tsource\tscene_label\na\tx.wav\tpark\n")
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_row_missing_field(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text(self.HEADER + "a\tx.wav\tpark\n")
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text(self.HEADER + "a\tx\tp\tc\na\ty\tp\tc\n")
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("")
        manifest = load_manifest(path)
        assert len(manifest) == 0
        assert manifest.scene_vocabulary == ()
