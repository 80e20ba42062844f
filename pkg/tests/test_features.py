import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svdd.audio import Waveform
from svdd.features import (
    FeatureFormatError,
    RepresentationStack,
    ToyEncoderConfig,
    crop_or_pad,
    read_feature_file,
    toy_encode,
    write_feature_file,
)

SR = 16000


def wave(n, seed=0):
    return Waveform(
        np.random.default_rng(seed).uniform(-1, 1, n).astype(np.float32), SR)


class TestCropOrPad:
    def test_four_seconds_is_64000_samples(self):
        for n in (1, 1000, 64000, 100000):
            out = crop_or_pad(wave(n), 4.0, np.random.default_rng(0), "train")
            assert len(out) == 64000

    def test_exact_length_identity_both_modes(self):
        w = wave(64000)
        for mode in ("train", "eval"):
            out = crop_or_pad(w, 4.0, np.random.default_rng(0), mode)
            np.testing.assert_array_equal(out.samples, w.samples)

    def test_repeat_pad_tiles(self):
        w = wave(16000)
        out = crop_or_pad(w, 4.0, np.random.default_rng(0), "eval")
        assert out.samples[16000] == out.samples[0]
        np.testing.assert_array_equal(out.samples[:16000], w.samples)
        np.testing.assert_array_equal(out.samples[16000:32000], w.samples)

    def test_eval_takes_leading_window(self):
        w = wave(70000)
        out = crop_or_pad(w, 4.0, np.random.default_rng(0), "eval")
        np.testing.assert_array_equal(out.samples, w.samples[:64000])

    def test_train_crop_is_seeded(self):
        w = wave(70000)
        a = crop_or_pad(w, 4.0, np.random.default_rng(5), "train")
        b = crop_or_pad(w, 4.0, np.random.default_rng(5), "train")
        np.testing.assert_array_equal(a.samples, b.samples)

    @given(st.integers(1, 200000))
    @settings(max_examples=50, deadline=None)
    def test_output_length_exact_for_any_input(self, n):
        out = crop_or_pad(wave(n % 997 + 1 if n > 100000 else n), 4.0,
                          np.random.default_rng(0), "eval")
        assert len(out) == 64000

    def test_bad_duration_rejected(self):
        with pytest.raises(ValueError):
            crop_or_pad(wave(100), 0.0, np.random.default_rng(0))


class TestFeatureFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        stack = RepresentationStack(
            rng.normal(size=(13, 16, 50)).astype(np.float32), "utt-0001")
        path = tmp_path / "utt.svdf"
        write_feature_file(stack, path)
        back = read_feature_file(path)
        assert back.utt_id == "utt-0001"
        np.testing.assert_array_equal(back.data, stack.data)

    def test_roundtrip_many_random_shapes(self, tmp_path):
        rng = np.random.default_rng(2)
        for i in range(100):
            shape = tuple(int(x) for x in rng.integers(1, 9, size=3))
            stack = RepresentationStack(
                rng.normal(size=shape).astype(np.float32), f"u{i}")
            path = tmp_path / "s.svdf"
            write_feature_file(stack, path)
            back = read_feature_file(path)
            assert back.data.shape == shape
            np.testing.assert_array_equal(back.data, stack.data)

    def test_truncated_payload_names_expected_length(self, tmp_path):
        stack = RepresentationStack(np.zeros((2, 3, 4), dtype=np.float32), "u")
        path = tmp_path / "t.svdf"
        write_feature_file(stack, path)
        full = path.read_bytes()
        path.write_bytes(full[:-5])
        with pytest.raises(FeatureFormatError, match=str(len(full))):
            read_feature_file(path)

    def test_zero_layers_rejected(self, tmp_path):
        stack = RepresentationStack(np.zeros((1, 1, 1), dtype=np.float32), "u")
        path = tmp_path / "z.svdf"
        write_feature_file(stack, path)
        raw = bytearray(path.read_bytes())
        raw[8:12] = (0).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FeatureFormatError, match="N=0"):
            read_feature_file(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.svdf"
        path.write_bytes(b"NOPE" + b"\x00" * 30)
        with pytest.raises(FeatureFormatError, match="byte 0"):
            read_feature_file(path)


class TestToyEncoder:
    CFG = ToyEncoderConfig(seed=7)

    def test_deterministic(self):
        w = wave(64000, seed=3)
        a = toy_encode(w, self.CFG)
        b = toy_encode(w, self.CFG)
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_input_gives_zero_stack(self):
        w = Waveform(np.zeros(64000, dtype=np.float32), SR)
        out = toy_encode(w, self.CFG)
        assert np.all(out.data == 0.0)

    def test_frame_count_from_total_stride(self):
        out = toy_encode(wave(64000), self.CFG)
        assert self.CFG.total_stride == 320
        assert out.data.shape == (6, 16, 200)

    def test_different_seeds_differ(self):
        w = wave(64000, seed=4)
        a = toy_encode(w, ToyEncoderConfig(seed=1))
        b = toy_encode(w, ToyEncoderConfig(seed=2))
        assert not np.array_equal(a.data, b.data)

    def test_too_short_input_rejected(self):
        with pytest.raises(ValueError, match="receptive field"):
            toy_encode(wave(100), self.CFG)

    def test_small_perturbation_stays_small(self):
        w = wave(64000, seed=5)
        eps = np.zeros(64000, dtype=np.float32)
        eps[::97] = 1e-6 * np.sqrt(64000 / len(eps[::97]))
        w2 = Waveform(w.samples + eps, SR)
        a = toy_encode(w, self.CFG).data.astype(np.float64)
        b = toy_encode(w2, self.CFG).data.astype(np.float64)
        assert np.sqrt(np.mean((a - b) ** 2)) < 1e-3
