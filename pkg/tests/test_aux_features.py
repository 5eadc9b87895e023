import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from emerbench import kernels
from emerbench.aux_features import (
    EYE_FEATURE_NAMES, EyeEvent, EyeStream, eye_features, peripheral_features, precomputed_eye_passthrough,
    read_eye_stream, write_eye_stream,
)
from emerbench.errors import MissingEventAnnotations, NonMonotonicTimestamps, RowCountMismatch, WrongChannelCount
from emerbench.preproc import DE_FLOOR

EYE_RATE = 60.0
COL = {name: i for i, name in enumerate(EYE_FEATURE_NAMES)}


def _stream(seconds=8.0, events=(), rng=None, constant_pupil=False):
    rng = rng or np.random.default_rng(0)
    t = np.arange(int(seconds * EYE_RATE)) / EYE_RATE
    px = np.full(t.size, 3.0) if constant_pupil else 3.0 + 0.1 * rng.standard_normal(t.size)
    py = np.full(t.size, 3.1) if constant_pupil else 3.1 + 0.1 * rng.standard_normal(t.size)
    gx, gy = rng.standard_normal((2, t.size)).cumsum(axis=1) * 0.01
    return EyeStream(t, px, py, gx, gy, tuple(events))


def test_layout_is_33_named_slots():
    assert len(EYE_FEATURE_NAMES) == 33
    assert len(set(EYE_FEATURE_NAMES)) == 33
    t = eye_features(_stream(events=[EyeEvent("fixation", 0.1, 0.4)]))
    assert t.values.shape == (2, 33)
    assert np.isfinite(t.values).all()


def test_zero_blink_window():
    t = eye_features(_stream(events=[EyeEvent("fixation", 0.1, 0.5)])).values
    assert t[0, COL["blink_frequency"]] == 0.0
    for s in ("mean", "std", "max", "min"):
        assert t[0, COL[f"blink_duration_{s}"]] == 0.0


def test_constant_pupil_hits_floor():
    t = eye_features(_stream(constant_pupil=True, events=[EyeEvent("blink", 1, 1.2)])).values
    pupil = [i for n, i in COL.items() if n.startswith("de_pupil")]
    assert len(pupil) == 6
    assert np.all(t[:, pupil] == DE_FLOOR)


def test_three_blinks_in_four_seconds():
    blinks = [EyeEvent("blink", s, s + 0.15) for s in (0.5, 1.7, 3.2)]
    t = eye_features(_stream(events=blinks + [EyeEvent("blink", 5.0, 5.1)])).values
    assert t[0, COL["blink_frequency"]] == pytest.approx(0.75)
    assert t[1, COL["blink_frequency"]] == pytest.approx(0.25)
    assert t[0, COL["blink_duration_mean"]] == pytest.approx(0.15)
    assert t[0, COL["blink_duration_std"]] == pytest.approx(0.0, abs=1e-12)


def test_saccade_amplitude_from_gaze():
    t_s = np.arange(480) / EYE_RATE
    gx = np.where(t_s < 1.0, 0.0, 3.0)
    gy = np.where(t_s < 1.0, 0.0, 4.0)
    stream = EyeStream(t_s, np.ones(480), np.ones(480), gx, gy, (EyeEvent("saccade", 0.5, 1.5),))
    t = eye_features(stream).values
    assert t[0, COL["saccade_amplitude_mean"]] == pytest.approx(5.0)
    assert t[0, COL["saccade_frequency"]] == pytest.approx(0.25)
    assert t[0, COL["saccade_duration_max"]] == pytest.approx(1.0)


def test_band_entropies_follow_variance_split():
    # a pure 1 Hz pupil oscillation lands in the 0.5-2 Hz slot only
    t_s = np.arange(int(8 * EYE_RATE)) / EYE_RATE
    px = np.sin(2 * np.pi * 1.0 * t_s)
    stream = EyeStream(t_s, px, px, np.zeros_like(px), np.zeros_like(px), (EyeEvent("fixation", 0, 1),))
    row = eye_features(stream).values[0]
    assert row[COL["de_pupil_x_low"]] == pytest.approx(0.5 * np.log(2 * np.pi * np.e * 0.5), abs=1e-9)
    assert row[COL["de_pupil_x_vlow"]] == DE_FLOOR
    assert row[COL["de_pupil_x_high"]] == pytest.approx(DE_FLOOR, abs=1e-6)


def test_forced_window_count():
    t = eye_features(_stream(seconds=9.0, events=[EyeEvent("blink", 1, 1.1)]), n_windows=3)
    assert t.n_windows == 3
    # the third window only partly covered is still finite
    assert np.isfinite(t.values).all()


def test_csv_round_trip(tmp_path):
    s = _stream(events=[EyeEvent("blink", 0.5, 0.6), EyeEvent("saccade", 2.0, 2.05)])
    write_eye_stream(tmp_path / "eye.csv", s)
    back = read_eye_stream(tmp_path / "eye.csv")
    np.testing.assert_array_equal(back.gaze_x, s.gaze_x)
    assert back.events == s.events
    np.testing.assert_array_equal(eye_features(back).values, eye_features(s).values)


def test_csv_without_events(tmp_path):
    path = tmp_path / "eye.csv"
    path.write_text("timestamp_s,pupil_x,pupil_y,gaze_x,gaze_y\n0,1,1,0,0\n0.1,1,1,0,0\n")
    with pytest.raises(MissingEventAnnotations):
        read_eye_stream(path)


def test_non_monotonic_timestamps():
    with pytest.raises(NonMonotonicTimestamps):
        EyeStream(np.array([0.0, 0.1, 0.1]), *np.zeros((4, 3)), ())


# -- peripheral ----------------------------------------------------------------

def test_constant_channel():
    x = np.full((8, 128), 2.5)
    f = peripheral_features(x, 128.0).values.reshape(-1, 8, 6)
    np.testing.assert_allclose(f[0, 0], [2.5, 2.5, 2.5, 0, 0, 128 * 2.5**2])


def test_alternating_channel():
    x = np.tile(np.where(np.arange(256) % 2 == 0, 1.0, -1.0), (8, 1))
    f = peripheral_features(x, 128.0).values.reshape(-1, 8, 6)
    assert f.shape[0] == 2
    np.testing.assert_allclose(f[:, :, 2], 0.0, atol=1e-12)
    np.testing.assert_allclose(f[:, :, 4], 1.0)
    np.testing.assert_allclose(f[:, :, 5], 128.0)


def test_trailing_window_discarded(rng):
    x = rng.standard_normal((8, 63 * 128 + 100))
    t = peripheral_features(x, 128.0)
    assert t.values.shape == (63, 48)
    assert t.feature_names[:6] == ("pps0_max", "pps0_min", "pps0_mean", "pps0_std", "pps0_var", "pps0_sumsq")


def test_wrong_channel_count():
    with pytest.raises(WrongChannelCount):
        peripheral_features(np.zeros((7, 500)), 128.0)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (8, 96), elements=st.floats(-1e3, 1e3)))
def test_peripheral_identities(x):
    f = peripheral_features(x, 32.0).values.reshape(-1, 8, 6)
    mx, mn, mean, std, var, sumsq = np.moveaxis(f, 2, 0)
    assert np.all(mx >= mean - 1e-9) and np.all(mean >= mn - 1e-9)
    np.testing.assert_allclose(var, std**2, rtol=1e-9, atol=1e-9)
    assert np.all(sumsq >= 32 * mean**2 - 1e-9 * np.maximum(1, sumsq))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_peripheral_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((8, 64))
    perm = r.permutation(64)
    np.testing.assert_allclose(peripheral_features(x[:, perm], 64.0).values, peripheral_features(x, 64.0).values,
                               rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", ["loop", "numpy", kernels.BACKEND])
def test_peripheral_backends_agree(rng, backend):
    x = rng.standard_normal((8, 640))
    ref = peripheral_features(x, 64.0, backend="loop").values
    np.testing.assert_allclose(peripheral_features(x, 64.0, backend=backend).values, ref, rtol=1e-12, atol=1e-12)


# -- precomputed passthrough -------------------------------------------------------

def test_passthrough_identity(rng):
    f = rng.standard_normal((5, 33))
    t = precomputed_eye_passthrough(f, 5)
    np.testing.assert_array_equal(t.values, f)
    assert t.feature_names == EYE_FEATURE_NAMES


def test_passthrough_row_mismatch(rng):
    with pytest.raises(RowCountMismatch, match=r"6 rows.*5 windows"):
        precomputed_eye_passthrough(rng.standard_normal((6, 33)), 5)


def test_passthrough_nan_cell(rng):
    f = rng.standard_normal((4, 33))
    f[2, 17] = np.nan
    with pytest.raises(ValueError, match="row 2, column 17"):
        precomputed_eye_passthrough(f, 4)
