import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcasep.frames import dft_frame, identity_frame
from mcasep.imaging import (CircularScan, Geometry, GridSpec, ScanFormatError, ScanRecipe, SasImage, backproject,
                            export_scan, ingest_scan, k_space, normalized_target_strength, separate_scan,
                            synthesize_scan)
from mcasep.io import write_signal
from mcasep.frames import Signal
from mcasep.signals import UndefinedMetricError
from mcasep.solver import SolverConfig


def small_scan(seed=0, n_angles=4, N=32):
    r = np.random.default_rng(seed)
    return CircularScan(np.arange(n_angles) * 360.0 / n_angles, r.standard_normal((n_angles, N)), 1e4,
                        (0.004, 0.004 + N / 1e4))


def point_scan(points, n_angles=8):
    recipe = ScanRecipe(n_angles=n_angles, scatterers=tuple(points), ring_amplitude=0.0)
    return synthesize_scan(recipe)[0]


def test_scan_validation():
    with pytest.raises(ScanFormatError):
        CircularScan([0, 90], np.zeros((3, 4)), 1e3, (0, 1))
    with pytest.raises(ScanFormatError):
        CircularScan([90, 0], np.zeros((2, 4)), 1e3, (0, 1))
    scan = small_scan()
    assert scan.N == 32 and scan.times[0] == 0.004
    assert scan.signal(1).start_time == 0.004


def test_export_ingest_round_trip(tmp_path):
    scan = small_scan()
    export_scan(scan, str(tmp_path))
    back = ingest_scan(str(tmp_path))
    np.testing.assert_array_equal(back.data, scan.data)
    np.testing.assert_array_equal(back.angles, scan.angles)
    assert back.sample_rate == scan.sample_rate and back.geometry == scan.geometry
    assert back.start_time == pytest.approx(scan.start_time)


def test_ingest_crops_to_window(tmp_path):
    scan = small_scan()
    export_scan(scan, str(tmp_path))
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["window"] = [0.0045, 0.0055]
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    back = ingest_scan(str(tmp_path / "manifest.json"))
    assert back.N == 10
    np.testing.assert_array_equal(back.data, scan.data[:, 5:15])
    assert back.start_time == pytest.approx(0.0045)


def test_missing_angle_is_reported(tmp_path):
    export_scan(small_scan(), str(tmp_path))
    os.remove(tmp_path / "angle_180.csv")
    with pytest.raises(ScanFormatError, match="180"):
        ingest_scan(str(tmp_path))


def test_inconsistent_length_is_reported(tmp_path):
    export_scan(small_scan(), str(tmp_path))
    write_signal(str(tmp_path / "angle_90.csv"), Signal(np.zeros(20), 1e4))
    with pytest.raises(ScanFormatError, match="90"):
        ingest_scan(str(tmp_path))


def test_inconsistent_rate_is_reported(tmp_path):
    export_scan(small_scan(), str(tmp_path))
    write_signal(str(tmp_path / "angle_270.csv"), Signal(np.zeros(32), 2e4))
    with pytest.raises(ScanFormatError, match="270"):
        ingest_scan(str(tmp_path))


def test_separated_images_sum_to_full_image():
    scan = small_scan(N=64)
    A1, A2 = identity_frame(64), dft_frame(64)
    sep = separate_scan(scan, A1, A2, SolverConfig("bp", max_iters=50, track_objective=False),
                        intervals=((0.004, 0.0045), (0.0045, 0.0104)))
    assert sep.summary()["max_relative_residual"] < 1e-10
    grid = GridSpec(32, 0.2)
    full = backproject(scan, grid)
    parts = backproject(sep.short, grid).pixels + backproject(sep.long, grid).pixels
    assert np.linalg.norm(parts - full.pixels) / np.linalg.norm(full.pixels) < 1e-5


def test_separation_records_failures_and_zero_series():
    scan = small_scan(N=16)
    data = scan.data.copy()
    data[1] = 0
    data[2, 3] = np.nan
    sep = separate_scan(scan.with_data(data), identity_frame(16), dft_frame(16), SolverConfig("bp", max_iters=5),
                        intervals=((0.004, 0.0045), (0.0045, 0.0056)))
    assert list(sep.errors) == [180.0]
    assert not np.any(sep.short.data[1]) and not np.any(sep.long.data[1])
    assert sep.summary()["angles_failed"] == 1


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 100))
def test_backprojection_is_linear(a, b, seed):
    s1, s2 = small_scan(seed), small_scan(seed + 1)
    grid = GridSpec(16, 0.1)
    lhs = backproject(s1.with_data(a * s1.data + b * s2.data), grid).pixels
    rhs = a * backproject(s1, grid).pixels + b * backproject(s2, grid).pixels
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_point_scatterer_peaks_within_one_pixel():
    scan = point_scan([(0.05, 0.0, 1.0)])
    img = backproject(scan, GridSpec(128, 0.2))
    px, py = img.peak()
    assert abs(px - 0.05) <= img.pixel_spacing and abs(py) <= img.pixel_spacing


def test_two_scatterers_are_resolved():
    grid = GridSpec(128, 0.2)
    d = grid.pixel_spacing
    a, b = (-5 * d, 0.0), (5 * d, 0.0)
    img = backproject(point_scan([(*a, 1.0), (*b, 1.0)], n_angles=64), grid)
    mag = np.abs(img.pixels)
    row = mag[np.argmin(np.abs(grid.axis))]
    ia, ib = (int(np.argmin(np.abs(grid.axis - p[0]))) for p in (a, b))
    left = int(np.argmax(row[ia - 2:ia + 3])) + ia - 2
    right = int(np.argmax(row[ib - 2:ib + 3])) + ib - 2
    assert row[left:right + 1].min() < 0.8 * min(row[left], row[right])


def test_image_export(tmp_path):
    img = SasImage(np.arange(6.0).reshape(2, 3) + 1j, np.array([0.0, 1, 2]), np.array([0.0, 1]))
    img.export(str(tmp_path), "pic")
    assert (tmp_path / "pic.csv").read_text().count("\n") == 2
    meta = json.loads((tmp_path / "pic.json").read_text())
    assert meta["shape"] == [2, 3]


@given(st.floats(1e-3, 1e3))
def test_nts_is_scale_invariant(scale):
    scan = small_scan()
    f, a = normalized_target_strength(scan)
    _, b = normalized_target_strength(scan.with_data(scale * scan.data))
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert f[0] == 0 and np.all(np.diff(f) > 0)


def test_nts_single_angle_peak_is_zero_db():
    scan = small_scan(n_angles=1)
    _, nts = normalized_target_strength(scan)
    assert nts.shape[1] == 1 and nts.max() == 0.0
    _, per = normalized_target_strength(scan, mode="per_frequency")
    np.testing.assert_allclose(per, 0.0)


def test_nts_ridge_at_tone_frequency():
    N, fs = 64, 1e4
    n = np.arange(N)
    gains = np.array([1.0, 0.5, 0.25, 2.0])
    data = gains[:, None] * np.cos(2 * np.pi * 10 * n / N)
    scan = CircularScan([0, 90, 180, 270], data, fs, (0, N / fs))
    f, nts = normalized_target_strength(scan)
    row = int(np.argmin(np.abs(f - 10 * fs / N)))
    np.testing.assert_allclose(nts[row], 20 * np.log10(gains / 2.0), atol=1e-9)
    assert np.all(np.delete(nts, row, axis=0) < -200)


def test_nts_zero_scan_is_undefined():
    scan = small_scan()
    with pytest.raises(UndefinedMetricError):
        normalized_target_strength(scan.with_data(np.zeros_like(scan.data)))
    with pytest.raises(UndefinedMetricError):
        normalized_target_strength(scan.with_data(np.zeros_like(scan.data)), mode="per_frequency")


def test_k_space_of_constant_and_shifted_images():
    x = np.linspace(-1, 1, 8)
    flat = k_space(SasImage(np.ones((8, 8)), x, x))
    assert flat[4, 4] == pytest.approx(64) and np.sum(flat) == pytest.approx(64)
    r = np.random.default_rng(1)
    img = r.standard_normal((8, 8)) + 1j * r.standard_normal((8, 8))
    np.testing.assert_allclose(k_space(SasImage(np.roll(img, (2, 3), (0, 1)), x, x)),
                               k_space(SasImage(img, x, x)), atol=1e-12)


def test_synthesized_scan_parts_add_up():
    scan, short, long = synthesize_scan()
    np.testing.assert_allclose(scan.data, short.data + long.data)
    ringing = np.linalg.norm(long.data, axis=1) > 0
    assert ringing.any() and not ringing.all()
    assert scan.geometry == Geometry()
