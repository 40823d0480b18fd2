"""Nostril detection and tracking: projections, minima, geometry,
prediction, rotated extraction, and the track loop on synthetic faces.

The synthetic face generator doubles as the tracking oracle: it knows
exactly where it painted the nostrils.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warble.errors import (
    DegeneratePair,
    EmptyRegion,
    NostrilsNotFound,
    TrackingLost,
)
from warble.synthetic import FaceSpec, nostril_truth, render_face
from warble.vision import (
    Frame,
    NostrilGeometry,
    NostrilPair,
    RotatedRegion,
    VisionParams,
    extract_region,
    find_nostril_minima,
    initialize,
    mouth_window,
    nostril_geometry,
    predict_center,
    project_and_smooth,
    region_corners,
    track_step,
)


# project_and_smooth

def test_projection_uniform_region():
    sub = np.full((6, 9), 127.0)
    for axis in ("horizontal", "vertical"):
        p = project_and_smooth(sub, axis, 3)
        assert np.allclose(p, 127.0)
    assert len(project_and_smooth(sub, "horizontal", 3)) == 9
    assert len(project_and_smooth(sub, "vertical", 3)) == 6


def test_projection_dark_column_minimum():
    sub = np.full((5, 16), 255.0)
    sub[:, 7] = 0.0
    p = project_and_smooth(sub, "horizontal", 1)
    assert int(np.argmin(p)) == 7


def test_projection_window_one_is_identity():
    rng = np.random.default_rng(0)
    sub = rng.uniform(0, 255, size=(4, 11))
    p = project_and_smooth(sub, "horizontal", 1)
    assert np.allclose(p, sub.mean(axis=0), atol=1e-12)


def test_projection_edge_replication():
    sub = np.array([[0.0, 10.0, 20.0, 30.0, 40.0]])
    p = project_and_smooth(sub, "horizontal", 3)
    want = [10.0 / 3.0, 10.0, 20.0, 30.0, 110.0 / 3.0]
    assert np.allclose(p, want, atol=1e-12)


def test_projection_empty_region():
    with pytest.raises(EmptyRegion):
        project_and_smooth(np.zeros((0, 4)), "horizontal", 1)


def test_projection_rgb_uses_channel_mean():
    sub = np.zeros((3, 4, 3))
    sub[:, :, 0] = 90.0
    sub[:, :, 1] = 30.0
    sub[:, :, 2] = 60.0
    p = project_and_smooth(sub, "vertical", 1)
    assert np.allclose(p, 60.0)


def test_projection_rejects_bad_window():
    sub = np.full((3, 8), 10.0)
    with pytest.raises(ValueError):
        project_and_smooth(sub, "horizontal", 4)   # even
    with pytest.raises(ValueError):
        project_and_smooth(sub, "horizontal", 9)   # longer than projection


# find_nostril_minima on hand-built windows

def disk_window(w, h, centers, r=3.0, bg=170.0, fg=40.0):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w), bg)
    for cx, cy in centers:
        d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        cov = np.clip(r + 0.5 - d, 0.0, 1.0)
        img = img * (1 - cov) + fg * cov
    return img


def test_two_disks_found_within_one_pixel():
    img = disk_window(36, 18, [(12, 8), (24, 9)])
    pair = find_nostril_minima(img, origin=(0.0, 0.0))
    assert abs(pair.n1[0] - 12) < 1.0
    assert abs(pair.n1[1] - 8) < 1.0
    assert abs(pair.n2[0] - 24) < 1.0
    assert abs(pair.n2[1] - 9) < 1.0


def test_symmetric_disks_centered():
    img = disk_window(40, 20, [(13, 10), (27, 10)])
    pair = find_nostril_minima(img, origin=(0.0, 0.0))
    cx = 0.5 * (pair.n1[0] + pair.n2[0])
    assert abs(cx - 20.0) < 0.5


def test_single_disk_not_found():
    img = disk_window(36, 18, [(18, 9)])
    with pytest.raises(NostrilsNotFound):
        find_nostril_minima(img, origin=(0.0, 0.0))


def test_uniform_window_not_found():
    with pytest.raises(NostrilsNotFound):
        find_nostril_minima(np.full((18, 36), 170.0), origin=(0.0, 0.0))


def test_origin_offsets_coordinates():
    img = disk_window(36, 18, [(12, 8), (24, 9)])
    a = find_nostril_minima(img, origin=(0.0, 0.0))
    b = find_nostril_minima(img, origin=(100.0, 50.0))
    assert b.n1[0] == pytest.approx(a.n1[0] + 100.0, abs=1e-9)
    assert b.n1[1] == pytest.approx(a.n1[1] + 50.0, abs=1e-9)


def test_shallow_dips_rejected_by_prominence():
    img = disk_window(36, 18, [(12, 8), (24, 9)], fg=165.0)  # 5 below skin
    with pytest.raises(NostrilsNotFound):
        find_nostril_minima(img, origin=(0.0, 0.0), prominence=10.0)


# nostril_geometry

def test_geometry_horizontal_pair():
    g = nostril_geometry(NostrilPair((10.0, 20.0), (20.0, 20.0)))
    assert g.d_n == pytest.approx(10.0)
    assert g.c_n == (15.0, 20.0)
    assert g.a_n == 0.0


def test_geometry_diagonal_pair():
    g = nostril_geometry(NostrilPair((10.0, 20.0), (20.0, 30.0)))
    assert g.d_n == pytest.approx(math.sqrt(200.0), rel=1e-12)
    assert g.a_n == pytest.approx(math.pi / 4.0, rel=1e-12)


def test_geometry_swap_invariant():
    a = nostril_geometry(NostrilPair((10.0, 20.0), (20.0, 20.0)))
    b = nostril_geometry(NostrilPair((20.0, 20.0), (10.0, 20.0)))
    assert a == b


def test_degenerate_pair_rejected():
    with pytest.raises(DegeneratePair):
        nostril_geometry(NostrilPair((5.0, 5.0), (5.0, 5.0)))


@given(st.floats(-100, 100), st.floats(-100, 100),
       st.floats(-100, 100), st.floats(-100, 100))
@settings(max_examples=200, deadline=None)
def test_geometry_swap_property(x1, y1, x2, y2):
    if (x1, y1) == (x2, y2):
        return
    a = nostril_geometry(NostrilPair((x1, y1), (x2, y2)))
    b = nostril_geometry(NostrilPair((x2, y2), (x1, y1)))
    assert a == b
    assert -math.pi / 2 < a.a_n <= math.pi / 2


# predict_center

def test_predict_zero_gain():
    assert predict_center((12.0, 11.0), (10.0, 10.0), 0.0) == (12.0, 11.0)


def test_predict_unit_gain():
    assert predict_center((12.0, 11.0), (10.0, 10.0), 1.0) == (14.0, 12.0)


def test_predict_zero_velocity():
    for a in (0.0, 0.3, 1.0):
        assert predict_center((7.0, 9.0), (7.0, 9.0), a) == (7.0, 9.0)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6),
       st.floats(-1e6, 1e6), st.floats(-1e6, 1e6),
       st.floats(0.0, 1.0))
@settings(max_examples=300, deadline=None)
def test_predict_exact_arithmetic(cx, cy, px_, py_, alpha):
    out = predict_center((cx, cy), (px_, py_), alpha)
    assert out[0] == cx + alpha * (cx - px_)
    assert out[1] == cy + alpha * (cy - py_)


# mouth_window and rotated extraction

def test_mouth_window_constants():
    g = NostrilGeometry(d_n=40.0, c_n=(100.0, 100.0), a_n=0.0)
    r = mouth_window(g)
    assert r.center == pytest.approx((100.0, 160.0))
    assert r.half_width == pytest.approx(40.0)
    assert r.half_height == pytest.approx(30.0)
    assert r.angle == 0.0


def test_mouth_window_rotated_corners():
    th = math.pi / 6.0
    g = NostrilGeometry(d_n=40.0, c_n=(100.0, 100.0), a_n=th)
    r = mouth_window(g)
    # the window center is displaced along the rotated face-down direction
    want_center = (100.0 - 60.0 * math.sin(th), 100.0 + 60.0 * math.cos(th))
    assert r.center == pytest.approx(want_center)
    got = region_corners(r)
    cos, sin = math.cos(th), math.sin(th)
    for u, v in ((-40, -30), (40, -30), (40, 30), (-40, 30)):
        want = (want_center[0] + u * cos - v * sin,
                want_center[1] + u * sin + v * cos)
        assert any(np.allclose(c, want, atol=1e-9) for c in got)


def test_extract_matches_integer_crop():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
    x0, x1, y0, y1 = 4, 14, 3, 9
    region = RotatedRegion(center=((x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0),
                           half_width=(x1 - x0) / 2.0,
                           half_height=(y1 - y0) / 2.0, angle=0.0)
    sub = extract_region(img, region)
    assert sub.shape == (y1 - y0, x1 - x0, 3)
    assert np.allclose(sub, img[y0:y1, x0:x1].astype(np.float64), atol=1e-9)


def test_extract_bilinear_midpoint():
    img = np.zeros((2, 2, 3))
    img[0, 0] = 0.0
    img[0, 1] = 100.0
    img[1, 0] = 50.0
    img[1, 1] = 150.0
    region = RotatedRegion(center=(0.5, 0.5), half_width=0.5,
                           half_height=0.5, angle=0.0)
    sub = extract_region(img, region)
    assert sub.shape == (1, 1, 3)
    assert sub[0, 0, 0] == pytest.approx(75.0)


def test_extract_out_of_bounds_black():
    img = np.full((10, 10, 3), 255, dtype=np.uint8)
    region = RotatedRegion(center=(5.0, 8.0), half_width=3.0,
                           half_height=3.0, angle=0.0)
    sub = extract_region(img, region)
    # rows sample y = 5.5 .. 10.5; anything past the last pixel row (9)
    # reads as black, with no partial fade at the cut
    assert sub.shape == (6, 6, 3)
    assert np.all(sub[:4] == 255.0)
    assert np.all(sub[4:] == 0.0)


def test_extract_rotation_ninety():
    # a vertical gradient read through a 90 degree window becomes horizontal
    img = np.zeros((9, 9, 3))
    for y in range(9):
        img[y, :, :] = 10.0 * y
    region = RotatedRegion(center=(4.0, 4.0), half_width=2.0,
                           half_height=2.0, angle=math.pi / 2.0)
    sub = extract_region(img, region)
    # local +u axis maps to image +y
    assert np.allclose(sub[:, 3, 0] - sub[:, 1, 0], 20.0, atol=1e-9)
    assert np.allclose(sub[3, :, 0], sub[1, :, 0], atol=1e-9)


# synthetic generator self-checks

def test_generator_paints_truth():
    spec = FaceSpec(c_n=(320.0, 130.0), d_n=44.0, roll=0.0, mouth_open=0.6)
    frame = render_face(spec)
    assert frame.width == 640 and frame.height == 480
    n1, n2 = nostril_truth(spec)
    for nx, ny in (n1, n2):
        px = frame.pixels[int(round(ny)), int(round(nx))]
        assert int(px[0]) < 80    # nostril pit is dark
    edge = frame.pixels[5, 5]
    assert int(edge[0]) > 150     # skin background


def test_generator_rolled_truth():
    spec = FaceSpec(c_n=(300.0, 140.0), d_n=50.0, roll=math.radians(12.0))
    n1, n2 = nostril_truth(spec)
    g = nostril_geometry(NostrilPair(n1, n2))
    assert g.d_n == pytest.approx(50.0, rel=1e-9)
    assert g.a_n == pytest.approx(math.radians(12.0), rel=1e-9)
    frame = render_face(spec)
    for nx, ny in (n1, n2):
        assert int(frame.pixels[int(round(ny)), int(round(nx))][0]) < 80


def test_generator_closed_mouth_has_no_cavity():
    spec = FaceSpec(c_n=(320.0, 130.0), d_n=44.0, mouth_open=0.0)
    frame = render_face(spec)
    from warble.segment import SegmentationThresholds, segment_mouth
    mask = segment_mouth(frame.pixels, SegmentationThresholds())
    assert mask.sum() < 20   # no cavity; lip line may leave a few pixels


def test_generator_open_mouth_segments():
    spec = FaceSpec(c_n=(320.0, 130.0), d_n=44.0, mouth_open=0.8)
    frame = render_face(spec)
    from warble.segment import SegmentationThresholds, segment_mouth
    mask = segment_mouth(frame.pixels, SegmentationThresholds())
    assert mask.sum() > 300


# initialize

def test_initialize_on_synthetic_face():
    spec = FaceSpec(c_n=(320.0, 130.0), d_n=44.0)
    state = initialize(render_face(spec))
    n1, n2 = nostril_truth(spec)
    assert abs(state.pair.n1[0] - n1[0]) < 2.0
    assert abs(state.pair.n1[1] - n1[1]) < 2.0
    assert abs(state.pair.n2[0] - n2[0]) < 2.0
    assert abs(state.pair.n2[1] - n2[1]) < 2.0
    assert state.geometry.d_n == pytest.approx(44.0, abs=3.0)
    assert abs(state.geometry.a_n) < 0.05
    assert state.c_prev == state.geometry.c_n
    assert state.frames_since_lock == 0


def test_initialize_outside_window_fails():
    # nostrils below the top-central init band
    spec = FaceSpec(c_n=(320.0, 300.0), d_n=44.0, mouth_open=0.0)
    with pytest.raises(NostrilsNotFound):
        initialize(render_face(spec))


def test_initialize_with_click_recentres_window():
    spec = FaceSpec(c_n=(320.0, 300.0), d_n=44.0, mouth_open=0.0)
    frame = render_face(spec)
    state = initialize(frame, click=(320, 300))
    assert state.geometry.c_n[1] == pytest.approx(300.0, abs=2.0)


def test_initialize_then_track_consistent():
    spec = FaceSpec(c_n=(320.0, 130.0), d_n=44.0)
    frame = render_face(spec)
    state = initialize(frame)
    state2 = track_step(frame, state)
    assert state2.geometry.c_n[0] == pytest.approx(state.geometry.c_n[0],
                                                   abs=0.5)
    assert state2.geometry.c_n[1] == pytest.approx(state.geometry.c_n[1],
                                                   abs=0.5)
    assert state2.frames_since_lock == 1


# track_step behavior on sequences

def run_track(specs, state=None, params=None):
    params = params or VisionParams()
    frames = [render_face(s, seq=i) for i, s in enumerate(specs)]
    if state is None:
        state = initialize(frames[0], params=params)
        frames = frames[1:]
    states = [state]
    for f in frames:
        state = track_step(f, state, params=params)
        states.append(state)
    return states


def test_track_static_face_no_drift():
    specs = [FaceSpec(c_n=(320.0, 130.0), d_n=44.0)] * 11
    states = run_track(specs)
    first, last = states[1], states[-1]
    assert abs(last.geometry.c_n[0] - first.geometry.c_n[0]) < 0.5
    assert abs(last.geometry.c_n[1] - first.geometry.c_n[1]) < 0.5
    assert abs(last.geometry.a_n - first.geometry.a_n) < 0.01


def test_track_rightward_motion_small_lag():
    specs = [FaceSpec(c_n=(250.0 + 2.0 * i, 130.0), d_n=44.0)
             for i in range(16)]
    states = run_track(specs)
    true_cx = 250.0 + 2.0 * 15
    assert abs(states[-1].geometry.c_n[0] - true_cx) < 1.0


def test_track_rotation_followed():
    specs = [FaceSpec(c_n=(320.0, 130.0), d_n=44.0,
                      roll=math.radians(min(12.0, 1.5 * i)))
             for i in range(16)]
    states = run_track(specs)
    assert states[-1].geometry.a_n == pytest.approx(math.radians(12.0),
                                                    abs=0.03)


def test_track_white_frame_lost():
    spec = FaceSpec(c_n=(320.0, 130.0), d_n=44.0)
    state = initialize(render_face(spec))
    white = Frame(width=640, height=480,
                  pixels=np.full((480, 640, 3), 255, dtype=np.uint8),
                  seq=1, timestamp=1 / 30.0)
    with pytest.raises(TrackingLost):
        track_step(white, state)


def test_track_shrinking_face_lost():
    # smoothed spacing leaves the [0.5, 2] x d_init lock band
    spec0 = FaceSpec(c_n=(320.0, 130.0), d_n=44.0)
    state = initialize(render_face(spec0))
    lost = False
    for d in (30.0, 20.0, 14.0, 10.0, 8.0):
        f = render_face(FaceSpec(c_n=(320.0, 130.0), d_n=d))
        try:
            state = track_step(f, state)
        except TrackingLost:
            lost = True
            break
    assert lost


def test_track_window_leaving_image_lost():
    specs = [FaceSpec(c_n=(250.0 - 4.0 * i, 130.0), d_n=44.0, mouth_open=0.3)
             for i in range(70)]
    frames = [render_face(s, seq=i) for i, s in enumerate(specs)]
    state = initialize(frames[0])
    ok = 0
    lost = False
    for f in frames[1:]:
        try:
            state = track_step(f, state)
            ok += 1
        except TrackingLost:
            lost = True
            break
    assert lost
    assert ok >= 25


def test_track_error_stays_small_on_gentle_motion():
    specs = []
    for i in range(40):
        t = i / 39.0
        specs.append(FaceSpec(
            c_n=(300.0 + 40.0 * math.sin(2 * math.pi * t),
                 130.0 + 10.0 * math.sin(4 * math.pi * t)),
            d_n=44.0,
            roll=math.radians(10.0) * math.sin(2 * math.pi * t)))
    frames = [render_face(s, seq=i) for i, s in enumerate(specs)]
    state = initialize(frames[0])
    errs = []
    for f, s in zip(frames[1:], specs[1:]):
        state = track_step(f, state)
        n1, n2 = nostril_truth(s)
        true_c = (0.5 * (n1[0] + n2[0]), 0.5 * (n1[1] + n2[1]))
        errs.append(math.hypot(state.geometry.c_n[0] - true_c[0],
                               state.geometry.c_n[1] - true_c[1]))
    assert max(errs) < 2.0
