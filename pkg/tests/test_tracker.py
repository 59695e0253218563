import logging

import numpy as np
import pytest

from conftest import zero_mean_model
from oracles import adjugate_mahalanobis, brute_force_place, nine_maps
from posetrack.errors import AnnotationMismatch, MissingGroundTruthForReinit, WindowFullyOutsideImage
from posetrack.imaging import AnnulusGeometry, build_integral, extract_descriptors
from posetrack.models import GaussianParams, PoseModel, train
from posetrack.skeleton import SkeletonTopology, full_body_14, traversal_order
from posetrack.synth import MotionScript, synth_clip
from posetrack.tracker import (
    TrackerConfig,
    TrackState,
    initial_state,
    score_window,
    track_frame,
    track_part,
    track_root,
    track_video,
    window_candidates,
)


def smooth_texture(rng, h, w):
    img = rng.random((h, w, 3))
    # light box blur so appearance varies smoothly but stays distinctive
    k = np.ones(3) / 3
    for ax in (0, 1):
        img = np.apply_along_axis(lambda r: np.convolve(r, k, mode="same"), ax, img)
    return img


def test_window_candidates_clip_and_order():
    c = window_candidates((1, 1), 2, (10, 10))
    assert c.tolist()[:4] == [[0, 0], [1, 0], [2, 0], [3, 0]]
    assert len(c) == 16
    assert len(window_candidates((50, 50), 3, (10, 10))) == 0


def test_root_identical_frames_stays(rng, chain3):
    img = smooth_texture(rng, 40, 40)
    model = zero_mean_model(chain3)
    ii = build_integral(img)
    state = initial_state(ii, [[20, 20], [20, 26], [20, 32]], model)
    pos, sc = track_root(ii, state, model, TrackerConfig(window_radius=4))
    assert pos == (20, 20)
    assert sc.appearance == 0 and sc.temporal == 0 and sc.total == 0


def test_root_translated_texture_no_temporal(rng, chain3):
    img = rng.random((60, 60, 3))
    model = zero_mean_model(chain3, lambda1=0.0)
    state = initial_state(build_integral(img), [[30, 30], [30, 36], [30, 42]], model)
    moved = np.roll(img, (-2, 4), axis=(0, 1))
    pos, sc = track_root(build_integral(moved), state, model, TrackerConfig(lambda1=0.0, window_radius=6))
    assert pos == (34, 28)
    assert sc.appearance == pytest.approx(0, abs=1e-12)


def _random_case(rng, topo, radius=3):
    h, w = 24, 26
    img0, img1 = rng.random((h, w, 3)), rng.random((h, w, 3))
    g = AnnulusGeometry.square(2, 2)
    temporal = [GaussianParams(rng.normal(size=2), np.diag(rng.uniform(1, 6, 2))) for _ in topo.parts]
    spatial = [None if p is None else [GaussianParams(rng.normal(size=2) * 6, np.diag(rng.uniform(2, 8, 2)))
                                       for _ in range(rng.integers(1, 4))] for p in topo.parent]
    model = PoseModel(topo, temporal, spatial, geometry=g, window_radius=radius)
    pose = np.stack([rng.integers(0, w, topo.n_parts), rng.integers(0, h, topo.n_parts)], axis=1)
    state = initial_state(build_integral(img0), pose, model)
    return img1, model, state


def test_root_matches_brute_force(rng, chain3):
    for _ in range(5):
        img, model, state = _random_case(rng, chain3)
        cfg = TrackerConfig(lambda1=0.7, window_radius=3)
        pos, sc = track_root(build_integral(img), state, model, cfg)
        r = chain3.root_index
        want, total = brute_force_place(
            nine_maps(img), state.templates[r], tuple(state.pose[r].astype(int)), 3, img.shape[:2],
            model.geometry, model.temporal[r], 0.7,
        )
        assert pos == want
        assert sc.total == pytest.approx(total, rel=1e-9)


def test_part_matches_brute_force(rng, chain3):
    for _ in range(5):
        img, model, state = _random_case(rng, chain3)
        cfg = TrackerConfig(lambda1=0.7, lambda2=0.2, window_radius=3)
        parent = (int(rng.integers(26)), int(rng.integers(24)))
        pos, sc = track_part(1, build_integral(img), state, parent, model, cfg)
        want, total = brute_force_place(
            nine_maps(img), state.templates[1], tuple(state.pose[1].astype(int)), 3, img.shape[:2],
            model.geometry, model.temporal[1], 0.7, model.spatial[1], parent, 0.2,
        )
        assert pos == want
        assert sc.total == pytest.approx(total, rel=1e-9)


def test_exact_tie_prefers_nearest_then_row_major(chain3):
    # flat image, no temporal weight: every candidate totals exactly 0
    img = np.full((30, 30, 3), 0.5)
    model = zero_mean_model(chain3, lambda1=0.0, lambda2=0.0)
    ii = build_integral(img)
    state = initial_state(ii, [[15, 15], [15, 20], [15, 25]], model)
    pos, _ = track_root(ii, state, model, TrackerConfig(lambda1=0.0, lambda2=0.0, window_radius=3))
    assert pos == (15, 15)
    # previous position left of the image: the nearest surviving candidate wins
    state.pose[0] = [-2, 15]
    pos, _ = track_root(ii, state, model, TrackerConfig(lambda1=0.0, lambda2=0.0, window_radius=3))
    assert pos == (0, 15)


def test_huge_lambda2_follows_spatial_model(rng, chain3):
    img = rng.random((40, 40, 3))
    g1 = GaussianParams([5.0, 3.0], [[2.0, 0.5], [0.5, 1.0]])
    model = zero_mean_model(chain3)
    model.spatial[1] = [g1]
    ii = build_integral(img)
    state = initial_state(ii, [[20, 20], [22, 22], [24, 24]], model)
    parent = (18, 19)
    pos, _ = track_part(1, ii, state, parent, model, TrackerConfig(lambda2=1e9, window_radius=4))
    cands = window_candidates(state.pose[1], 4, (40, 40))
    best = min(cands.tolist(), key=lambda c: adjugate_mahalanobis((c[0] - parent[0], c[1] - parent[1]), g1.mean, g1.covariance))
    assert pos == tuple(best)


def test_lambda2_zero_ignores_spatial_model(rng, chain3):
    img0, img1 = rng.random((40, 40, 3)), rng.random((40, 40, 3))
    model = zero_mean_model(chain3)
    ii0, ii1 = build_integral(img0), build_integral(img1)
    state = initial_state(ii0, [[20, 20], [22, 22], [24, 24]], model)
    cfg = TrackerConfig(lambda2=0.0, window_radius=4)
    a, _ = track_part(1, ii1, state, (10, 10), model, cfg)
    model.spatial[1] = [GaussianParams([30.0, -7.0], 0.01 * np.eye(2))]
    b, _ = track_part(1, ii1, state, (10, 10), model, cfg)
    assert a == b


def test_window_outside_image(chain3):
    model = zero_mean_model(chain3)
    ii = build_integral(np.full((20, 20, 3), 0.5))
    state = TrackState(np.array([[100.0, 100.0], [5, 5], [6, 6]]), np.zeros((3, 27)))
    with pytest.raises(WindowFullyOutsideImage):
        track_root(ii, state, model, TrackerConfig(window_radius=4))


def test_clipped_window_warns(chain3, caplog):
    model = zero_mean_model(chain3)
    ii = build_integral(np.full((20, 20, 3), 0.5))
    state = TrackState(np.array([[-4.0, -4.0], [5, 5], [6, 6]]), np.zeros((3, 27)))
    with caplog.at_level(logging.WARNING):
        track_root(ii, state, model, TrackerConfig(window_radius=4))
    assert "clipped to 1 candidates" in caplog.text


def test_frame_identical_frames_unchanged(rng, chain3):
    img = smooth_texture(rng, 40, 40)
    model = zero_mean_model(chain3)
    ii = build_integral(img)
    state = initial_state(ii, [[20, 14], [20, 20], [20, 26]], model)
    # make the spatial clusters sit at the true offsets so every term is 0
    model.spatial[1] = [GaussianParams([0.0, 6.0], np.eye(2))]
    model.spatial[2] = [GaussianParams([0.0, 6.0], np.eye(2))]
    new = track_frame(img, state, model, TrackerConfig(window_radius=4))
    np.testing.assert_array_equal(new.pose, state.pose)
    np.testing.assert_array_equal(new.templates, state.templates)
    assert new.frame_index == 1
    assert all(s.total == 0 for s in new.scores)


def test_frame_is_composition_of_part_calls(rng):
    topo = SkeletonTopology.from_names(["r", "x", "y", "z"], ["", "r", "r", "y"])
    img, model, state = _random_case(rng, topo)
    cfg = TrackerConfig(window_radius=3)
    ii = build_integral(img)
    new = track_frame(img, state, model, cfg)
    pose = state.pose.copy()
    for i in traversal_order(topo):
        p = topo.parent[i]
        if p is None:
            pos, _ = track_root(ii, state, model, cfg)
        else:
            pos, _ = track_part(i, ii, state, pose[p], model, cfg)
        pose[i] = pos
    np.testing.assert_array_equal(new.pose, pose)


def test_cost_evaluation_count(rng):
    topo = SkeletonTopology.from_names(["r", "x", "y"], ["", "r", "x"])
    img, model, state = _random_case(rng, topo)
    state.pose[:] = [[12, 12], [12, 12], [12, 12]]
    new = track_frame(img, state, model, TrackerConfig(window_radius=3))
    n_clusters = [0] + [len(model.spatial[i]) for i in (1, 2)]
    assert new.cost_evaluations == sum(49 * (1 + n) for n in n_clusters)


def test_score_decomposition_and_optimality(rng, chain3):
    img, model, state = _random_case(rng, chain3)
    cfg = TrackerConfig(window_radius=3)
    ii = build_integral(img)
    s = score_window(1, ii, state, model, cfg, parent_position=(10, 10))
    pos, sc = track_part(1, ii, state, (10, 10), model, cfg)
    assert sc.total == pytest.approx(sc.appearance + 0.7 * sc.temporal + 0.2 * sc.spatial, rel=1e-12)
    assert not (s.total < sc.total).any()
    assert (np.abs(np.subtract(pos, state.pose[1])) <= 3).all()


def test_template_update_uses_chosen_appearance(rng, chain3):
    img, model, state = _random_case(rng, chain3)
    new = track_frame(img, state, model, TrackerConfig(window_radius=3))
    feats = extract_descriptors(build_integral(img), new.pose, model.geometry)
    for i, sc in enumerate(new.scores):
        a = np.exp(-sc.appearance)
        np.testing.assert_allclose(new.templates[i], a * feats[i] + (1 - a) * state.templates[i], rtol=1e-12)


def test_video_single_frame(rng, chain3):
    model = zero_mean_model(chain3)
    first = np.array([[10.3, 10.0], [10, 16], [10, 22]])
    out = track_video([rng.random((30, 30, 3))], first, model)
    assert len(out) == 1
    np.testing.assert_array_equal(out[0].positions, first)


def test_video_requires_full_first_pose(rng, chain3):
    model = zero_mean_model(chain3)
    with pytest.raises(AnnotationMismatch, match="missing c"):
        track_video([rng.random((30, 30, 3))], [[1, 1], [2, 2], [np.nan, np.nan]], model)


def test_video_deterministic():
    script = MotionScript(frames=6, translation=(2.0, 0.0), width=160, height=200)
    frames, gt = synth_clip(script)
    model = train([gt], full_body_14(), window_radius=6)
    a = track_video(frames, gt[0], model)
    b = track_video(frames, gt[0], model)
    for p, q in zip(a, b):
        assert p.positions.tobytes() == q.positions.tobytes()


def test_reinit_resets_to_ground_truth(rng, chain3):
    model = zero_mean_model(chain3, window_radius=2)
    frames = [np.full((30, 30, 3), 0.5) for _ in range(130)]
    gt = np.array([[[10 + 0.1 * t, 10], [10, 16], [10, 22]] for t in range(130)])
    cfg = TrackerConfig(window_radius=2, reinit_interval=60)
    out = track_video(frames, gt[0], model, cfg, ground_truth=gt)
    assert len(out) == 130
    np.testing.assert_array_equal(out[60].positions, gt[60])
    np.testing.assert_array_equal(out[120].positions, gt[120])
    with pytest.raises(MissingGroundTruthForReinit):
        track_video(frames, gt[0], model, cfg)
    with pytest.raises(MissingGroundTruthForReinit):
        track_video(frames, gt[0], model, cfg, ground_truth=gt[:100])
