import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import adjugate_mahalanobis
from posetrack.errors import CorruptFile, NoClusters, NoSamples, PartNeverObserved, SchemaVersionMismatch
from posetrack.imaging import AnnulusGeometry
from posetrack.models import (
    GaussianParams,
    fit_gaussian,
    fit_spatial,
    fit_temporal,
    kmeans,
    load_model,
    mahalanobis,
    save_model,
    spatial_cost,
    temporal_samples,
    train,
)
from posetrack.skeleton import SkeletonTopology, full_body_14


def random_spd(rng):
    a = rng.normal(size=(2, 2))
    return a @ a.T + 0.1 * np.eye(2)


def test_fit_two_points():
    g = fit_gaussian([(1, 1), (-1, -1)], eps=1e-6)
    np.testing.assert_array_equal(g.mean, [0, 0])
    np.testing.assert_allclose(g.covariance, [[1 + 1e-6, 1], [1, 1 + 1e-6]], rtol=1e-15)


def test_fit_single_sample():
    g = fit_gaussian([(3, 4)], eps=1e-4)
    np.testing.assert_array_equal(g.mean, [3, 4])
    np.testing.assert_array_equal(g.covariance, 1e-4 * np.eye(2))


def test_fit_no_samples():
    with pytest.raises(NoSamples):
        fit_gaussian(np.empty((0, 2)))


def test_fit_recovers_mean():
    rng = np.random.default_rng(7)
    mu = np.array([3.0, -2.0])
    cov = np.array([[4.0, 1.5], [1.5, 2.0]])
    x = rng.multivariate_normal(mu, cov, size=500)
    g = fit_gaussian(x)
    sd = np.sqrt(np.diag(cov))
    assert (np.abs(g.mean - mu) < 3 * sd / np.sqrt(500)).all()


def test_fit_inverse_consistent(rng):
    g = fit_gaussian(rng.normal(size=(30, 2)))
    np.testing.assert_allclose(g.inverse_covariance @ g.covariance, np.eye(2), atol=1e-8)


@given(arrays(np.float64, (8, 2), elements=st.floats(-1e3, 1e3)))
def test_fit_eigenvalues_floor(x):
    g = fit_gaussian(x, eps=1e-4)
    assert np.linalg.eigvalsh(g.covariance).min() >= 1e-4 * (1 - 1e-6)


def test_mahalanobis_examples():
    g = GaussianParams([2.0, 5.0], np.eye(2))
    assert mahalanobis([2.0, 5.0], g) == 0
    assert mahalanobis([3.0, 5.0], g) == 1


def test_mahalanobis_adjugate_oracle(rng):
    for _ in range(50):
        cov = random_spd(rng)
        mean = rng.normal(size=2) * 5
        e = rng.normal(size=2) * 5
        want = adjugate_mahalanobis(e, mean, cov)
        assert mahalanobis(e, GaussianParams(mean, cov)) == pytest.approx(want, rel=1e-9)


def test_mahalanobis_vectorised(rng):
    g = GaussianParams(rng.normal(size=2), random_spd(rng))
    e = rng.normal(size=(7, 3, 2))
    got = mahalanobis(e, g)
    assert got.shape == (7, 3)
    assert got[4, 1] == pytest.approx(mahalanobis(e[4, 1], g))


@given(
    st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
    st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
    st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
)
def test_mahalanobis_translation_invariant(e, mean, shift):
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    a = mahalanobis(e, GaussianParams(mean, cov))
    b = mahalanobis(np.add(e, shift), GaussianParams(np.add(mean, shift), cov))
    assert b == pytest.approx(a, rel=1e-6, abs=1e-6)


def test_mahalanobis_zero_only_at_mean():
    g = GaussianParams([1.0, 1.0], [[1e-4, 0], [0, 1e-4]])
    assert mahalanobis([1.0, 1.0], g) == 0
    assert mahalanobis([1.0, 1.0 + 1e-6], g) > 0


def test_kmeans_k1_is_mean(rng):
    x = rng.normal(size=(40, 2))
    c, labels = kmeans(x, 1)
    np.testing.assert_allclose(c[0], x.mean(axis=0))
    assert (labels == 0).all()


def test_kmeans_two_blobs(rng):
    a = rng.normal(size=(30, 2)) + [0, 0]
    b = rng.normal(size=(30, 2)) + [100, 0]
    x = np.concatenate([a, b])
    c, labels = kmeans(x, 2)
    # nearest-centroid oracle
    d = np.array([[np.hypot(*(p - q)) for q in c] for p in x])
    assert (labels == d.argmin(axis=1)).all()
    assert len(set(labels[:30])) == 1 and len(set(labels[30:])) == 1
    assert labels[0] != labels[30]


def test_kmeans_identical_points():
    c, labels = kmeans(np.ones((10, 2)), 2)
    assert len(c) == 1 and (labels == 0).all()


def test_kmeans_fewer_points_than_k(caplog):
    c, labels = kmeans([(0, 0), (5, 5)], 6)
    assert len(c) == 2
    assert "exceeds point count" in caplog.text


def test_kmeans_deterministic(rng):
    x = rng.normal(size=(100, 2)) * 10
    a = kmeans(x, 6)
    b = kmeans(x, 6)
    np.testing.assert_array_equal(a[0], b[0])
    c = kmeans(x, 6, seed=3)
    d = kmeans(x, 6, seed=3)
    np.testing.assert_array_equal(c[1], d[1])


@settings(max_examples=40)
@given(arrays(np.float64, (25, 2), elements=st.floats(-100, 100)), st.integers(1, 6))
def test_kmeans_inertia_non_increasing(x, k):
    hist = []
    c, labels = kmeans(x, k, history=hist)
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))
    assert len(np.unique(labels)) == len(c)  # no empty cluster


def test_spatial_cost_examples(rng):
    clusters = [GaussianParams(rng.normal(size=2) * 10, random_spd(rng)) for _ in range(6)]
    assert spatial_cost(clusters[3].mean, clusters) == 0
    e = rng.normal(size=2) * 10
    assert spatial_cost(e, clusters[:1]) == mahalanobis(e, clusters[0])
    want = min(adjugate_mahalanobis(e, g.mean, g.covariance) for g in clusters)
    assert spatial_cost(e, clusters) == pytest.approx(want, rel=1e-9)
    with pytest.raises(NoClusters):
        spatial_cost(e, [])


def test_spatial_cost_is_lower_bound(rng):
    clusters = [GaussianParams(rng.normal(size=2) * 10, random_spd(rng)) for _ in range(6)]
    e = rng.normal(size=(50, 2)) * 10
    c = spatial_cost(e, clusters)
    for g in clusters:
        assert (c <= mahalanobis(e, g)).all()


# --- fitting on clips ---

def two_part():
    return SkeletonTopology.from_names(["a", "b"], ["", "a"])


def test_temporal_stationary():
    clip = np.tile([[10.0, 10.0], [12.0, 30.0]], (5, 1, 1))
    for g in fit_temporal([clip], two_part()):
        np.testing.assert_array_equal(g.mean, [0, 0])


def test_temporal_translating():
    base = np.array([[10.0, 10.0], [12.0, 30.0]])
    clip = np.stack([base + [3 * t, 0] for t in range(6)])
    for g in fit_temporal([clip], two_part()):
        np.testing.assert_allclose(g.mean, [3, 0])


def test_temporal_sample_counts_skip_absent(rng):
    topo = two_part()
    clips = [rng.normal(size=(rng.integers(2, 9), 2, 2)) for _ in range(4)]
    for c in clips:
        c[rng.random(len(c)) < 0.3, 1] = np.nan
    samples = temporal_samples(clips, topo)
    for i in range(2):
        want = 0
        for c in clips:
            for t in range(1, len(c)):
                if np.isfinite(c[t, i]).all() and np.isfinite(c[t - 1, i]).all():
                    want += 1
        assert len(samples[i]) == want


def test_temporal_part_never_observed():
    clip = np.zeros((3, 2, 2))
    clip[:, 1] = np.nan
    with pytest.raises(PartNeverObserved, match="'b'"):
        fit_temporal([clip], two_part())


def test_spatial_rigid():
    base = np.array([[10.0, 10.0], [14.0, 30.0]])
    clip = np.stack([base + [2 * t, t] for t in range(8)])
    sp = fit_spatial([clip], two_part(), k=6, eps=1e-4)
    assert sp[0] is None
    assert len(sp[1]) == 1
    np.testing.assert_allclose(sp[1][0].mean, [4, 20])
    np.testing.assert_allclose(sp[1][0].covariance, 1e-4 * np.eye(2), atol=1e-12)


def test_spatial_six_clusters(rng):
    offsets = rng.normal(size=(60, 2)) * 20
    clip = np.zeros((60, 2, 2))
    clip[:, 1] = offsets
    sp = fit_spatial([clip], two_part(), k=6)
    assert len(sp[1]) == 6


def test_spatial_two_poses():
    up, down = np.array([0.0, -20.0]), np.array([15.0, 12.0])
    clip = np.zeros((20, 2, 2))
    clip[:, 0] = [50, 50]
    for t in range(20):
        clip[t, 1] = clip[t, 0] + (up if t % 2 else down)
    sp = fit_spatial([clip], two_part(), k=2)
    means = sorted(tuple(g.mean) for g in sp[1])
    np.testing.assert_allclose(means, sorted([tuple(up), tuple(down)]), atol=1.0)


def make_model(rng):
    topo = full_body_14()
    clip = rng.normal(size=(40, 14, 2)) * 5 + np.arange(14)[None, :, None] * 10
    return train([clip], topo, k=3, geometry=AnnulusGeometry.square(7, 3), lambda1=0.5, lambda2=0.25, window_radius=9)


def test_model_round_trip_bit_exact(tmp_path, rng):
    m = make_model(rng)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back == m
    for a, b in zip(m.temporal, back.temporal):
        assert a.mean.tobytes() == b.mean.tobytes()
        assert a.inverse_covariance.tobytes() == b.inverse_covariance.tobytes()


def test_model_schema_mismatch(tmp_path, rng):
    d = make_model(rng).to_dict()
    d["schema_version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(SchemaVersionMismatch):
        load_model(tmp_path / "m.json")


def test_model_corrupt(tmp_path, rng):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(CorruptFile):
        load_model(tmp_path / "bad.json")
    d = make_model(rng).to_dict()
    del d["temporal"]
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(CorruptFile):
        load_model(tmp_path / "m.json")
