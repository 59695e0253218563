"""Gaussian displacement models learned from annotated clips.

Two kinds of model are fitted:

* temporal: one Gaussian per part over frame-to-frame displacement;
* spatial: for every non-root part, k-means on its offset from the parent,
  then one Gaussian per cluster.  The spatial cost of an offset is the
  smallest Mahalanobis distance over that part's clusters.

Clips are ``(T, n_parts, 2)`` arrays with NaN rows for absent parts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptFile, NoClusters, NoSamples, PartNeverObserved, SchemaVersionMismatch
from .imaging import AnnulusGeometry
from .skeleton import SkeletonTopology

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-4
SCHEMA_VERSION = 1
MAX_KMEANS_ITER = 100


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mean: np.ndarray
    covariance: np.ndarray
    inverse_covariance: np.ndarray = field(default=None)
    n_samples: int = 0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        cov = np.asarray(self.covariance, dtype=np.float64).reshape(2, 2)
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        inv = self.inverse_covariance
        inv = np.linalg.inv(cov) if inv is None else np.asarray(inv, dtype=np.float64).reshape(2, 2)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "inverse_covariance", inv)

    def __eq__(self, other):
        if not isinstance(other, GaussianParams):
            return NotImplemented
        return (
            np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
            and np.array_equal(self.inverse_covariance, other.inverse_covariance)
            and self.n_samples == other.n_samples
        )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "covariance": self.covariance.ravel().tolist(),
            "inverse_covariance": self.inverse_covariance.ravel().tolist(),
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianParams":
        return cls(
            np.array(d["mean"], dtype=np.float64),
            np.array(d["covariance"], dtype=np.float64).reshape(2, 2),
            np.array(d["inverse_covariance"], dtype=np.float64).reshape(2, 2),
            int(d.get("n_samples", 0)),
        )


def fit_gaussian(samples, eps: float = DEFAULT_EPSILON) -> GaussianParams:
    """Maximum-likelihood mean and covariance (divisor N), plus ``eps`` on the diagonal."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if len(x) == 0:
        raise NoSamples("cannot fit a Gaussian to zero samples")
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / len(x)
    cov = 0.5 * (cov + cov.T) + eps * np.eye(2)
    return GaussianParams(mean, cov, n_samples=len(x))


def mahalanobis(e, g: GaussianParams):
    """Squared Mahalanobis distance ``(e - mean)^T inv(cov) (e - mean)``.

    ``e`` may be a single 2-vector or an ``(..., 2)`` array.
    """
    d = np.asarray(e, dtype=np.float64) - g.mean
    q = np.einsum("...i,ij,...j->...", d, g.inverse_covariance, d)
    # the quadratic form of an SPD matrix is non-negative; clamp round-off
    return np.maximum(q, 0.0)


def spatial_cost(e, clusters: Sequence[GaussianParams]):
    """Smallest Mahalanobis distance of ``e`` over the cluster Gaussians."""
    if not clusters:
        raise NoClusters("spatial cost needs at least one cluster")
    costs = np.stack([mahalanobis(e, g) for g in clusters])
    return costs.min(axis=0)


def _inertia(points, centroids, labels) -> float:
    return float(((points - centroids[labels]) ** 2).sum())


def kmeans(points, k: int, seed: int | None = None, history: list | None = None):
    """Lloyd's k-means with farthest-point seeding.

    The first centroid is the point nearest the data mean, unless ``seed``
    is given, in which case it is drawn with that seed.  Each further centroid
    is the point farthest from those chosen so far.  Ties go to the lowest
    index.  Clusters that empty out are dropped, so fewer than ``k``
    centroids may come back; every returned cluster has at least one point.

    If ``history`` is a list, the within-cluster sum of squares after each
    assignment step is appended to it.

    Returns ``(centroids, labels)``.
    """
    x = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(x) == 0:
        raise NoSamples("k-means needs at least one point")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(x):
        log.warning("k=%d exceeds point count %d; using k=%d", k, len(x), len(x))
        k = len(x)

    if seed is None:
        first = int(np.argmin(((x - x.mean(axis=0)) ** 2).sum(axis=1)))
    else:
        first = int(np.random.default_rng(seed).integers(len(x)))
    chosen = [first]
    nearest = ((x - x[first]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(nearest))
        if nearest[nxt] == 0.0:
            break  # every point coincides with a centroid already
        chosen.append(nxt)
        nearest = np.minimum(nearest, ((x - x[nxt]) ** 2).sum(axis=1))
    centroids = x[chosen].copy()

    labels = None
    for _ in range(MAX_KMEANS_ITER):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        used = np.unique(new_labels)
        if len(used) < len(centroids):
            centroids = centroids[used]
            new_labels = np.searchsorted(used, new_labels)
        if history is not None:
            history.append(_inertia(x, centroids, new_labels))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids = np.stack([x[labels == c].mean(axis=0) for c in range(len(centroids))])
    return centroids, labels


def _check_clips(clips, topology: SkeletonTopology) -> list[np.ndarray]:
    out = []
    for c in clips:
        a = np.asarray(c, dtype=np.float64)
        if a.ndim != 3 or a.shape[1:] != (topology.n_parts, 2):
            raise ValueError(
                f"clip annotations must be (T, {topology.n_parts}, 2), got {a.shape}"
            )
        out.append(a)
    return out


def temporal_samples(clips, topology: SkeletonTopology) -> list[np.ndarray]:
    """Per part, every displacement between consecutive annotated frames."""
    clips = _check_clips(clips, topology)
    per_part = [[] for _ in range(topology.n_parts)]
    for a in clips:
        if len(a) < 2:
            continue
        e = a[1:] - a[:-1]  # NaN whenever an endpoint is absent
        ok = np.isfinite(e).all(axis=2)
        for i in range(topology.n_parts):
            per_part[i].append(e[ok[:, i], i])
    return [np.concatenate(s) if s else np.empty((0, 2)) for s in per_part]


def spatial_samples(clips, topology: SkeletonTopology) -> list[np.ndarray | None]:
    """Per non-root part, every child-minus-parent offset; None for the root."""
    clips = _check_clips(clips, topology)
    out: list[np.ndarray | None] = []
    for i, p in enumerate(topology.parent):
        if p is None:
            out.append(None)
            continue
        rel = [a[:, i] - a[:, p] for a in clips]
        rel = np.concatenate(rel) if rel else np.empty((0, 2))
        out.append(rel[np.isfinite(rel).all(axis=1)])
    return out


def fit_temporal(clips, topology: SkeletonTopology, eps: float = DEFAULT_EPSILON) -> list[GaussianParams]:
    models = []
    for name, s in zip(topology.parts, temporal_samples(clips, topology)):
        if len(s) == 0:
            raise PartNeverObserved(f"part {name!r} has no annotated consecutive frame pair")
        models.append(fit_gaussian(s, eps))
    return models


def fit_spatial(
    clips,
    topology: SkeletonTopology,
    k: int = 6,
    seed: int | None = None,
    eps: float = DEFAULT_EPSILON,
) -> list[list[GaussianParams] | None]:
    models: list[list[GaussianParams] | None] = []
    for name, rel in zip(topology.parts, spatial_samples(clips, topology)):
        if rel is None:
            models.append(None)
            continue
        if len(rel) == 0:
            raise PartNeverObserved(f"part {name!r} is never annotated together with its parent")
        _, labels = kmeans(rel, k, seed)
        models.append([fit_gaussian(rel[labels == c], eps) for c in range(labels.max() + 1)])
    return models


@dataclass(eq=False)
class PoseModel:
    topology: SkeletonTopology
    temporal: list[GaussianParams]
    spatial: list[list[GaussianParams] | None]
    geometry: AnnulusGeometry = field(default_factory=AnnulusGeometry.square)
    lambda1: float = 0.7
    lambda2: float = 0.2
    window_radius: int = 15
    k: int = 6
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        n = self.topology.n_parts
        if len(self.temporal) != n or len(self.spatial) != n:
            raise ValueError("model must carry one temporal and one spatial entry per part")
        for i, p in enumerate(self.topology.parent):
            if (p is None) != (self.spatial[i] is None):
                raise ValueError(f"spatial entry for {self.topology.parts[i]!r} inconsistent with topology")
            if p is not None and not self.spatial[i]:
                raise NoClusters(f"part {self.topology.parts[i]!r} has no spatial clusters")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambdas must be non-negative")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def __eq__(self, other):
        if not isinstance(other, PoseModel):
            return NotImplemented
        return (
            self.topology == other.topology
            and self.temporal == other.temporal
            and self.spatial == other.spatial
            and self.geometry == other.geometry
            and (self.lambda1, self.lambda2, self.window_radius, self.k, self.epsilon)
            == (other.lambda1, other.lambda2, other.window_radius, other.k, other.epsilon)
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "topology": self.topology.to_dict(),
            "geometry": {
                "half_widths": list(self.geometry.half_widths),
                "half_heights": list(self.geometry.half_heights),
            },
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "window_radius": self.window_radius,
            "k": self.k,
            "epsilon": self.epsilon,
            "temporal": [g.to_dict() for g in self.temporal],
            "spatial": [None if cl is None else [g.to_dict() for g in cl] for cl in self.spatial],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseModel":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"model schema version {version!r}, this build reads {SCHEMA_VERSION}"
            )
        return cls(
            topology=SkeletonTopology.from_dict(d["topology"]),
            temporal=[GaussianParams.from_dict(g) for g in d["temporal"]],
            spatial=[None if cl is None else [GaussianParams.from_dict(g) for g in cl] for cl in d["spatial"]],
            geometry=AnnulusGeometry(d["geometry"]["half_widths"], d["geometry"]["half_heights"]),
            lambda1=float(d["lambda1"]),
            lambda2=float(d["lambda2"]),
            window_radius=int(d["window_radius"]),
            k=int(d["k"]),
            epsilon=float(d["epsilon"]),
        )


def train(
    clips,
    topology: SkeletonTopology,
    k: int = 6,
    eps: float = DEFAULT_EPSILON,
    seed: int | None = None,
    **settings,
) -> PoseModel:
    """Fit both displacement models; ``settings`` go straight to :class:`PoseModel`."""
    return PoseModel(
        topology=topology,
        temporal=fit_temporal(clips, topology, eps),
        spatial=fit_spatial(clips, topology, k, seed, eps),
        k=k,
        epsilon=eps,
        **settings,
    )


def save_model(model: PoseModel, path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path) -> PoseModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if not isinstance(d, dict):
        raise CorruptFile(f"{path}: top level is not an object")
    try:
        return PoseModel.from_dict(d)
    except SchemaVersionMismatch as exc:
        raise SchemaVersionMismatch(f"{path}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc!r}") from exc
