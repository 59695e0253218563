"""Greedy per-frame pose tracking.

Each frame the root is placed first by minimising appearance plus weighted
temporal cost over a square window around its previous position.  The other
parts follow in parent-before-child order, each adding a weighted spatial
cost against its parent's new position.  Templates are blended towards the
chosen appearance once the whole frame is placed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import AnnotationMismatch, MissingGroundTruthForReinit, PoseTrackError, WindowFullyOutsideImage
from .imaging import build_integral, extract_descriptors, likeliness, update_template
from .models import PoseModel, mahalanobis, spatial_cost
from .skeleton import Pose, traversal_order

log = logging.getLogger(__name__)

MIN_WINDOW_CANDIDATES = 9


@dataclass(frozen=True)
class TrackerConfig:
    lambda1: float = 0.7
    lambda2: float = 0.2
    window_radius: int = 15
    reinit_interval: int | None = None
    tie_break: str = "nearest-then-row-major"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambdas must be non-negative")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.reinit_interval is not None and self.reinit_interval < 1:
            raise ValueError("reinit_interval must be >= 1")
        if self.tie_break != "nearest-then-row-major":
            raise ValueError(f"unknown tie-break policy {self.tie_break!r}")

    @classmethod
    def from_model(cls, model: PoseModel, **overrides) -> "TrackerConfig":
        base = dict(lambda1=model.lambda1, lambda2=model.lambda2, window_radius=model.window_radius)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


@dataclass(frozen=True)
class CandidateScore:
    position: tuple[int, int]
    appearance: float
    temporal: float
    spatial: float
    total: float
    n_candidates: int = 0
    n_clusters: int = 0


@dataclass
class TrackState:
    pose: np.ndarray  # (n, 2) integer-valued (u, v)
    templates: np.ndarray  # (n, 9m)
    frame_index: int = 0
    scores: tuple = ()

    @property
    def cost_evaluations(self) -> int:
        """Objective terms evaluated for the last frame: one per candidate plus one per cluster."""
        return sum(s.n_candidates * (1 + s.n_clusters) for s in self.scores)


@dataclass
class WindowScores:
    """Every candidate in one part's window and its three cost terms."""

    positions: np.ndarray  # (K, 2) (u, v), row-major order
    features: np.ndarray  # (K, 9m)
    appearance: np.ndarray
    temporal: np.ndarray
    spatial: np.ndarray
    total: np.ndarray
    n_clusters: int = 0


def window_candidates(center, radius: int, shape) -> np.ndarray:
    """Integer ``(u, v)`` positions within ``radius`` of ``center`` (Chebyshev),
    clipped to an ``(H, W)`` image, in row-major order."""
    h, w = shape[:2]
    cu, cv = (int(round(c)) for c in center)
    us = np.arange(max(cu - radius, 0), min(cu + radius, w - 1) + 1)
    vs = np.arange(max(cv - radius, 0), min(cv + radius, h - 1) + 1)
    if len(us) == 0 or len(vs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    vv, uu = np.meshgrid(vs, us, indexing="ij")
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def score_window(
    part: int,
    integrals: np.ndarray,
    state: TrackState,
    model: PoseModel,
    config: TrackerConfig,
    parent_position=None,
) -> WindowScores:
    shape = integrals.shape[1:]
    shape = (shape[0] - 1, shape[1] - 1)
    prev = state.pose[part]
    cand = window_candidates(prev, config.window_radius, shape)
    name = model.topology.parts[part]
    if len(cand) == 0:
        raise WindowFullyOutsideImage(
            f"part {name!r}: window around {tuple(prev)} lies outside the {shape[1]}x{shape[0]} image"
        )
    if len(cand) < MIN_WINDOW_CANDIDATES:
        log.warning("part %r: window clipped to %d candidates", name, len(cand))

    feats = extract_descriptors(integrals, cand, model.geometry)
    appearance = likeliness(feats, state.templates[part])
    temporal = mahalanobis(cand - prev, model.temporal[part])
    clusters = model.spatial[part]
    if parent_position is None or clusters is None:
        spatial = np.zeros(len(cand))
        n_clusters = 0
    else:
        spatial = spatial_cost(cand - np.asarray(parent_position, dtype=np.float64), clusters)
        n_clusters = len(clusters)
    total = appearance + config.lambda1 * temporal + config.lambda2 * spatial
    return WindowScores(cand, feats, appearance, temporal, spatial, total, n_clusters)


def select(scores: WindowScores, previous) -> int:
    """Index of the best candidate.

    Lowest total wins; exact ties go to the candidate closest to the
    previous position, then to the first in row-major order.
    """
    disp = ((scores.positions - np.asarray(previous, dtype=np.float64)) ** 2).sum(axis=1)
    row_major = np.arange(len(scores.total))
    return int(np.lexsort((row_major, disp, scores.total))[0])


def _result(scores: WindowScores, idx: int) -> CandidateScore:
    return CandidateScore(
        position=(int(scores.positions[idx, 0]), int(scores.positions[idx, 1])),
        appearance=float(scores.appearance[idx]),
        temporal=float(scores.temporal[idx]),
        spatial=float(scores.spatial[idx]),
        total=float(scores.total[idx]),
        n_candidates=len(scores.total),
        n_clusters=scores.n_clusters,
    )


def track_root(integrals, state: TrackState, model: PoseModel, config: TrackerConfig):
    """Place the root: appearance plus weighted temporal cost.

    Returns ``(position, CandidateScore)``.
    """
    root = model.topology.root_index
    s = score_window(root, integrals, state, model, config)
    res = _result(s, select(s, state.pose[root]))
    return res.position, res


def track_part(part: int, integrals, state: TrackState, parent_position, model: PoseModel, config: TrackerConfig):
    """Place a non-root part given its parent's position in this frame."""
    s = score_window(part, integrals, state, model, config, parent_position)
    res = _result(s, select(s, state.pose[part]))
    return res.position, res


def initial_state(integrals, pose, model: PoseModel, frame_index: int = 0) -> TrackState:
    """State whose templates are the descriptors at the given (rounded) positions."""
    pos = np.asarray(pose.positions if isinstance(pose, Pose) else pose, dtype=np.float64)
    if pos.shape != (model.topology.n_parts, 2):
        raise AnnotationMismatch(f"pose shape {pos.shape} does not match {model.topology.n_parts} parts")
    if not np.isfinite(pos).all():
        missing = [model.topology.parts[i] for i in np.flatnonzero(~np.isfinite(pos).all(axis=1))]
        raise AnnotationMismatch("initial pose must annotate every part; missing " + ", ".join(missing))
    pos = np.rint(pos)
    templates = extract_descriptors(integrals, pos, model.geometry)
    return TrackState(pos, templates, frame_index)


def track_frame(
    frame, state: TrackState, model: PoseModel, config: TrackerConfig, *, integrals=None
) -> TrackState:
    """Advance the state by one frame.

    Pass ``integrals`` to reuse an integral stack already built for ``frame``;
    ``frame`` is then ignored.
    """
    if integrals is None:
        integrals = build_integral(frame)
    topo = model.topology
    new_pose = state.pose.copy()
    scores: list[CandidateScore | None] = [None] * topo.n_parts
    for i in traversal_order(topo):
        par = topo.parent[i]
        try:
            if par is None:
                pos, sc = track_root(integrals, state, model, config)
            else:
                pos, sc = track_part(i, integrals, state, new_pose[par], model, config)
        except PoseTrackError as exc:
            raise type(exc)(f"frame {state.frame_index + 1}, part {topo.parts[i]!r}: {exc}") from exc
        new_pose[i] = pos
        scores[i] = sc

    feats = extract_descriptors(integrals, new_pose, model.geometry)
    templates = np.stack(
        [update_template(state.templates[i], feats[i], scores[i].appearance) for i in range(topo.n_parts)]
    )
    return TrackState(new_pose, templates, state.frame_index + 1, tuple(scores))


def track_video(
    frames: Iterable,
    first_pose,
    model: PoseModel,
    config: TrackerConfig | None = None,
    ground_truth: Sequence | None = None,
) -> list[Pose]:
    """Track through a clip starting from an annotated first frame.

    With ``config.reinit_interval`` set, every ``interval``-th frame the state
    is reset to the ground truth for that frame (absent parts keep their
    tracked position and template).
    """
    config = config or TrackerConfig.from_model(model)
    if config.reinit_interval and ground_truth is None:
        raise MissingGroundTruthForReinit("reinit_interval is set but no ground truth was given")
    first = np.asarray(first_pose.positions if isinstance(first_pose, Pose) else first_pose, dtype=np.float64)

    out: list[Pose] = []
    state = None
    for t, frame in enumerate(frames):
        integrals = build_integral(frame)
        if t == 0:
            state = initial_state(integrals, first, model)
            out.append(Pose(first.copy(), 0))
            continue
        if config.reinit_interval and t % config.reinit_interval == 0:
            if t >= len(ground_truth):
                raise MissingGroundTruthForReinit(f"no ground truth for reinit frame {t}")
            gt = np.asarray(ground_truth[t], dtype=np.float64)
            state = _reinit(integrals, state, gt, model, t)
            out.append(Pose(np.where(np.isfinite(gt), gt, state.pose), t))
            continue
        state = track_frame(frame, state, model, config, integrals=integrals)
        out.append(Pose(state.pose.astype(np.float64), t))
    if state is None:
        raise PoseTrackError("video has no frames")
    return out


def _reinit(integrals, state: TrackState, gt: np.ndarray, model: PoseModel, t: int) -> TrackState:
    ok = np.isfinite(gt).all(axis=1)
    pose = state.pose.copy()
    pose[ok] = np.rint(gt[ok])
    templates = state.templates.copy()
    if ok.any():
        templates[ok] = extract_descriptors(integrals, pose[ok], model.geometry)
    return replace(state, pose=pose, templates=templates, frame_index=t, scores=())
