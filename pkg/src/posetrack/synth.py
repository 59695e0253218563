"""Synthetic articulated figures with exact ground truth.

A stick figure is posed by forward kinematics from per-bone rest offsets.
A motion script translates it and swings chosen joints; a swing at joint
``j`` rotates everything below ``j`` about ``j``.  Frames are drawn at 4x
resolution and box-filtered down, so sub-pixel joint motion shows up in the
pixels.  Each joint gets its own colour so left and right limbs differ.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .dataio import Annotations, ClipManifest, Config, dump_config, save_annotations, write_frame, write_manifest
from .skeleton import SkeletonTopology, full_body_14, traversal_order

SUPERSAMPLE = 4

# rest offsets from the parent, (du, dv) px, for full_body_14()
REST_OFFSETS = {
    "head": (0.0, 0.0),
    "neck": (0.0, 20.0),
    "l_shoulder": (-16.0, 4.0),
    "l_elbow": (-8.0, 22.0),
    "l_wrist": (-4.0, 20.0),
    "r_shoulder": (16.0, 4.0),
    "r_elbow": (8.0, 22.0),
    "r_wrist": (4.0, 20.0),
    "l_hip": (-10.0, 50.0),
    "l_knee": (-2.0, 30.0),
    "l_foot": (0.0, 28.0),
    "r_hip": (10.0, 50.0),
    "r_knee": (2.0, 30.0),
    "r_foot": (0.0, 28.0),
}


@dataclass
class Swing:
    joint: str
    amplitude_deg: float
    period: float
    waveform: str = "sine"  # or "square"
    phase: float = 0.0  # fraction of a period

    def angle(self, t: int) -> float:
        s = np.sin(2 * np.pi * (t / self.period + self.phase))
        if self.waveform == "square":
            s = 1.0 if s >= 0 else -1.0
        elif self.waveform != "sine":
            raise ValueError(f"unknown waveform {self.waveform!r}")
        return np.deg2rad(self.amplitude_deg) * s


@dataclass
class MotionScript:
    frames: int = 30
    width: int = 240
    height: int = 200
    start: tuple[float, float] = (70.0, 30.0)  # root position in frame 0
    translation: tuple[float, float] = (0.0, 0.0)  # px per frame
    swings: list[Swing] = field(default_factory=list)
    seed: int = 0
    clip: str = "synth"
    split: str = "train"

    @classmethod
    def from_dict(cls, d: dict) -> "MotionScript":
        d = dict(d)
        d["swings"] = [Swing(**s) for s in d.get("swings", [])]
        for key in ("start", "translation"):
            if key in d:
                d[key] = tuple(float(x) for x in d[key])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "MotionScript":
        return cls.from_dict(json.loads(Path(path).read_text()))


def elbow_swing_script(frames: int = 30, amplitude_deg: float = 10.0, translation=(2.0, 0.0), **kw) -> MotionScript:
    """Figure walking sideways while both forearms swing."""
    swings = [
        Swing("l_elbow", amplitude_deg, period=12),
        Swing("r_elbow", amplitude_deg, period=12, phase=0.5),
    ]
    return MotionScript(frames=frames, translation=tuple(translation), swings=swings, **kw)


def pose_at(script: MotionScript, t: int, topology: SkeletonTopology | None = None) -> np.ndarray:
    topology = topology or full_body_14()
    angles = np.zeros(topology.n_parts)
    for s in script.swings:
        angles[topology.index(s.joint)] += s.angle(t)
    pos = np.zeros((topology.n_parts, 2))
    acc = np.zeros(topology.n_parts)  # rotation applied to each part's own offset
    root = topology.root_index
    pos[root] = np.asarray(script.start) + t * np.asarray(script.translation)
    for i in traversal_order(topology):
        p = topology.parent[i]
        if p is None:
            continue
        acc[i] = acc[p] + angles[p]
        c, s = np.cos(acc[i]), np.sin(acc[i])
        du, dv = REST_OFFSETS[topology.parts[i]]
        pos[i] = pos[p] + (c * du - s * dv, s * du + c * dv)
    return pos


def _joint_colors(n: int) -> list[tuple[int, int, int]]:
    return [
        tuple(int(255 * c) for c in colorsys.hsv_to_rgb(i / n, 0.85, 0.95))
        for i in range(n)
    ]


def background(script: MotionScript) -> np.ndarray:
    """Static, low-contrast, smoothly varying backdrop."""
    rng = np.random.default_rng(script.seed)
    h, w = script.height, script.width
    v, u = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.empty((h, w, 3))
    for c in range(3):
        a, b, ph = rng.uniform(1.0, 3.0, 3)
        img[:, :, c] = 0.35 + 0.08 * np.sin(2 * np.pi * (a * u + b * v) + ph * np.pi)
    return img


def render(script: MotionScript, pose: np.ndarray, topology: SkeletonTopology, bg: np.ndarray) -> np.ndarray:
    k = SUPERSAMPLE
    base = Image.fromarray(np.clip(np.rint(bg * 255), 0, 255).astype(np.uint8)).resize(
        (script.width * k, script.height * k), Image.NEAREST
    )
    draw = ImageDraw.Draw(base)
    colors = _joint_colors(topology.n_parts)
    # px -> supersampled canvas; pixel centres sit at (x + 0.5) * k
    pts = [((u + 0.5) * k, (v + 0.5) * k) for u, v in pose]
    for child, par in topology.edges():
        col = tuple((np.array(colors[child]) * 0.55).astype(int))
        draw.line([pts[par], pts[child]], fill=col, width=6 * k)
    for i, (x, y) in enumerate(pts):
        r = (9 if i == topology.root_index else 5) * k
        draw.ellipse([x - r, y - r, x + r, y + r], fill=colors[i])
        ri = r // 2
        draw.ellipse([x - ri, y - ri, x + ri, y + ri], fill=tuple(255 - c for c in colors[i]))
    small = base.resize((script.width, script.height), Image.BOX)
    return np.asarray(small, dtype=np.float64) / 255.0


def synth_clip(script: MotionScript, topology: SkeletonTopology | None = None):
    """Frames and ground truth in memory: ``(list of images, (T, n, 2) array)``."""
    topology = topology or full_body_14()
    bg = background(script)
    gt = np.stack([pose_at(script, t, topology) for t in range(script.frames)])
    frames = [render(script, gt[t], topology, bg) for t in range(script.frames)]
    return frames, gt


def synth_generate(script: MotionScript, out_dir, topology: SkeletonTopology | None = None) -> ClipManifest:
    """Write frames, annotations, a clip manifest and a matching config file."""
    topology = topology or full_body_14()
    out = Path(out_dir)
    fdir = out / "frames"
    fdir.mkdir(parents=True, exist_ok=True)
    frames, gt = synth_clip(script, topology)
    names = []
    for t, img in enumerate(frames):
        name = f"frame_{t:04d}.png"
        write_frame(fdir / name, img)
        names.append(name)
    save_annotations(out / "annotations.json", Annotations(list(topology.parts), gt))
    manifest = ClipManifest(script.clip, fdir, names, out / "annotations.json", script.split)
    write_manifest(out / "clip.json", manifest)
    limbs = [
        ("upper arm", "l_shoulder", "l_elbow"), ("upper arm", "r_shoulder", "r_elbow"),
        ("lower arm", "l_elbow", "l_wrist"), ("lower arm", "r_elbow", "r_wrist"),
        ("upper leg", "l_hip", "l_knee"), ("upper leg", "r_hip", "r_knee"),
        ("lower leg", "l_knee", "l_foot"), ("lower leg", "r_knee", "r_foot"),
    ]
    limbs = [x for x in limbs if x[1] in topology.parts and x[2] in topology.parts]
    (out / "config.toml").write_text(dump_config(Config(topology=topology, limbs=limbs)))
    return manifest
