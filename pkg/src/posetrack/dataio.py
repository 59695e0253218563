"""File formats: frames, annotations, clip manifests, predictions, config.

Annotation file (one per clip)::

    {"parts": ["head", "neck", ...],
     "frames": [[[u, v], null, ...], ...]}

``null`` marks a part that is not annotated in that frame.

Clip manifest::

    {"clip": "walk01", "frames_dir": "frames",
     "frames": ["frame_0000.png", ...],      # optional, else directory listing
     "annotations": "annotations.json",      # optional for unlabelled clips
     "split": "train"}

Relative paths resolve against the manifest's directory.  ``frames`` may be
left out, in which case every PNG/JPEG in ``frames_dir`` is used in natural
filename order.

Prediction file::

    {"clip": "walk01", "parts": [...], "poses": [[[u, v], ...], ...]}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import AnnotationMismatch, CorruptFile, DecodeError, MissingFrame
from .evaluation import DEFAULT_THRESHOLDS
from .imaging import AnnulusGeometry, as_image
from .models import DEFAULT_EPSILON
from .skeleton import SkeletonTopology

FRAME_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _natural_key(name: str):
    return [int(t) if t.isdigit() else t.lower() for t in re.split(r"(\d+)", name)]


def read_frame(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingFrame(f"frame file not found: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB", "RGBA"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return as_image(arr)


def write_frame(path, image: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


@dataclass
class Annotations:
    parts: list[str]
    positions: np.ndarray  # (T, n, 2), NaN = absent

    def __len__(self):
        return len(self.positions)

    def check(self, topology: SkeletonTopology, source="annotations") -> None:
        if list(topology.parts) != list(self.parts):
            extra = [p for p in self.parts if p not in topology.parts]
            missing = [p for p in topology.parts if p not in self.parts]
            detail = []
            if extra:
                detail.append("unknown parts " + ", ".join(extra))
            if missing:
                detail.append("missing parts " + ", ".join(missing))
            if not detail:
                detail.append("part order differs from the topology")
            raise AnnotationMismatch(f"{source}: " + "; ".join(detail))


def _encode_frames(positions: np.ndarray) -> list:
    return [
        [None if not np.isfinite(p).all() else [float(p[0]), float(p[1])] for p in frame]
        for frame in positions
    ]


def _decode_frames(frames, n_parts: int, source) -> np.ndarray:
    out = np.full((len(frames), n_parts, 2), np.nan)
    for t, frame in enumerate(frames):
        if len(frame) != n_parts:
            raise AnnotationMismatch(f"{source}: frame {t} has {len(frame)} entries for {n_parts} parts")
        for i, p in enumerate(frame):
            if p is None:
                continue
            if len(p) != 2:
                raise AnnotationMismatch(f"{source}: frame {t} part {i} is not a (u, v) pair")
            out[t, i] = p
    return out


def save_annotations(path, ann: Annotations) -> None:
    Path(path).write_text(json.dumps({"parts": list(ann.parts), "frames": _encode_frames(ann.positions)}))


def load_annotations(path) -> Annotations:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
        parts = [str(p) for p in d["parts"]]
        frames = d["frames"]
    except FileNotFoundError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptFile(f"{path}: not an annotation file ({exc!r})") from exc
    return Annotations(parts, _decode_frames(frames, len(parts), path))


def save_predictions(path, clip: str, parts: Sequence[str], poses) -> None:
    arr = np.stack([np.asarray(getattr(p, "positions", p), dtype=np.float64) for p in poses])
    Path(path).write_text(json.dumps({"clip": clip, "parts": list(parts), "poses": _encode_frames(arr)}))


def load_predictions(path) -> tuple[str, Annotations]:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
        poses = d["poses"]
        parts = [str(p) for p in d["parts"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptFile(f"{path}: not a prediction file ({exc!r})") from exc
    return str(d.get("clip", path.stem)), Annotations(parts, _decode_frames(poses, len(parts), path))


@dataclass
class ClipManifest:
    clip: str
    frames_dir: Path
    frames: list[str]
    annotations: Path | None = None
    split: str = "test"

    @property
    def frame_paths(self) -> list[Path]:
        return [self.frames_dir / f for f in self.frames]

    def to_dict(self, base: Path) -> dict:
        d = {
            "clip": self.clip,
            "frames_dir": str(_rel(self.frames_dir, base)),
            "frames": list(self.frames),
            "split": self.split,
        }
        if self.annotations is not None:
            d["annotations"] = str(_rel(self.annotations, base))
        return d


def _rel(p: Path, base: Path) -> Path:
    try:
        return p.resolve().relative_to(base.resolve())
    except ValueError:
        return p


def read_manifest(path) -> ClipManifest:
    """Read a manifest file, or ``clip.json`` inside a directory."""
    path = Path(path)
    if path.is_dir():
        path = path / "clip.json"
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise MissingFrame(f"clip manifest not found: {path}") from exc
    except (OSError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    base = path.parent
    frames_dir = base / d.get("frames_dir", "frames")
    if "frames" in d:
        frames = list(d["frames"])
    else:
        if not frames_dir.is_dir():
            raise MissingFrame(f"frame directory not found: {frames_dir}")
        frames = sorted(
            (f.name for f in frames_dir.iterdir() if f.suffix.lower() in FRAME_SUFFIXES), key=_natural_key
        )
    if not frames:
        raise MissingFrame(f"{path}: clip has no frames")
    ann = d.get("annotations")
    return ClipManifest(
        clip=str(d.get("clip", path.parent.name)),
        frames_dir=frames_dir,
        frames=frames,
        annotations=None if ann is None else base / ann,
        split=str(d.get("split", "test")),
    )


def write_manifest(path, manifest: ClipManifest) -> None:
    path = Path(path)
    path.write_text(json.dumps(manifest.to_dict(path.parent), indent=1))


def load_clip(manifest, topology: SkeletonTopology | None = None) -> tuple[Iterator[np.ndarray], Annotations | None]:
    """Frames (decoded lazily, in manifest order) and the clip's annotations.

    Missing frame files are reported up front; decoding errors surface when
    the offending frame is reached.
    """
    if not isinstance(manifest, ClipManifest):
        manifest = read_manifest(manifest)
    for p in manifest.frame_paths:
        if not p.exists():
            raise MissingFrame(f"clip {manifest.clip!r}: frame file not found: {p}")
    ann = None
    if manifest.annotations is not None:
        if not manifest.annotations.exists():
            raise AnnotationMismatch(f"clip {manifest.clip!r}: annotation file not found: {manifest.annotations}")
        ann = load_annotations(manifest.annotations)
        if topology is not None:
            ann.check(topology, manifest.annotations)
        if len(ann) < len(manifest.frames):
            raise AnnotationMismatch(
                f"{manifest.annotations}: {len(ann)} annotated frames for {len(manifest.frames)} frames"
            )
    return (read_frame(p) for p in manifest.frame_paths), ann


@dataclass
class Config:
    """Everything a run needs besides data.  Defaults are the published settings."""

    topology: SkeletonTopology
    rings: int = 10
    ring_stride: int = 2
    k: int = 6
    epsilon: float = DEFAULT_EPSILON
    seed: int | None = None
    lambda1: float = 0.7
    lambda2: float = 0.2
    window_radius: int = 15
    reinit_interval: int | None = None
    thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    limbs: list[tuple[str, str, str]] = field(default_factory=list)
    pcp_ratio: float = 0.5
    eval_parts: list[str] | None = None

    @property
    def geometry(self) -> AnnulusGeometry:
        return AnnulusGeometry.square(self.rings, self.ring_stride)


def parse_config(d: dict) -> Config:
    sk = d.get("skeleton")
    if not sk or "parts" not in sk:
        raise CorruptFile("config needs a [skeleton] table with 'parts' and 'parents'")
    topology = SkeletonTopology.from_names(sk["parts"], sk.get("parents", [""] * len(sk["parts"])))
    desc, model, tr, ev = (d.get(k, {}) for k in ("descriptor", "model", "tracker", "eval"))
    reinit = tr.get("reinit_interval")
    limbs = [(str(x[0]), str(x[1]), str(x[2])) for x in ev.get("limbs", [])]
    for name, a, b in limbs:
        for p in (a, b):
            if p not in topology.parts:
                raise AnnotationMismatch(f"limb {name!r} names unknown part {p!r}")
    return Config(
        topology=topology,
        rings=int(desc.get("rings", 10)),
        ring_stride=int(desc.get("stride", 2)),
        k=int(model.get("clusters", 6)),
        epsilon=float(model.get("epsilon", DEFAULT_EPSILON)),
        seed=model.get("seed"),
        lambda1=float(tr.get("lambda1", 0.7)),
        lambda2=float(tr.get("lambda2", 0.2)),
        window_radius=int(tr.get("window_radius", 15)),
        reinit_interval=int(reinit) if reinit else None,
        thresholds=[float(t) for t in ev.get("thresholds", DEFAULT_THRESHOLDS)],
        limbs=limbs,
        pcp_ratio=float(ev.get("pcp_ratio", 0.5)),
        eval_parts=ev.get("parts"),
    )


def load_config(path) -> Config:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except FileNotFoundError:
        raise
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return parse_config(d)


def _toml_value(v) -> str:
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def dump_config(cfg: Config) -> str:
    """TOML text that :func:`parse_config` reads back to the same settings."""
    tables = {
        "skeleton": cfg.topology.to_dict(),
        "descriptor": {"rings": cfg.rings, "stride": cfg.ring_stride},
        "model": {"clusters": cfg.k, "epsilon": cfg.epsilon},
        "tracker": {"lambda1": cfg.lambda1, "lambda2": cfg.lambda2, "window_radius": cfg.window_radius},
        "eval": {"thresholds": cfg.thresholds, "pcp_ratio": cfg.pcp_ratio},
    }
    if cfg.seed is not None:
        tables["model"]["seed"] = cfg.seed
    if cfg.reinit_interval:
        tables["tracker"]["reinit_interval"] = cfg.reinit_interval
    if cfg.limbs:
        tables["eval"]["limbs"] = [list(x) for x in cfg.limbs]
    if cfg.eval_parts:
        tables["eval"]["parts"] = cfg.eval_parts
    lines = []
    for name, tab in tables.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in tab.items())
        lines.append("")
    return "\n".join(lines)


@dataclass
class OverlayStyle:
    joint_radius: int = 3
    line_width: int = 2
    limb_color: tuple[int, int, int] = (255, 255, 0)
    joint_color: tuple[int, int, int] = (255, 0, 0)
    root_color: tuple[int, int, int] = (0, 255, 255)


def render_overlay(frame: np.ndarray, pose, topology: SkeletonTopology, style: OverlayStyle | None = None, path=None) -> Image.Image:
    """Draw limbs and joints over a frame.  Absent joints are skipped."""
    style = style or OverlayStyle()
    img = as_image(frame)
    canvas = Image.fromarray(np.clip(np.rint(img * 255), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(canvas)
    pos = np.asarray(getattr(pose, "positions", pose), dtype=np.float64)
    ok = np.isfinite(pos).all(axis=1)
    for child, par in topology.edges():
        if ok[child] and ok[par]:
            draw.line([tuple(pos[par]), tuple(pos[child])], fill=style.limb_color, width=style.line_width)
    r = style.joint_radius
    for i, (u, v) in enumerate(pos):
        if not ok[i]:
            continue
        color = style.root_color if i == topology.root_index else style.joint_color
        draw.ellipse([u - r, v - r, u + r, v + r], fill=color)
    if path is not None:
        canvas.save(path)
    return canvas
