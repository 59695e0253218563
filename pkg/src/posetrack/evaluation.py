"""Keypoint localisation accuracy and Percentage of Correct Parts.

Both metrics take predicted and ground-truth tracks as ``(T, n_parts, 2)``
arrays.  Ground-truth NaN rows mark joints that were not annotated in that
frame; such joint-frames are left out of the counts entirely.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import LengthMismatch, NoEvaluableFrames

DEFAULT_THRESHOLDS = (5, 10, 15, 20, 25, 30, 35, 40)

_SIDE = re.compile(r"^(l|r|left|right)[_\-\s]+|[_\-\s]+(l|r|left|right)$", re.IGNORECASE)


def group_name(part: str) -> str:
    """Strip a left/right marker: ``l_elbow`` and ``right elbow`` both give ``elbow``."""
    return _SIDE.sub("", part) or part


def _stack(tracks) -> np.ndarray:
    if isinstance(tracks, np.ndarray):
        return tracks.astype(np.float64)
    arrs = [np.asarray(getattr(t, "positions", t), dtype=np.float64) for t in tracks]
    return np.stack(arrs) if arrs else np.empty((0, 0, 2))


@dataclass
class AccuracyReport:
    parts: list[str]
    thresholds: list[float]
    accuracy: np.ndarray  # (n_parts, n_thresholds), percent
    counts: np.ndarray  # (n_parts,) evaluated frames per part
    hits: np.ndarray = field(repr=False, default=None)  # (n_parts, n_thresholds)

    @property
    def aggregate(self) -> np.ndarray:
        """Mean over parts (with at least one evaluated frame) per threshold."""
        ok = self.counts > 0
        return self.accuracy[ok].mean(axis=0)

    def grouped(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Left and right joints pooled by name, counts summed before dividing."""
        names: list[str] = []
        for p in self.parts:
            g = group_name(p)
            if g not in names:
                names.append(g)
        hits = np.zeros((len(names), len(self.thresholds)))
        counts = np.zeros(len(names), dtype=np.int64)
        for i, p in enumerate(self.parts):
            j = names.index(group_name(p))
            hits[j] += self.hits[i]
            counts[j] += self.counts[i]
        acc = np.divide(100.0 * hits, counts[:, None], out=np.full_like(hits, np.nan), where=counts[:, None] > 0)
        return names, acc, counts


def localization_accuracy(predicted, ground_truth, thresholds: Sequence[float] = DEFAULT_THRESHOLDS, parts: Sequence[str] | None = None) -> AccuracyReport:
    """Percentage of frames whose pixel error is strictly below each threshold."""
    pred, gt = _stack(predicted), _stack(ground_truth)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"predicted shape {pred.shape} vs ground truth {gt.shape}")
    n = gt.shape[1] if gt.ndim == 3 else 0
    parts = list(parts) if parts is not None else [f"part{i}" for i in range(n)]
    if len(parts) != n:
        raise LengthMismatch(f"{len(parts)} part names for {n} parts")
    thr = np.asarray(sorted(thresholds), dtype=np.float64)

    valid = np.isfinite(gt).all(axis=2)  # (T, n)
    err = np.linalg.norm(pred - gt, axis=2)
    err = np.where(valid, err, np.inf)  # NaN predictions count as misses
    err = np.where(np.isnan(err), np.inf, err)
    counts = valid.sum(axis=0)
    if counts.sum() == 0:
        raise NoEvaluableFrames("no annotated joint-frames to evaluate")
    hits = (err[:, :, None] < thr[None, None, :]).sum(axis=0).astype(np.float64)
    acc = np.divide(100.0 * hits, counts[:, None], out=np.full_like(hits, np.nan), where=counts[:, None] > 0)
    return AccuracyReport(parts, thr.tolist(), acc, counts, hits)


@dataclass
class PcpReport:
    limbs: list[str]
    scores: np.ndarray  # (n_limbs,) in [0, 1]
    counts: np.ndarray  # evaluated limb-frames
    skipped: np.ndarray  # limb-frames dropped for zero ground-truth length
    ratio: float = 0.5

    @property
    def average(self) -> float:
        ok = self.counts > 0
        return float(self.scores[ok].mean()) if ok.any() else float("nan")


def pcp(predicted, ground_truth, limbs, ratio: float = 0.5, parts: Sequence[str] | None = None) -> PcpReport:
    """Strict PCP: a limb is correct when each predicted endpoint lies within
    ``ratio`` times the true limb length of its true endpoint.

    ``limbs`` holds ``(name, a, b)`` triples, endpoints given as part indices
    or as names (then ``parts`` is required).  Triples sharing a name are
    pooled, so ``("upper arm", "l_shoulder", "l_elbow")`` and its right-hand
    twin give one score.
    """
    pred, gt = _stack(predicted), _stack(ground_truth)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"predicted shape {pred.shape} vs ground truth {gt.shape}")

    def idx(p):
        if isinstance(p, str):
            if parts is None:
                raise ValueError("limb endpoints given by name need the part list")
            return list(parts).index(p)
        return int(p)

    names: list[str] = []
    correct, counts, skipped = {}, {}, {}
    for limb in limbs:
        name, a, b = limb
        a, b = idx(a), idx(b)
        if name not in names:
            names.append(name)
            correct[name] = counts[name] = skipped[name] = 0
        ga, gb, pa, pb = gt[:, a], gt[:, b], pred[:, a], pred[:, b]
        valid = np.isfinite(ga).all(axis=1) & np.isfinite(gb).all(axis=1)
        length = np.linalg.norm(ga - gb, axis=1)
        zero = valid & (length == 0)
        use = valid & ~zero
        tol = ratio * length
        with np.errstate(invalid="ignore"):
            ok = (np.linalg.norm(pa - ga, axis=1) <= tol) & (np.linalg.norm(pb - gb, axis=1) <= tol)
        correct[name] += int((ok & use).sum())
        counts[name] += int(use.sum())
        skipped[name] += int(zero.sum())
    cnt = np.array([counts[n] for n in names])
    cor = np.array([correct[n] for n in names], dtype=np.float64)
    scores = np.divide(cor, cnt, out=np.full(len(names), np.nan), where=cnt > 0)
    return PcpReport(names, scores, cnt, np.array([skipped[n] for n in names]), ratio)


def _fmt(x: float) -> str:
    return "   -  " if not np.isfinite(x) else f"{x:6.2f}"


def accuracy_table(report: AccuracyReport, grouped: bool = True) -> str:
    """Fixed-width text table: one row per threshold, one column per part."""
    if grouped:
        names, acc, _ = report.grouped()
    else:
        names, acc = report.parts, report.accuracy
    width = max(8, *(len(n) for n in names)) if names else 8
    head = f"{'Omega':>6} " + " ".join(f"{n:>{width}}" for n in names) + f" {'average':>{width}}"
    lines = [head, "-" * len(head)]
    agg = report.aggregate
    for j, t in enumerate(report.thresholds):
        row = f"{t:6g} " + " ".join(f"{_fmt(a):>{width}}" for a in acc[:, j])
        lines.append(row + f" {_fmt(agg[j]):>{width}}")
    return "\n".join(lines)


def pcp_table(report: PcpReport) -> str:
    width = max(8, *(len(n) for n in report.limbs)) if report.limbs else 8
    lines = [f"{'limb':<{width}} {'PCP':>6} {'frames':>7}"]
    for n, s, c in zip(report.limbs, report.scores, report.counts):
        lines.append(f"{n:<{width}} {_fmt(s):>6} {c:7d}")
    lines.append(f"{'average':<{width}} {_fmt(report.average):>6}")
    return "\n".join(lines)


def accuracy_csv(report: AccuracyReport) -> str:
    """Long format: ``part,group,threshold,accuracy,frames``; ``average`` rows last."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["part", "group", "threshold", "accuracy", "frames"])
    for i, p in enumerate(report.parts):
        for j, t in enumerate(report.thresholds):
            w.writerow([p, group_name(p), t, repr(float(report.accuracy[i, j])), int(report.counts[i])])
    for j, t in enumerate(report.thresholds):
        w.writerow(["average", "average", t, repr(float(report.aggregate[j])), int(report.counts.sum())])
    return buf.getvalue()


def pcp_csv(report: PcpReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["limb", "pcp", "frames", "skipped_zero_length"])
    for n, s, c, k in zip(report.limbs, report.scores, report.counts, report.skipped):
        w.writerow([n, repr(float(s)), int(c), int(k)])
    w.writerow(["average", repr(report.average), int(report.counts.sum()), int(report.skipped.sum())])
    return buf.getvalue()


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else None


def accuracy_json(report: AccuracyReport) -> dict:
    names, acc, counts = report.grouped()
    return {
        "thresholds": list(report.thresholds),
        "parts": {
            p: {"accuracy": [_num(a) for a in report.accuracy[i]], "frames": int(report.counts[i])}
            for i, p in enumerate(report.parts)
        },
        "groups": {
            g: {"accuracy": [_num(a) for a in acc[i]], "frames": int(counts[i])}
            for i, g in enumerate(names)
        },
        "average": [_num(a) for a in report.aggregate],
    }


def pcp_json(report: PcpReport) -> dict:
    return {
        "ratio": report.ratio,
        "limbs": {
            n: {"pcp": _num(s), "frames": int(c), "skipped_zero_length": int(k)}
            for n, s, c, k in zip(report.limbs, report.scores, report.counts, report.skipped)
        },
        "average": _num(report.average),
    }


def report_render(report) -> tuple[str, str, str]:
    """``(text table, CSV, JSON)`` for either report type."""
    if isinstance(report, AccuracyReport):
        return accuracy_table(report), accuracy_csv(report), json.dumps(accuracy_json(report), indent=1)
    if isinstance(report, PcpReport):
        return pcp_table(report), pcp_csv(report), json.dumps(pcp_json(report), indent=1)
    raise TypeError(f"cannot render {type(report).__name__}")
