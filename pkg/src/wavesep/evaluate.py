"""SDR scoring, full-track separation and report formatting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from wavesep.dataset import TrackSet
from wavesep.model import ModelGraph, forward
from wavesep.tensor import DimensionError, Tensor, no_tape

SDR_CAP = 100.0
WINDOW = 22050
SILENCE_MS = 1e-6
REPORT_VERSION = 1
LABELS = {"vocals": "Vocal", "drums": "Drums", "bass": "Bass", "other": "Other"}


class SilentReferenceError(ValueError):
    """SDR is undefined for an all-zero reference."""


def sdr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """10*log10(|ref|^2 / |ref - est|^2) in dB, clipped to +-100."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise DimensionError(f"reference {reference.shape} and estimate {estimate.shape} differ")
    signal = float(np.sum(reference * reference))
    if signal == 0.0:
        raise SilentReferenceError("reference is all zeros")
    err = reference - estimate
    noise = float(np.sum(err * err))
    if noise == 0.0:
        return SDR_CAP
    return float(np.clip(10.0 * math.log10(signal / noise), -SDR_CAP, SDR_CAP))


def windowed_sdr(reference: np.ndarray, estimate: np.ndarray, window: int = WINDOW,
                 threshold: float = SILENCE_MS) -> tuple[list[float], int]:
    """Score non-overlapping windows, skipping silent ones.

    A window is silent when the reference mean square is below
    ``threshold``.  A shorter trailing window is scored like any other.
    Returns (scores, number of silent windows).
    """
    T = reference.shape[-1]
    scores, silent = [], 0
    for start in range(0, T, window):
        ref = reference[..., start:start + window]
        if np.mean(np.square(ref, dtype=np.float64)) < threshold:
            silent += 1
            continue
        scores.append(sdr(ref, estimate[..., start:start + window]))
    return scores, silent


def separate(model: ModelGraph, mixture: np.ndarray, batch: int = 4) -> np.ndarray:
    """Separate a whole ``[C, T]`` track into ``[K, C, T]``.

    The track is cut into back-to-back segments of the model's length, the
    last one zero-padded, and the output trimmed back to ``T``.
    """
    c = model.config
    if mixture.ndim != 2 or mixture.shape[0] != c.C:
        raise DimensionError(f"model expects {c.C} channels, mixture has shape {mixture.shape}")
    L, T = c.segment_length, mixture.shape[1]
    n = max(1, -(-T // L))
    padded = np.zeros((c.C, n * L), dtype=mixture.dtype)
    padded[:, :T] = mixture
    segs = padded.reshape(c.C, n, L).transpose(1, 0, 2)
    outs = []
    with no_tape():
        for i in range(0, n, batch):
            outs.append(forward(model, Tensor(segs[i:i + batch])).data)
    est = np.concatenate(outs)  # [n, K, C, L]
    return est.transpose(1, 2, 0, 3).reshape(c.K, c.C, n * L)[..., :T]


@dataclass
class SourceScore:
    name: str
    scores: list[float] = field(default_factory=list)
    silent: int = 0

    @property
    def windows(self) -> int:
        return len(self.scores) + self.silent

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else float("nan")

    @property
    def median(self) -> float:
        return float(np.median(self.scores)) if self.scores else float("nan")


@dataclass
class SdrReport:
    sources: list[SourceScore]
    per_track: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)

    def row(self, name: str) -> SourceScore:
        return next(s for s in self.sources if s.name == name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# wavesep sdr report v{REPORT_VERSION}; mean/median over non-silent "
                  f"{WINDOW}-sample windows of all tracks\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "mean_sdr_db", "median_sdr_db", "windows", "silent_windows"])
        for s in self.sources:
            w.writerow([LABELS.get(s.name, s.name), f"{s.mean:.3f}", f"{s.median:.3f}",
                        s.windows, s.silent])
        return buf.getvalue()

    def to_table(self, title: str = "") -> str:
        lines = []
        if title:
            lines.append(title)
        lines.append("median taken over non-silent 1 s windows of all tracks")
        lines.append(f"{'Source':<8} {'Mean SDR':>9} {'Median SDR':>11} {'windows':>8} {'silent':>7}")
        for s in self.sources:
            lines.append(f"{LABELS.get(s.name, s.name):<8} {s.mean:>9.3f} {s.median:>11.3f} "
                         f"{s.windows:>8} {s.silent:>7}")
        return "\n".join(lines) + "\n"


def _ordered(names) -> list[str]:
    std = [n for n in LABELS if n in names]
    return std + [n for n in names if n not in LABELS]


def score_tracks(pairs, names) -> SdrReport:
    """Aggregate ``(track, references [K,C,T], estimates [K,C,T])`` triples."""
    rows = {n: SourceScore(n) for n in names}
    per_track = {}
    for track, refs, ests in pairs:
        per_track[track] = {}
        for k, name in enumerate(names):
            scores, silent = windowed_sdr(refs[k], ests[k])
            rows[name].scores.extend(scores)
            rows[name].silent += silent
            per_track[track][name] = (float(np.mean(scores)) if scores else float("nan"),
                                      float(np.median(scores)) if scores else float("nan"))
    return SdrReport([rows[n] for n in _ordered(names)], per_track)


def evaluate(model: ModelGraph, testset: TrackSet, estimator=None) -> SdrReport:
    """Separate every test track and score each source.

    ``estimator(mixture, references) -> [K, C, T]`` replaces the model when
    given, which is how reference-as-estimate and mixture-as-estimate checks
    run.
    """
    names = list(testset.stems)
    if len(names) != model.config.K:
        raise DimensionError(f"dataset has {len(names)} stems, model separates {model.config.K}")

    def pairs():
        for track in testset.tracks:
            if track.channels != model.config.C:
                raise DimensionError(f"{track.name} has {track.channels} channels, "
                                     f"model expects {model.config.C}")
            refs = track.load()
            mixture = refs.sum(axis=0)
            est = estimator(mixture, refs) if estimator else separate(model, mixture)
            yield track.name, refs, est

    return score_tracks(pairs(), names)
