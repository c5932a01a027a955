"""Dataset layout, segment sampling, augmentation and mixing.

Expected layout::

    root/{train,validation,test}/<track>/{vocals,drums,bass,other}.wav
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wavesep.model import STANDARD_SOURCES
from wavesep.wavio import WavFormatError, load_wav, resample_linear, wav_info

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
SAMPLE_RATE = 22050
SEGMENT_LENGTH = 16384


class DatasetError(ValueError):
    """The dataset tree is incomplete or inconsistent."""

    def __init__(self, problems: list[str]):
        super().__init__("dataset problems:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class Track:
    name: str
    paths: dict[str, Path]
    frames: int
    channels: int
    sample_rate: int

    def load(self, offset: int = 0, frames: int | None = None,
             sample_rate: int = SAMPLE_RATE) -> np.ndarray:
        """Stems stacked as ``[K, C, T]`` float32, in ``paths`` order."""
        stems = []
        for stem, path in self.paths.items():
            x, rate = load_wav(path, offset, frames)
            if rate != sample_rate:
                x = resample_linear(x, rate, sample_rate)
            stems.append(x)
        return np.stack(stems)


@dataclass
class TrackSet:
    split: str
    tracks: list[Track] = field(default_factory=list)
    sample_rate: int = SAMPLE_RATE
    stems: tuple[str, ...] = STANDARD_SOURCES

    def __len__(self) -> int:
        return len(self.tracks)


@dataclass
class Segment:
    sources: np.ndarray  # [K, C, T]
    mixture: np.ndarray  # [C, T]
    track: str = ""
    offset: int = 0


def scan_dataset(root, split: str = "train", stems=STANDARD_SOURCES) -> TrackSet:
    """Validate and index one split; raises :class:`DatasetError` listing all problems."""
    base = Path(root) / split
    ts = TrackSet(split, stems=tuple(stems))
    if not base.is_dir():
        return ts
    problems = []
    for track_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        paths = {s: track_dir / f"{s}.wav" for s in stems}
        missing = [s for s, p in paths.items() if not p.is_file()]
        if missing:
            problems.extend(f"{split}/{track_dir.name}: missing stem {s}" for s in missing)
            continue
        try:
            infos = {s: wav_info(p) for s, p in paths.items()}
        except WavFormatError as exc:
            problems.append(f"{split}/{track_dir.name}: {exc}")
            continue
        shapes = {(i.frames, i.channels, i.sample_rate) for i in infos.values()}
        if len(shapes) != 1:
            problems.append(f"{split}/{track_dir.name}: stems differ in length/channels/rate {sorted(shapes)}")
            continue
        frames, channels, rate = shapes.pop()
        if rate != SAMPLE_RATE:
            log.warning("%s/%s is %d Hz; resampling linearly to %d Hz on load",
                        split, track_dir.name, rate, SAMPLE_RATE)
            frames = int(round(frames * SAMPLE_RATE / rate))
        ts.tracks.append(Track(track_dir.name, paths, frames, channels, rate))
    if problems:
        raise DatasetError(problems)
    log.info("%s: %d tracks", split, len(ts.tracks))
    return ts


def scan_all(root, stems=STANDARD_SOURCES) -> dict[str, TrackSet]:
    return {s: scan_dataset(root, s, stems) for s in SPLITS}


def sample_segment(track: Track, rng: np.random.Generator,
                   length: int = SEGMENT_LENGTH) -> Segment | None:
    """Slice all stems at one uniformly drawn offset; ``None`` for short tracks."""
    if track.frames < length:
        log.warning("skipping %s: %d frames < segment length %d", track.name, track.frames, length)
        return None
    offset = int(rng.integers(0, track.frames - length + 1))
    if track.sample_rate == SAMPLE_RATE:
        sources = track.load(offset, length)
    else:
        sources = track.load()[..., offset:offset + length]
    return Segment(sources, sources.sum(axis=0), track.name, offset)


def augment_and_mix(sources: np.ndarray, rng: np.random.Generator, low: float = 0.7,
                    high: float = 1.0, track: str = "", offset: int = 0) -> Segment:
    """Scale each source by its own Uniform[low, high] gain and sum."""
    gains = rng.uniform(low, high, size=sources.shape[0]).astype(sources.dtype)
    scaled = sources * gains[:, None, None]
    return Segment(scaled, scaled.sum(axis=0), track, offset)


class SegmentSampler:
    """Draws augmented training segments; batches are reproducible per step index."""

    def __init__(self, trackset: TrackSet, length: int = SEGMENT_LENGTH, seed: int = 0,
                 augment: bool = True):
        self.tracks = [t for t in trackset.tracks if t.frames >= length]
        skipped = len(trackset.tracks) - len(self.tracks)
        if skipped:
            log.warning("%d tracks shorter than %d frames will never be sampled", skipped, length)
        if not self.tracks:
            raise DatasetError([f"{trackset.split}: no track has at least {length} frames"])
        self.length = length
        self.seed = seed
        self.augment = augment

    def batch(self, step: int, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (mixtures [N, C, T], sources [N, K, C, T]) for ``step``."""
        rng = np.random.default_rng([self.seed, step])
        mixes, srcs = [], []
        for _ in range(size):
            track = self.tracks[int(rng.integers(len(self.tracks)))]
            seg = sample_segment(track, rng, self.length)
            if self.augment:
                seg = augment_and_mix(seg.sources, rng, track=seg.track, offset=seg.offset)
            mixes.append(seg.mixture)
            srcs.append(seg.sources)
        return np.stack(mixes), np.stack(srcs)
