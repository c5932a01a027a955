"""Synthetic tone mixtures for toy training, tests and the ablation preset."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from wavesep.wavio import write_wav

# one frequency band (Hz) per source, low to high
TONE_BANDS = ((90.0, 180.0), (700.0, 1400.0), (2500.0, 4000.0), (5000.0, 8000.0))


def tone(length: int, freq: float, amp: float, phase: float = 0.0,
         sample_rate: int = 22050) -> np.ndarray:
    t = np.arange(length) / sample_rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


def random_sources(rng: np.random.Generator, K: int, C: int, length: int,
                   sample_rate: int = 22050, amp: float = 0.4, task: str = "bands") -> np.ndarray:
    """``[K, C, T]`` float32 tones, one per source.

    ``task="bands"``: source k is drawn from ``TONE_BANDS[k]``, far apart in
    frequency.  ``task="close"``: source 1 lies in 300-600 Hz and each next
    source sits 8-15 % above its predecessor, so telling them apart needs a
    window of several periods.
    """
    out = np.empty((K, C, length), dtype=np.float32)
    prev = None
    for k in range(K):
        if task == "close":
            freq = rng.uniform(300.0, 600.0) if prev is None else prev * rng.uniform(1.08, 1.15)
            prev = freq
        elif task == "bands":
            lo, hi = TONE_BANDS[k % len(TONE_BANDS)]
            freq = rng.uniform(lo, hi)
        else:
            raise ValueError(f"task must be 'bands' or 'close', got {task!r}")
        for c in range(C):
            out[k, c] = tone(length, freq, amp * rng.uniform(0.6, 1.0),
                             rng.uniform(0, 2 * np.pi), sample_rate)
    return out


def write_synthetic_dataset(root, stems: tuple[str, ...], C: int = 1, length: int = 4096,
                            counts: dict[str, int] | None = None, seed: int = 0,
                            sample_rate: int = 22050, task: str = "bands") -> Path:
    """Write ``root/<split>/track_XX/<stem>.wav`` tone tracks (float32)."""
    counts = counts or {"train": 4, "validation": 1, "test": 2}
    rng = np.random.default_rng(seed)
    root = Path(root)
    for split, n in counts.items():
        for i in range(n):
            track = root / split / f"track_{i:02d}"
            track.mkdir(parents=True, exist_ok=True)
            sources = random_sources(rng, len(stems), C, length, sample_rate, task=task)
            for stem, x in zip(stems, sources):
                write_wav(track / f"{stem}.wav", x, sample_rate)
    return root
