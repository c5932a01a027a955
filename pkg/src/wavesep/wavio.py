"""RIFF/WAVE reading and writing for PCM16 and IEEE float32."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PCM = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    def __init__(self, message: str, chunk: str | None = None):
        super().__init__(f"[{chunk}] {message}" if chunk else message)
        self.chunk = chunk


@dataclass(frozen=True)
class WavInfo:
    channels: int
    sample_rate: int
    codec: str  # "pcm16" | "float32"
    frames: int
    data_offset: int

    @property
    def bytes_per_frame(self) -> int:
        return self.channels * (2 if self.codec == "pcm16" else 4)


def wav_info(path) -> WavInfo:
    """Parse headers only; the data chunk is located but not read."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise WavFormatError(f"{path}: not a RIFF/WAVE file", head[:4].decode("latin-1") or None)
        fmt = None
        while True:
            hdr = fh.read(8)
            if len(hdr) < 8:
                raise WavFormatError(f"{path}: no data chunk", "data")
            cid, size = hdr[:4].decode("latin-1"), struct.unpack("<I", hdr[4:])[0]
            if cid == "fmt ":
                body = fh.read(size)
                if len(body) < 16:
                    raise WavFormatError(f"{path}: truncated fmt chunk", cid)
                tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
                if tag == EXTENSIBLE and len(body) >= 26:
                    tag = struct.unpack("<H", body[24:26])[0]
                if tag == PCM and bits == 16:
                    codec = "pcm16"
                elif tag == IEEE_FLOAT and bits == 32:
                    codec = "float32"
                else:
                    raise WavFormatError(f"{path}: unsupported format tag {tag} with {bits} bits", cid)
                if not 1 <= channels <= 2:
                    raise WavFormatError(f"{path}: {channels} channels unsupported", cid)
                fmt = (channels, rate, codec)
            elif cid == "data":
                if fmt is None:
                    raise WavFormatError(f"{path}: data chunk before fmt chunk", cid)
                channels, rate, codec = fmt
                frame = channels * (2 if codec == "pcm16" else 4)
                return WavInfo(channels, rate, codec, size // frame, fh.tell())
            else:
                fh.seek(size + (size & 1), 1)
            if cid == "fmt " and size & 1:
                fh.seek(1, 1)


def load_wav(path, offset: int = 0, frames: int | None = None) -> tuple[np.ndarray, int]:
    """Read ``[C, T]`` float32 samples in [-1, 1] and the sample rate.

    ``offset``/``frames`` select a frame range without reading the rest.
    """
    info = wav_info(path)
    if frames is None:
        frames = info.frames - offset
    if offset < 0 or frames < 0 or offset + frames > info.frames:
        raise ValueError(f"{path}: frame range [{offset}, {offset + frames}) outside 0..{info.frames}")
    with open(path, "rb") as fh:
        fh.seek(info.data_offset + offset * info.bytes_per_frame)
        raw = fh.read(frames * info.bytes_per_frame)
    if len(raw) < frames * info.bytes_per_frame:
        raise WavFormatError(f"{path}: data chunk truncated", "data")
    if info.codec == "pcm16":
        x = np.frombuffer(raw, dtype="<i2").astype(np.float32) / np.float32(32768.0)
    else:
        x = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    return np.ascontiguousarray(x.reshape(frames, info.channels).T), info.sample_rate


def write_wav(path, x: np.ndarray, sample_rate: int, codec: str = "float32") -> None:
    """Write ``[C, T]`` (or ``[T]``) samples; PCM16 clamps to [-1, 1]."""
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    channels, frames = x.shape
    interleaved = np.ascontiguousarray(x.T)
    if codec == "pcm16":
        q = np.clip(np.round(np.clip(interleaved, -1.0, 1.0) * 32768.0), -32768, 32767)
        payload, tag, bits = q.astype("<i2").tobytes(), PCM, 16
    elif codec == "float32":
        payload, tag, bits = interleaved.astype("<f4").tobytes(), IEEE_FLOAT, 32
    else:
        raise ValueError(f"codec must be 'pcm16' or 'float32', got {codec!r}")
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt \
        + b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def resample_linear(x: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Linear-interpolation resampling; a convenience, not a quality resampler.

    Output sample ``i`` sits at input position ``i * from_hz / to_hz``;
    positions past the last input sample take its value.  Length is
    ``round(T * to_hz / from_hz)``.
    """
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("sample rates must be positive")
    if from_hz == to_hz:
        return x.copy()
    T = x.shape[-1]
    n = int(round(T * to_hz / from_hz))
    pos = np.arange(n) * (from_hz / to_hz)
    src = np.arange(T)
    flat = x.reshape(-1, T)
    out = np.stack([np.interp(pos, src, row) for row in flat]).astype(x.dtype)
    return out.reshape(x.shape[:-1] + (n,))
