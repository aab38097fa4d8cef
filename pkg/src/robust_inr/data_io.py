"""Signal ingestion into coordinate datasets, reconstruction export, weight files.

Supported inputs are binary netpbm (P5 gray / P6 rgb, maxval 255), 16-bit PCM
mono WAV and directories of same-size P6 frames. Coordinates and targets are
both mapped to ``[-1, 1]``.
"""
from __future__ import annotations

import hashlib
import os
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import MlpParams, SirenConfig, flatten, unflatten

MODALITIES = ("image_gray", "image_rgb", "audio", "video")


class DataFormatError(ValueError):
    """Base class for malformed input files."""


class MalformedHeaderError(DataFormatError):
    pass


class TruncatedPayloadError(DataFormatError):
    pass


class UnsupportedMaxvalError(DataFormatError):
    pass


class NotPcmError(DataFormatError):
    pass


class MultiChannelError(DataFormatError):
    pass


class MalformedChunkError(DataFormatError):
    pass


class FrameSizeMismatchError(DataFormatError):
    pass


class BadMagicError(DataFormatError):
    pass


class ChecksumError(DataFormatError):
    pass


@dataclass
class CoordinateDataset:
    coords: np.ndarray
    targets: np.ndarray
    shape: tuple[int, ...]
    modality: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.coords.shape[0] != int(np.prod(self.shape)):
            raise ValueError(f"{self.coords.shape[0]} samples do not match grid {self.shape}")
        if self.targets.shape[0] != self.coords.shape[0]:
            raise ValueError("coords and targets differ in length")

    @property
    def in_dim(self) -> int:
        return self.coords.shape[1]

    @property
    def out_dim(self) -> int:
        return self.targets.shape[1]

    def __len__(self) -> int:
        return self.coords.shape[0]


def make_coord_grid(shape: Sequence[int]) -> np.ndarray:
    """Row-major grid over ``shape``; each axis spans ``[-1, 1]``, length-1 axes sit at 0."""
    shape = [int(s) for s in shape]
    if not shape or any(s < 1 for s in shape):
        raise ValueError(f"every grid dimension must be >= 1, got {shape}")
    axes = [np.linspace(-1.0, 1.0, s) if s > 1 else np.zeros(1) for s in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# -- netpbm ------------------------------------------------------------------

def _read_netpbm(data: bytes, expect: str | None = None) -> tuple[str, np.ndarray]:
    """Parse P5/P6 bytes into ``(magic, uint8 array HxW or HxWx3)``."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeaderError("netpbm header ended early")
        tokens.append(data[start:pos])
    if pos >= n:
        raise TruncatedPayloadError("no pixel data after netpbm header")
    pos += 1  # single whitespace byte before raster

    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P5", "P6"):
        raise MalformedHeaderError(f"unsupported netpbm magic {magic!r}")
    if expect is not None and magic != expect:
        raise MalformedHeaderError(f"expected {expect}, found {magic}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise MalformedHeaderError(f"non-numeric netpbm header field: {exc}") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad image size {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == "P6" else 1
    need = width * height * channels
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise TruncatedPayloadError(f"expected {need} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(
        (height, width, 3) if channels == 3 else (height, width)
    )
    return magic, pixels


def load_image(path, format: str | None = None) -> CoordinateDataset:
    """Load a P5 (gray) or P6 (rgb) file. ``format`` may pin ``"pgm"`` or ``"ppm"``."""
    expect = {"pgm": "P5", "ppm": "P6", None: None}[format]
    magic, pixels = _read_netpbm(Path(path).read_bytes(), expect)
    h, w = pixels.shape[:2]
    targets = pixels.reshape(h * w, -1).astype(np.float64) * (2.0 / 255.0) - 1.0
    modality = "image_rgb" if magic == "P6" else "image_gray"
    return CoordinateDataset(make_coord_grid([h, w]), targets, (h, w), modality)


def quantize8(values: np.ndarray) -> np.ndarray:
    """Clamp to ``[-1, 1]`` and map to bytes with round-half-up."""
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    return np.floor((v + 1.0) * 127.5 + 0.5).astype(np.uint8)


def _netpbm_bytes(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape[:2]
    magic = "P6" if pixels.ndim == 3 else "P5"
    return f"{magic}\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def save_image(outputs: np.ndarray, shape: Sequence[int], path, format: str | None = None) -> None:
    h, w = shape
    outputs = np.asarray(outputs)
    channels = outputs.size // (h * w) if h * w else 0
    if outputs.size != h * w * channels or channels not in (1, 3):
        raise ValueError(f"{outputs.size} values do not fit a {h}x{w} gray or rgb image")
    if format is not None and {"pgm": 1, "ppm": 3}[format] != channels:
        raise ValueError(f"{format} cannot hold {channels} channels")
    pixels = quantize8(outputs).reshape((h, w, 3) if channels == 3 else (h, w))
    Path(path).write_bytes(_netpbm_bytes(pixels))


# -- audio -------------------------------------------------------------------

def load_audio_wav(path, downsample: int = 1) -> CoordinateDataset:
    """16-bit PCM mono WAV; every ``downsample``-th sample is kept."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedChunkError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    samples = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedChunkError(f"chunk {cid!r} claims {size} bytes, {len(body)} present")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedChunkError("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif cid == b"data":
            samples = body
        pos += 8 + size + (size & 1)
    if fmt is None or samples is None:
        raise MalformedChunkError("missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1 or bits != 16:
        raise NotPcmError(f"need 16-bit PCM, got format {audio_format} with {bits} bits")
    if channels != 1:
        raise MultiChannelError(f"need mono audio, got {channels} channels")
    if len(samples) % 2:
        raise MalformedChunkError("odd byte count in 16-bit data chunk")
    pcm = np.frombuffer(samples, dtype="<i2")[:: max(int(downsample), 1)]
    if pcm.size == 0:
        raise MalformedChunkError("data chunk holds no samples")
    targets = pcm.astype(np.float64).reshape(-1, 1) / 32768.0
    meta = {"sample_rate": rate // max(int(downsample), 1)}
    return CoordinateDataset(make_coord_grid([pcm.size]), targets, (pcm.size,), "audio", meta)


def save_audio_wav(outputs: np.ndarray, path, sample_rate: int) -> None:
    v = np.clip(np.asarray(outputs, dtype=np.float64).ravel(), -1.0, 1.0)
    pcm = np.clip(np.floor(v * 32768.0 + 0.5), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(pcm.tobytes())


# -- video -------------------------------------------------------------------

def load_video_frames(dir_path) -> CoordinateDataset:
    """Lexicographically ordered ``*.ppm`` frames; coords are ``(t, y, x)``."""
    frames = sorted(p for p in Path(dir_path).iterdir() if p.suffix.lower() == ".ppm")
    if not frames:
        raise FileNotFoundError(f"no .ppm frames in {dir_path}")
    stack = []
    for p in frames:
        _, pixels = _read_netpbm(p.read_bytes(), "P6")
        if stack and pixels.shape != stack[0].shape:
            raise FrameSizeMismatchError(
                f"{p.name} is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"expected {stack[0].shape[1]}x{stack[0].shape[0]}"
            )
        stack.append(pixels)
    t = len(stack)
    h, w = stack[0].shape[:2]
    targets = np.stack(stack).reshape(t * h * w, 3).astype(np.float64) * (2.0 / 255.0) - 1.0
    return CoordinateDataset(make_coord_grid([t, h, w]), targets, (t, h, w), "video")


def save_video_frames(outputs: np.ndarray, shape: Sequence[int], dir_path) -> list[Path]:
    t, h, w = shape
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    frames = np.asarray(outputs).reshape(t, h * w, 3)
    paths = []
    for i in range(t):
        p = out / f"frame_{i:04d}.ppm"
        save_image(frames[i], (h, w), p, "ppm")
        paths.append(p)
    return paths


# -- generic load/save by modality --------------------------------------------

def load_signal(path, modality: str | None = None, audio_downsample: int = 1) -> CoordinateDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    if modality == "video" or (modality is None and path.is_dir()):
        return load_video_frames(path)
    if modality == "audio" or (modality is None and path.suffix.lower() == ".wav"):
        return load_audio_wav(path, audio_downsample)
    return load_image(path)


def save_reconstruction(outputs: np.ndarray, dataset: CoordinateDataset, path) -> Path:
    """Write ``outputs`` in the dataset's native format; returns the path written."""
    path = Path(path)
    if dataset.modality == "audio":
        path = path.with_suffix(".wav")
        save_audio_wav(outputs, path, dataset.meta.get("sample_rate", 16000))
    elif dataset.modality == "video":
        path = path.with_suffix("")
        save_video_frames(outputs, dataset.shape, path)
    else:
        path = path.with_suffix(".ppm" if dataset.modality == "image_rgb" else ".pgm")
        save_image(outputs, dataset.shape, path)
    return path


# -- weight files ----------------------------------------------------------------

WEIGHT_MAGIC = b"INRFORT1"
# magic, in_dim, out_dim, hidden_width, hidden_layers, omega_first, omega_hidden, dtype bytes
_HEADER = struct.Struct("<8sIIIIddB")
_DTYPES = {4: "<f4", 8: "<f8"}


def _checksum(blob: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")


def weights_to_bytes(params: MlpParams, dtype: str = "f64") -> bytes:
    size = {"f32": 4, "f64": 8}[dtype]
    c = params.config
    header = _HEADER.pack(
        WEIGHT_MAGIC, c.in_dim, c.out_dim, c.hidden_width, c.hidden_layers,
        float(c.omega_first), float(c.omega_hidden), size,
    )
    blob = header + flatten(params).astype(_DTYPES[size]).tobytes()
    return blob + struct.pack("<Q", _checksum(blob))


def weights_from_bytes(data: bytes) -> MlpParams:
    if len(data) < len(WEIGHT_MAGIC) or data[:8] != WEIGHT_MAGIC:
        raise BadMagicError("not a weight file (bad magic)")
    if len(data) < _HEADER.size + 8:
        raise TruncatedPayloadError("weight file header is truncated")
    _, in_dim, out_dim, width, depth, om0, om, size = _HEADER.unpack_from(data)
    if size not in _DTYPES:
        raise MalformedHeaderError(f"unknown dtype width {size}")
    config = SirenConfig(in_dim, out_dim, width, depth, om0, om)
    end = _HEADER.size + config.num_params * size
    if len(data) != end + 8:
        raise TruncatedPayloadError(f"expected {end + 8} bytes, file has {len(data)}")
    (stored,) = struct.unpack_from("<Q", data, end)
    if stored != _checksum(data[:end]):
        raise ChecksumError("weight file checksum mismatch")
    theta = np.frombuffer(data[_HEADER.size:end], dtype=_DTYPES[size]).astype(np.float64)
    return unflatten(config, theta)


def save_weights(params: MlpParams, path, dtype: str = "f64") -> None:
    Path(path).write_bytes(weights_to_bytes(params, dtype))


def load_weights(path) -> MlpParams:
    return weights_from_bytes(Path(path).read_bytes())


def sample_path(name: str = "camera64.pgm") -> Path:
    """Path of a bundled sample signal (``camera64.pgm`` or ``astronaut32.ppm``)."""
    from importlib.resources import files

    return Path(str(files("robust_inr") / "data" / name))
