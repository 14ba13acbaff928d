"""Image representation, distortion-level parameter mappings, and ladder
construction through pluggable codec adapters.

A "distortion ladder" is the 101-frame sequence ``frames[0..100]`` of one
source image: frame 0 is the untouched source, frame d >= 1 is the source
encoded and decoded at the codec parameter derived from level d.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import AdapterUnavailableError, DomainError, LadderBuildError

LEVELS = 101  # levels 0..100; 0 is the uncompressed source


class Codec(str, Enum):
    JPEG = "jpeg"
    BPG = "bpg"


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB image, shape (height, width, 3), row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DomainError(f"expected (h, w, 3) array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DomainError("image dimensions must be positive")
        if px.dtype != np.uint8:
            raise DomainError(f"expected uint8 samples, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_pixels(self, other: "RasterImage") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )

    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.pixels).tobytes())
        return h.hexdigest()

    @classmethod
    def load(cls, path) -> "RasterImage":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB")))

    def save_png(self, path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")


def check_level(d: int, minimum: int = 1) -> int:
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool):
        raise DomainError(f"distortion level must be an integer, got {d!r}")
    if not minimum <= d <= 100:
        raise DomainError(f"distortion level {d} outside [{minimum}, 100]")
    return int(d)


def level_to_jpeg_qf(d: int) -> int:
    """JPEG quality factor for distortion level d: QF = 101 - d."""
    d = check_level(d)
    return 101 - d


def level_to_bpg_qp(d: int) -> int:
    """BPG quantizer parameter for distortion level d: QP = ceil(d / 2)."""
    d = check_level(d)
    return -(-d // 2)


def codec_parameter(codec: Codec, d: int) -> int:
    if codec == Codec.JPEG:
        return level_to_jpeg_qf(d)
    if codec == Codec.BPG:
        return level_to_bpg_qp(d)
    raise DomainError(f"unknown codec {codec!r}")


class CodecAdapter:
    """Encode-decode round trip at a given codec parameter.

    Implementations must be deterministic for fixed input and parameter and
    must preserve image dimensions.
    """

    codec: Codec
    identity: str  # versioned identifier, part of the cache key

    def options(self) -> dict:
        return {}

    def recompress(self, image: RasterImage, parameter: int) -> RasterImage:
        raise NotImplementedError


class PillowJpegAdapter(CodecAdapter):
    """Built-in JPEG round trip via Pillow.

    Encoder options are pinned (chroma subsampling, no optimization) so that
    repeated ladder builds are byte-identical.
    """

    codec = Codec.JPEG

    def __init__(self, subsampling: str = "4:2:0"):
        self.subsampling = subsampling
        from PIL import __version__ as pil_version

        self.identity = f"pillow-jpeg/{pil_version}/{subsampling}"

    def options(self) -> dict:
        return {"subsampling": self.subsampling, "optimize": False}

    def recompress(self, image: RasterImage, parameter: int) -> RasterImage:
        if not 1 <= parameter <= 100:
            raise DomainError(f"JPEG quality factor {parameter} outside [1, 100]")
        buf = io.BytesIO()
        Image.fromarray(image.pixels, mode="RGB").save(
            buf, format="JPEG", quality=parameter,
            subsampling=self.subsampling, optimize=False,
        )
        buf.seek(0)
        with Image.open(buf) as decoded:
            return RasterImage(np.asarray(decoded.convert("RGB")))


class ExternalBpgAdapter(CodecAdapter):
    """BPG round trip through external bpgenc/bpgdec executables."""

    codec = Codec.BPG

    def __init__(self, encoder_path: str, decoder_path: str):
        self.encoder_path = encoder_path
        self.decoder_path = decoder_path
        if not (encoder_path and shutil.which(encoder_path)):
            raise AdapterUnavailableError(
                f"BPG encoder not found: {encoder_path!r}; running in JPEG-only mode"
            )
        if not (decoder_path and shutil.which(decoder_path)):
            raise AdapterUnavailableError(f"BPG decoder not found: {decoder_path!r}")
        self.identity = f"external-bpg/{Path(encoder_path).name}"

    def options(self) -> dict:
        return {"encoder": self.encoder_path, "decoder": self.decoder_path}

    def recompress(self, image: RasterImage, parameter: int) -> RasterImage:
        if not 1 <= parameter <= 51:
            raise DomainError(f"BPG quantizer parameter {parameter} outside [1, 51]")
        with tempfile.TemporaryDirectory() as tmp:
            src = os.path.join(tmp, "src.png")
            enc = os.path.join(tmp, "out.bpg")
            dec = os.path.join(tmp, "dec.png")
            image.save_png(src)
            subprocess.run(
                [self.encoder_path, "-q", str(parameter), "-o", enc, src],
                check=True, capture_output=True,
            )
            subprocess.run(
                [self.decoder_path, "-o", dec, enc],
                check=True, capture_output=True,
            )
            return RasterImage.load(dec)


@dataclass
class DistortionLadder:
    source_id: str
    codec: Codec
    frames: list  # 101 RasterImages indexed by level
    source_hash: str = ""
    adapter_identity: str = ""
    encoder_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frames) != LEVELS:
            raise DomainError(f"ladder must have {LEVELS} frames, got {len(self.frames)}")
        w, h = self.frames[0].width, self.frames[0].height
        for d, fr in enumerate(self.frames):
            if fr.width != w or fr.height != h:
                raise DomainError(f"frame {d} has mismatched dimensions")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


def build_ladder(source: RasterImage, codec: Codec, adapter: CodecAdapter,
                 source_id: str = "") -> DistortionLadder:
    """Encode/decode the source at every level 1..100; level 0 is the source."""
    if adapter.codec != codec:
        raise DomainError(
            f"adapter {adapter.identity!r} handles {adapter.codec}, not {codec}"
        )
    frames = [RasterImage(source.pixels.copy())]
    for d in range(1, LEVELS):
        try:
            frame = adapter.recompress(source, codec_parameter(codec, d))
        except Exception as exc:  # noqa: BLE001 - adapter failures carry the level
            raise LadderBuildError(d, str(exc)) from exc
        if frame.width != source.width or frame.height != source.height:
            raise LadderBuildError(d, "adapter changed image dimensions")
        frames.append(frame)
    return DistortionLadder(
        source_id=source_id,
        codec=codec,
        frames=frames,
        source_hash=source.sha256(),
        adapter_identity=adapter.identity,
        encoder_options=adapter.options(),
    )


class LadderCache:
    """On-disk frame cache: one directory per (source_id, codec) holding
    d000.png .. d100.png plus a ladder.json metadata record.

    Publication is atomic (write to a temp dir, then rename) so readers
    never observe a partial ladder.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def key_dir(self, source_id: str, codec: Codec) -> Path:
        return self.root / f"{source_id}__{codec.value}"

    def has(self, source_id: str, codec: Codec) -> bool:
        return (self.key_dir(source_id, codec) / "ladder.json").exists()

    def store(self, ladder: DistortionLadder) -> Path:
        final = self.key_dir(ladder.source_id, ladder.codec)
        tmp = Path(tempfile.mkdtemp(prefix=".ladder-", dir=self.root))
        try:
            for d, frame in enumerate(ladder.frames):
                frame.save_png(tmp / f"d{d:03d}.png")
            meta = {
                "source_id": ladder.source_id,
                "codec": ladder.codec.value,
                "source_hash": ladder.source_hash,
                "adapter": ladder.adapter_identity,
                "encoder_options": ladder.encoder_options,
                "width": ladder.width,
                "height": ladder.height,
            }
            (tmp / "ladder.json").write_text(
                json.dumps(meta, indent=2, sort_keys=True) + "\n"
            )
            if final.exists():
                shutil.rmtree(final)
            os.rename(tmp, final)
        except Exception:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return final

    def metadata(self, source_id: str, codec: Codec) -> dict:
        return json.loads((self.key_dir(source_id, codec) / "ladder.json").read_text())

    def frame_path(self, source_id: str, codec: Codec, d: int) -> Path:
        check_level(d, minimum=0)
        return self.key_dir(source_id, codec) / f"d{d:03d}.png"

    def load_frame(self, source_id: str, codec: Codec, d: int) -> RasterImage:
        return RasterImage.load(self.frame_path(source_id, codec, d))

    def load(self, source_id: str, codec: Codec) -> DistortionLadder:
        meta = self.metadata(source_id, codec)
        frames = [self.load_frame(source_id, codec, d) for d in range(LEVELS)]
        return DistortionLadder(
            source_id=source_id,
            codec=codec,
            frames=frames,
            source_hash=meta["source_hash"],
            adapter_identity=meta["adapter"],
            encoder_options=meta["encoder_options"],
        )
