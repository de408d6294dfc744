"""Raw recording ingestion, labels, dataset splitting, and synthetic data.

File formats
------------
Raw recording: headerless unsigned 8-bit samples, frame-major, scanline-major
within a frame (63 rows x 412 columns).  Pixels decode to [0, 1] via /255.

Parameter sidecar: UTF-8 ``Key=Value`` lines.  Required keys ``NumVectors``
(63) and ``PixPerVector`` (412); ``FramesPerSec`` and unknown keys are kept
as pass-through metadata.

Manifest: CSV with columns ``speaker_id, session_id, cohort, age_label,
raw_path, param_path`` (paths relative to the manifest's directory).  Age
labels look like ``"8y 4m"`` and decode to fractional years.

Synthetic generator
-------------------
Each synthetic recording renders a bright arc on a dark speckled background.
The arc geometry is a documented, invertible function of age (see
:func:`arc_geometry`):

    apex_row   =  8.0 + 2.2  * (age - 4)   rows
    edge_rise  =  6.0 + 0.8  * (age - 4)   rows at the frame edges
    thickness  =  6.0 + 0.5  * (age - 4)   rows (Gaussian cross-section)

so a learner can recover age from the arc's vertical position alone.  The
arc is kept several pixels thick so frames stay smooth at the pixel scale
(bilinear resampling of a frame loses little).
Rendered pixels are quantized to the 8-bit grid, which makes the raw
export/decode round trip byte-exact.  Speckle is multiplicative, spatially
smoothed (5x5 box) Gaussian noise with std SPECKLE_STD.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, FormatError, ParseError

SCANLINES = 63
ECHO_RETURNS = 412
FRAME_SHAPE = (SCANLINES, ECHO_RETURNS, 1)
FRAME_BYTES = SCANLINES * ECHO_RETURNS

AGE_MIN_YEARS = 4.0
AGE_MAX_YEARS = 16.0

COHORTS = ("typical", "ssd")

SPECKLE_STD = 0.04
SPECKLE_BLUR = 9
ARC_BRIGHTNESS = 0.9
BACKGROUND_LEVEL = 0.05


# ---------------------------------------------------------------------------
# Core records
# ---------------------------------------------------------------------------

@dataclass
class Recording:
    """Decoded frame stack plus speaker metadata.

    ``frames`` has shape (n_frames, 63, 412, 1), float32 in [0, 1].
    ``age_years`` may be None for unlabeled recordings (prediction input).
    """

    frames: np.ndarray
    speaker_id: str = ""
    session_id: str = ""
    age_years: Optional[float] = None
    cohort: str = "typical"

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4 or f.shape[1:] != FRAME_SHAPE:
            raise FormatError(
                f"frames must be (n, {SCANLINES}, {ECHO_RETURNS}, 1), got {f.shape}"
            )
        if f.size and (f.min() < 0.0 or f.max() > 1.0):
            raise FormatError("frame pixels must lie in [0, 1] after decode")
        if self.cohort not in COHORTS:
            raise FormatError(f"cohort must be one of {COHORTS}, got {self.cohort!r}")
        if self.age_years is not None and not (
            AGE_MIN_YEARS <= self.age_years <= AGE_MAX_YEARS
        ):
            raise FormatError(
                f"age {self.age_years:.3f}y outside plausible child range "
                f"[{AGE_MIN_YEARS:g}, {AGE_MAX_YEARS:g}]"
            )

    def __len__(self) -> int:
        return self.frames.shape[0]


class Sample(NamedTuple):
    frame: np.ndarray
    age_years: float
    speaker_id: str


@dataclass
class Dataset:
    """Flat sample list with a train/val partition."""

    samples: List[Sample]
    assignment: List[str]

    def __post_init__(self):
        if len(self.samples) != len(self.assignment):
            raise ConfigError("sample list and split assignment differ in length")
        bad = set(self.assignment) - {"train", "val"}
        if bad:
            raise ConfigError(f"unknown split labels {sorted(bad)}")

    @property
    def train(self) -> List[Sample]:
        return [s for s, a in zip(self.samples, self.assignment) if a == "train"]

    @property
    def val(self) -> List[Sample]:
        return [s for s, a in zip(self.samples, self.assignment) if a == "val"]

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class ParamFile:
    """Parsed parameter sidecar."""

    num_vectors: int
    pix_per_vector: int
    frames_per_sec: Optional[float] = None
    extras: Dict[str, str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parsing and decoding
# ---------------------------------------------------------------------------

def parse_param_file(text: str) -> ParamFile:
    """Parse ``Key=Value`` sidecar text; unknown keys pass through."""
    values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"param line {lineno} is not Key=Value: {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    try:
        num_vectors = int(values.pop("NumVectors"))
        pix_per_vector = int(values.pop("PixPerVector"))
    except KeyError as exc:
        raise FormatError(f"param file missing required key {exc}") from exc
    except ValueError as exc:
        raise ParseError(f"param file has a non-integer geometry value: {exc}") from exc
    fps: Optional[float] = None
    if "FramesPerSec" in values:
        try:
            fps = float(values.pop("FramesPerSec"))
        except ValueError as exc:
            raise ParseError(f"FramesPerSec is not numeric: {exc}") from exc
    return ParamFile(num_vectors, pix_per_vector, fps, values)


def read_param_file(path) -> ParamFile:
    return parse_param_file(Path(path).read_text(encoding="utf-8"))


def load_recording(
    raw_bytes: bytes,
    params: ParamFile,
    speaker_id: str = "",
    session_id: str = "",
    age_years: Optional[float] = None,
    cohort: str = "typical",
) -> Recording:
    """Decode a raw byte stream into normalized frames.

    The byte length must be an exact multiple of one frame
    (NumVectors * PixPerVector bytes); each byte b becomes pixel b/255.
    """
    if (params.num_vectors, params.pix_per_vector) != (SCANLINES, ECHO_RETURNS):
        raise FormatError(
            f"unsupported geometry {params.num_vectors}x{params.pix_per_vector}; "
            f"this pipeline handles {SCANLINES}x{ECHO_RETURNS} frames"
        )
    rem = len(raw_bytes) % FRAME_BYTES
    if rem:
        raise FormatError(
            f"raw length {len(raw_bytes)} is not a multiple of the "
            f"{FRAME_BYTES}-byte frame (remainder {rem})"
        )
    n = len(raw_bytes) // FRAME_BYTES
    u8 = np.frombuffer(raw_bytes, dtype=np.uint8).reshape(n, *FRAME_SHAPE)
    frames = u8.astype(np.float32) / np.float32(255.0)
    return Recording(frames, speaker_id, session_id, age_years, cohort)


def encode_recording(recording: Recording) -> bytes:
    """Inverse of :func:`load_recording`: frames back to raw 8-bit bytes."""
    u8 = np.round(recording.frames * 255.0).astype(np.uint8)
    return u8.tobytes()


_AGE_RE = re.compile(r"^\s*(\d+)y\s+(\d+)m\s*$")


def parse_age(label: str) -> float:
    """``"8y 4m"`` -> 8.333...; months must be 0-11."""
    m = _AGE_RE.match(label)
    if not m:
        raise ParseError(f"age label {label!r} does not match '<years>y <months>m'")
    years, months = int(m.group(1)), int(m.group(2))
    if months >= 12:
        raise ParseError(f"months must be 0-11, got {months} in {label!r}")
    return years + months / 12.0


def format_age(age_years: float) -> str:
    """Nearest whole-month label; inverse of :func:`parse_age` on its range."""
    total_months = int(round(age_years * 12.0))
    return f"{total_months // 12}y {total_months % 12}m"


# ---------------------------------------------------------------------------
# Sampling and splitting
# ---------------------------------------------------------------------------

def sample_frames(recording: Recording, stride: int = 150) -> np.ndarray:
    """Frames at indices 0, stride, 2*stride, ...  Empty input -> empty."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    return recording.frames[::stride]


def split_dataset(
    samples: Sequence[Sample],
    train_fraction: float = 0.8,
    seed: int = 0,
    by_speaker: bool = False,
) -> Dataset:
    """Seeded shuffle, first ceil(train_fraction * n) samples become train.

    ``by_speaker`` switches to speaker-level assignment (no speaker spans
    both splits); the realized fractions are then only approximate.
    """
    n = len(samples)
    if n < 2:
        raise ConfigError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    if not by_speaker:
        order = rng.permutation(n)
        n_train = math.ceil(train_fraction * n)
        shuffled = [samples[i] for i in order]
        assignment = ["train"] * n_train + ["val"] * (n - n_train)
        return Dataset(shuffled, assignment)

    speakers = sorted({s.speaker_id for s in samples})
    order = rng.permutation(len(speakers))
    counts = {sp: 0 for sp in speakers}
    for s in samples:
        counts[s.speaker_id] += 1
    target = train_fraction * n
    train_speakers = set()
    assigned = 0
    for i in order:
        if assigned >= target:
            break
        train_speakers.add(speakers[i])
        assigned += counts[speakers[i]]
    if len(train_speakers) == len(speakers):  # keep val non-empty
        train_speakers.discard(speakers[order[-1]])
    out_samples = list(samples)
    assignment = [
        "train" if s.speaker_id in train_speakers else "val" for s in out_samples
    ]
    return Dataset(out_samples, assignment)


def mean_age_baseline(
    train_samples: Sequence[Sample], val_samples: Sequence[Sample]
) -> float:
    """MSE of predicting the train-split mean age for every val sample."""
    if not train_samples or not val_samples:
        raise ConfigError("baseline needs non-empty train and val splits")
    mean_age = math.fsum(s.age_years for s in train_samples) / len(train_samples)
    return math.fsum(
        (s.age_years - mean_age) ** 2 for s in val_samples
    ) / len(val_samples)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

def arc_geometry(age_years: float) -> Tuple[float, float, float]:
    """(apex_row, edge_rise, thickness) of the rendered arc, in rows.

    All three are affine in age; the apex slope of 2.2 rows/year is what a
    regressor primarily keys on.
    """
    t = age_years - 4.0
    return 8.0 + 2.2 * t, 6.0 + 0.8 * t, 6.0 + 0.5 * t


def _box_blur(a: np.ndarray, k: int = 5) -> np.ndarray:
    """Separable k x k box mean with edge replication."""
    pad = k // 2
    for axis in (0, 1):
        p = np.take(a, [0] * pad, axis=axis)
        q = np.take(a, [-1] * pad, axis=axis)
        ext = np.concatenate([p, a, q], axis=axis)
        c = np.cumsum(ext, axis=axis, dtype=np.float64)
        zero = np.zeros_like(np.take(c, [0], axis=axis))
        c = np.concatenate([zero, c], axis=axis)
        hi = np.take(c, range(k, c.shape[axis]), axis=axis)
        lo = np.take(c, range(0, c.shape[axis] - k), axis=axis)
        a = (hi - lo) / k
    return a


def _render_frame(age_years: float, rng: np.random.Generator) -> np.ndarray:
    apex, rise, thickness = arc_geometry(age_years)
    apex = apex + rng.uniform(-0.5, 0.5)  # frame-to-frame probe wobble
    cols = np.arange(ECHO_RETURNS, dtype=np.float64)
    center = (ECHO_RETURNS - 1) / 2.0
    ridge_row = apex + rise * ((cols - center) / center) ** 2
    rows = np.arange(SCANLINES, dtype=np.float64)[:, None]
    sigma = thickness / 2.0
    ridge = ARC_BRIGHTNESS * np.exp(-((rows - ridge_row[None, :]) ** 2) / (2 * sigma**2))
    base = BACKGROUND_LEVEL + ridge
    blur = _box_blur(rng.standard_normal((SCANLINES, ECHO_RETURNS)), SPECKLE_BLUR)
    # a k x k box mean of unit normals has std 1/k; rescale to SPECKLE_STD
    field = 1.0 + SPECKLE_STD * SPECKLE_BLUR * blur
    img = np.clip(base * field, 0.0, 1.0)
    u8 = np.round(img * 255.0).astype(np.uint8)  # land on the 8-bit grid
    return (u8.astype(np.float32) / np.float32(255.0))[:, :, None]


def synth_generate(
    n_recordings: int,
    seed: int = 0,
    age_range: Tuple[float, float] = (5.0, 13.0),
    frames_per_recording: int = 1,
) -> List[Recording]:
    """Deterministic synthetic recordings with recoverable age signal."""
    if n_recordings < 1:
        raise ConfigError(f"n_recordings must be >= 1, got {n_recordings}")
    if frames_per_recording < 1:
        raise ConfigError(f"frames_per_recording must be >= 1, got {frames_per_recording}")
    lo, hi = age_range
    if not (AGE_MIN_YEARS <= lo < hi <= AGE_MAX_YEARS):
        raise ConfigError(
            f"age_range must satisfy {AGE_MIN_YEARS:g} <= lo < hi <= "
            f"{AGE_MAX_YEARS:g}, got {age_range}"
        )
    rng = np.random.default_rng(seed)
    out = []
    lo_m, hi_m = math.ceil(lo * 12), math.floor(hi * 12)
    for i in range(n_recordings):
        months = int(rng.integers(lo_m, hi_m + 1))
        age = months / 12.0
        frames = np.stack(
            [_render_frame(age, rng) for _ in range(frames_per_recording)]
        )
        out.append(
            Recording(frames, f"spk{i:04d}", "s01", age, "typical")
        )
    return out


# ---------------------------------------------------------------------------
# On-disk dataset layout
# ---------------------------------------------------------------------------

MANIFEST_COLUMNS = (
    "speaker_id", "session_id", "cohort", "age_label", "raw_path", "param_path"
)


def export_recordings(recordings: Sequence[Recording], out_dir) -> Path:
    """Write raw/param files plus manifest.csv; returns the manifest path."""
    out_dir = Path(out_dir)
    raw_dir = out_dir / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in recordings:
            if rec.age_years is None:
                raise ConfigError(f"recording {rec.speaker_id} has no age label")
            stem = f"{rec.speaker_id}_{rec.session_id}"
            raw_rel = f"raw/{stem}.raw"
            param_rel = f"raw/{stem}.param"
            (out_dir / raw_rel).write_bytes(encode_recording(rec))
            (out_dir / param_rel).write_text(
                f"NumVectors={SCANLINES}\nPixPerVector={ECHO_RETURNS}\n"
                "FramesPerSec=60\n",
                encoding="utf-8",
            )
            writer.writerow(
                [rec.speaker_id, rec.session_id, rec.cohort,
                 format_age(rec.age_years), raw_rel, param_rel]
            )
    return manifest_path


def load_manifest(manifest_path) -> List[Recording]:
    """Load every recording referenced by a manifest CSV."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.csv"
    if not manifest_path.is_file():
        raise FormatError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    recordings = []
    with open(manifest_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"manifest missing columns {sorted(missing)}")
        for row in reader:
            params = read_param_file(base / row["param_path"])
            raw = (base / row["raw_path"]).read_bytes()
            recordings.append(
                load_recording(
                    raw,
                    params,
                    speaker_id=row["speaker_id"],
                    session_id=row["session_id"],
                    age_years=parse_age(row["age_label"]),
                    cohort=row["cohort"],
                )
            )
    if not recordings:
        raise FormatError(f"manifest {manifest_path} lists no recordings")
    return recordings


def build_dataset(
    data_dir,
    frame_stride: int = 150,
    train_fraction: float = 0.8,
    seed: int = 0,
    by_speaker: bool = False,
) -> Dataset:
    """Manifest -> decoded recordings -> sampled frames -> split dataset."""
    recordings = load_manifest(data_dir)
    samples = []
    for rec in recordings:
        for frame in sample_frames(rec, frame_stride):
            samples.append(Sample(frame, rec.age_years, rec.speaker_id))
    return split_dataset(samples, train_fraction, seed, by_speaker)
