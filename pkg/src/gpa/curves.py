"""Load curves: ingestion, windowing, normalization, partitioning and a
synthetic household load simulator."""

from __future__ import annotations

import csv
import struct
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DomainError, EmptyInputError, ParseError

DEFAULT_FRAME_LEN = 672
N_SUBSETS = 5
SAMPLES_PER_DAY = 48
CURVE_MAGIC = b"GPC1"


class Scale(str, Enum):
    RAW = "raw_kwh"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class Reading:
    household_id: str
    timestamp: int
    kwh: float


@dataclass(frozen=True, eq=False)
class Curve:
    household_id: str
    values: np.ndarray
    scale: Scale = Scale.RAW

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("curve values must be a non-empty 1-D sequence")
        if self.scale is Scale.NORMALIZED and (values.min() < -1.0 or values.max() > 1.0):
            raise DomainError("normalized curve values must lie in [-1, 1]")

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Curve):
            return NotImplemented
        return (
            self.household_id == other.household_id
            and self.scale == other.scale
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def stack(curves: Sequence[Curve]) -> np.ndarray:
    """Curves as an (n, frame_len) array."""
    if not curves:
        return np.zeros((0, 0))
    return np.stack([c.values for c in curves])


# -- ingestion --------------------------------------------------------------

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _parse_iso(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    if "." in text:
        # fromisoformat (3.10) rejects more than 6 fractional digits
        head, _, tail = text.partition(".")
        digits = "".join(ch for ch in tail if ch.isdigit())
        text = head + tail[len(digits) :]
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int((dt - _EPOCH).total_seconds() // 1800)


def read_readings(path) -> list[Reading]:
    """Parse a ``household_id,timestamp,kwh`` CSV.

    Timestamps are either integer half-hour indices or ISO-8601 strings; the
    format is decided from the first data row and applies to the whole file.
    """
    path = Path(path)
    readings: list[Reading] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path}: empty file")
        if [h.strip() for h in header] != ["household_id", "timestamp", "kwh"]:
            raise ParseError(1, f"expected header 'household_id,timestamp,kwh', got {','.join(header)!r}")
        integer_stamps: bool | None = None
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ParseError(line, f"expected 3 fields, got {len(row)}")
            hid, stamp, kwh_text = (cell.strip() for cell in row)
            if not hid:
                raise ParseError(line, "missing household_id")
            if integer_stamps is None:
                try:
                    int(stamp)
                    integer_stamps = True
                except ValueError:
                    integer_stamps = False
            try:
                ts = int(stamp) if integer_stamps else _parse_iso(stamp)
            except ValueError:
                raise ParseError(line, f"bad timestamp {stamp!r}") from None
            try:
                kwh = float(kwh_text)
            except ValueError:
                raise ParseError(line, f"bad kwh value {kwh_text!r}") from None
            if not np.isfinite(kwh) or kwh < 0:
                raise ParseError(line, f"kwh must be a finite nonnegative number, got {kwh_text!r}")
            readings.append(Reading(hid, ts, kwh))
    if not readings:
        raise EmptyInputError(f"{path}: no readings")
    return readings


def window(readings: Iterable[Reading], frame_len: int = DEFAULT_FRAME_LEN) -> list[Curve]:
    """Cut each household's readings into consecutive non-overlapping frames.

    Frames start at the household's first reading and restart after any gap
    in the half-hour sequence; a trailing run shorter than ``frame_len`` is
    dropped. Households are emitted in sorted id order.
    """
    if frame_len < 1:
        raise DomainError(f"frame_len must be positive, got {frame_len}")
    by_house: dict[str, list[Reading]] = defaultdict(list)
    for r in readings:
        by_house[r.household_id].append(r)
    curves: list[Curve] = []
    for hid in sorted(by_house):
        rows = sorted(by_house[hid], key=lambda r: r.timestamp)
        stamps = np.array([r.timestamp for r in rows], dtype=np.int64)
        if np.any(np.diff(stamps) == 0):
            dup = int(stamps[np.flatnonzero(np.diff(stamps) == 0)[0]])
            raise DataError(f"household {hid!r}: duplicate timestamp {dup}")
        kwh = np.array([r.kwh for r in rows])
        breaks = np.flatnonzero(np.diff(stamps) != 1) + 1
        for run in np.split(kwh, breaks):
            for k in range(len(run) // frame_len):
                curves.append(Curve(hid, run[k * frame_len : (k + 1) * frame_len]))
    return curves


def ingest_csv(path, frame_len: int = DEFAULT_FRAME_LEN) -> list[Curve]:
    return window(read_readings(path), frame_len)


# -- normalization ----------------------------------------------------------


@dataclass(frozen=True)
class NormalizationRecord:
    """Clip-at-cap affine map from [0, cap] kWh onto [-1, 1]."""

    cap: float

    def __post_init__(self):
        if not self.cap > 0:
            raise DomainError(f"normalization cap must be positive, got {self.cap}")

    def forward(self, values: np.ndarray) -> np.ndarray:
        return 2.0 * np.minimum(values, self.cap) / self.cap - 1.0

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values) + 1.0) * (self.cap / 2.0)

    def denormalize(self, curves: Sequence[Curve]) -> list[Curve]:
        return [Curve(c.household_id, self.inverse(c.values), Scale.RAW) for c in curves]


def default_cap(curves: Sequence[Curve], percentile: float = 99.5) -> float:
    """Cap at the given percentile of all readings (falls back to the max, then 1)."""
    values = np.concatenate([c.values for c in curves])
    cap = float(np.percentile(values, percentile))
    if cap <= 0:
        cap = float(values.max())
    return cap if cap > 0 else 1.0


def normalize(curves: Sequence[Curve], cap: float | None = None) -> tuple[list[Curve], NormalizationRecord]:
    if cap is None:
        cap = default_cap(curves)
    record = NormalizationRecord(float(cap))
    out = []
    for c in curves:
        if c.scale is not Scale.RAW:
            raise DomainError("normalize expects raw_kwh curves")
        out.append(Curve(c.household_id, record.forward(c.values), Scale.NORMALIZED))
    return out, record


# -- partitioning -----------------------------------------------------------


@dataclass(frozen=True)
class SubsetPartition:
    subsets: tuple[tuple[str, ...], ...]
    member_index: int
    seed: int

    @property
    def members(self) -> tuple[str, ...]:
        return self.subsets[self.member_index]

    def non_members(self) -> list[int]:
        return [i for i in range(len(self.subsets)) if i != self.member_index]

    def subset_of(self, household_id: str) -> int:
        for i, s in enumerate(self.subsets):
            if household_id in s:
                return i
        raise KeyError(household_id)


def partition(households: Iterable[str], seed: int) -> SubsetPartition:
    """Shuffle households under ``seed`` and deal them round-robin into 5 subsets."""
    ids = sorted(set(households))
    if len(ids) < N_SUBSETS:
        raise DomainError(f"partition needs at least {N_SUBSETS} households, got {len(ids)}")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    subsets = tuple(tuple(shuffled[i::N_SUBSETS]) for i in range(N_SUBSETS))
    return SubsetPartition(subsets, int(rng.integers(N_SUBSETS)), int(seed))


def group_by_household(curves: Iterable[Curve]) -> dict[str, list[Curve]]:
    groups: dict[str, list[Curve]] = defaultdict(list)
    for c in curves:
        groups[c.household_id].append(c)
    return dict(groups)


def split_by_partition(curves: Sequence[Curve], part: SubsetPartition) -> list[list[Curve]]:
    groups = group_by_household(curves)
    return [[c for hid in subset for c in groups.get(hid, [])] for subset in part.subsets]


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SyntheticLoadConfig:
    """Per-household parameter ranges for the synthetic load simulator.

    Each household draws its parameters uniformly from the ranges once. Units
    are kWh per half hour; ``spike_rate`` is the expected number of spikes per
    sample and ``phase`` is the daily peak position in samples.
    """

    n_households: int = 25
    frames_per_household: int = 10
    frame_len: int = 96
    base_level: tuple[float, float] = (0.05, 0.5)
    daily_amplitude: tuple[float, float] = (0.02, 0.4)
    spike_rate: tuple[float, float] = (0.005, 0.05)
    spike_magnitude: tuple[float, float] = (0.3, 2.0)
    noise_sigma: tuple[float, float] = (0.01, 0.1)
    phase: tuple[float, float] = (0.0, 48.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("n_households", "frames_per_household", "frame_len"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        for name in ("base_level", "daily_amplitude", "spike_rate", "spike_magnitude", "noise_sigma", "phase"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise DomainError(f"{name} range must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        if self.noise_sigma[0] <= 0:
            raise DomainError("noise_sigma must be strictly positive")


def synth_household(cfg: SyntheticLoadConfig, rng: np.random.Generator) -> np.ndarray:
    """Readings for one household as a (frames, frame_len) array."""
    draw = lambda rng_range: rng.uniform(*rng_range)  # noqa: E731
    base, amp = draw(cfg.base_level), draw(cfg.daily_amplitude)
    rate, mag = draw(cfg.spike_rate), draw(cfg.spike_magnitude)
    sigma, phase = draw(cfg.noise_sigma), draw(cfg.phase)
    n = cfg.frames_per_household * cfg.frame_len
    t = np.arange(n)
    x = base + amp * np.sin(2 * np.pi * (t - phase) / SAMPLES_PER_DAY)
    n_spikes = rng.poisson(rate * n)
    where = rng.integers(0, n, size=n_spikes)
    np.add.at(x, where, mag * rng.exponential(1.0, size=n_spikes))
    x += rng.normal(0.0, sigma, size=n)
    return np.maximum(x, 0.0).reshape(cfg.frames_per_household, cfg.frame_len)


def synth_load(cfg: SyntheticLoadConfig) -> list[Curve]:
    curves = []
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_households)
    for h, ss in enumerate(children):
        frames = synth_household(cfg, np.random.default_rng(ss))
        curves.extend(Curve(f"synth-{h:04d}", row) for row in frames)
    return curves


# -- curve files ------------------------------------------------------------


def save_curves(path, curves: Sequence[Curve]) -> None:
    """Write curves as GPC1: magic, u32 frame_len, u32 count, then per curve a
    u16-length-prefixed UTF-8 household id and frame_len float32 values."""
    frame_len = len(curves[0]) if curves else 0
    parts = [CURVE_MAGIC, struct.pack("<II", frame_len, len(curves))]
    for c in curves:
        if len(c) != frame_len:
            raise DomainError(f"curve of length {len(c)} in a file of frame_len {frame_len}")
        hid = c.household_id.encode("utf-8")
        parts.append(struct.pack("<H", len(hid)) + hid)
        parts.append(c.values.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_curves(path, scale: Scale = Scale.RAW) -> list[Curve]:
    buf = Path(path).read_bytes()
    if buf[:4] != CURVE_MAGIC:
        raise DataError(f"{path}: not a curve file (bad magic)")
    try:
        frame_len, count = struct.unpack_from("<II", buf, 4)
        pos = 12
        curves = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            hid = buf[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            values = np.frombuffer(buf, dtype="<f4", count=frame_len, offset=pos)
            pos += 4 * frame_len
            curves.append(Curve(hid, values.astype(np.float64), scale))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: truncated or corrupt curve file ({exc})") from exc
    return curves
