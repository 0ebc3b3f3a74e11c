"""Pose ingestion: keypoint files, upper-body selection, normalization, clip slicing.

External pose estimators produce 17 COCO-format keypoints per frame as
(x, y, confidence) triples. This module parses that interchange format,
reduces each frame to the fixed 9-joint upper body (synthesizing a neck
from the shoulder midpoint), re-expresses coordinates relative to the
neck/hip centroid, and slices visible runs into fixed-length clips that
the classifier trains on.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, MissingLabelError, ParseError, SchemaError
from .skeleton import JOINT_NAMES, L_HIP, N_JOINTS, NECK, R_HIP

TREMOR_TYPES = ("PT", "ET", "FT", "DT", "NT", "OTHER", "UNLABELED")

N_COCO_KEYPOINTS = 17
KEYPOINT_VALUES = N_COCO_KEYPOINTS * 3  # 51

# COCO keypoint indices consumed here; head, knee and ankle joints are ignored.
COCO_L_SHOULDER = 5
COCO_R_SHOULDER = 6
COCO_L_ELBOW = 7
COCO_R_ELBOW = 8
COCO_L_WRIST = 9
COCO_R_WRIST = 10
COCO_L_HIP = 11
COCO_R_HIP = 12

# Upper-body joint order (skeleton.JOINT_NAMES) mapped onto COCO sources.
# The neck (index 0) has no COCO source and is synthesized.
_COCO_SOURCE = (
    COCO_R_SHOULDER,
    COCO_R_ELBOW,
    COCO_R_WRIST,
    COCO_L_SHOULDER,
    COCO_L_ELBOW,
    COCO_L_WRIST,
    COCO_R_HIP,
    COCO_L_HIP,
)

DEFAULT_CLIP_LEN = 100
VISIBILITY_THRESHOLD = 0.05  # minimum mean joint confidence for a visible frame


@dataclass(frozen=True)
class Keypoint2D:
    """One 2D keypoint with estimator confidence."""

    x: float
    y: float
    c: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise DataError(f"non-finite keypoint coordinate ({self.x}, {self.y})")
        if not 0.0 <= self.c <= 1.0:
            raise DataError(f"confidence {self.c} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class PoseFrame:
    """One 9-joint frame; `joints` is a (9, 3) array of (x, y, c) rows."""

    joints: np.ndarray
    frame_index: int

    def __post_init__(self):
        if self.joints.shape != (N_JOINTS, 3):
            raise SchemaError(f"expected (9, 3) joints, got {self.joints.shape}")
        if not np.isfinite(self.joints).all():
            raise DataError(f"non-finite joint values in frame {self.frame_index}")
        if self.frame_index < 0:
            raise DataError(f"negative frame index {self.frame_index}")

    def joint(self, i: int) -> Keypoint2D:
        x, y, c = self.joints[i]
        return Keypoint2D(float(x), float(y), float(c))

    @property
    def mean_confidence(self) -> float:
        return float(self.joints[:, 2].mean())


@dataclass(frozen=True, eq=False)
class RawPoseSequence:
    """Per-video 17-keypoint frames as parsed, before upper-body selection.

    `frames` is a (T, 17, 3) array ordered by `frame_indices`.
    """

    video_id: str
    subject_id: str
    fps: float
    frame_indices: np.ndarray  # (T,) int64, strictly increasing
    frames: np.ndarray  # (T, 17, 3) float64

    def __post_init__(self):
        if self.fps <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")
        if self.frames.ndim != 3 or self.frames.shape[1:] != (N_COCO_KEYPOINTS, 3):
            raise SchemaError(f"expected (T, 17, 3) frames, got {self.frames.shape}")
        if len(self.frame_indices) != len(self.frames):
            raise SchemaError("frame_indices and frames length mismatch")
        if len(self.frame_indices) and (np.diff(self.frame_indices) <= 0).any():
            raise DataError(
                f"frame indices of video {self.video_id!r} are not strictly increasing"
            )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Per-video time series of 9-joint frames with identity and labels."""

    frames: tuple[PoseFrame, ...]
    fps: float
    subject_id: str
    video_id: str
    tremor_type: str = "UNLABELED"
    rating_left: int | None = None
    rating_right: int | None = None

    def __post_init__(self):
        if self.fps <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")
        if self.tremor_type not in TREMOR_TYPES:
            raise DataError(f"unknown tremor type {self.tremor_type!r}")
        for rating in (self.rating_left, self.rating_right):
            if rating is not None and not 0 <= rating <= 7:
                raise DataError(f"rating {rating} outside [0, 7]")
        indices = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DataError(
                f"frame indices of video {self.video_id!r} are not strictly increasing"
            )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class ClipSample:
    """Fixed-length training unit: features are (9 joints, clip_len, 3 channels).

    Channels are ordered (x, y, c). `label` is the task class index and
    stays None until a task mapping assigns it; `tremor_type` and
    `rating` carry the raw video labels so any task can be derived.
    """

    features: np.ndarray
    subject_id: str
    video_id: str
    tremor_type: str = "UNLABELED"
    rating: int | None = None
    label: int | None = None

    def __post_init__(self):
        if self.features.ndim != 3 or self.features.shape[0] != N_JOINTS:
            raise SchemaError(f"expected (9, T, 3) features, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise DataError(f"non-finite features in clip of {self.video_id!r}")

    @property
    def clip_len(self) -> int:
        return self.features.shape[1]


def select_upper_body(raw_frame: np.ndarray, frame_index: int = 0) -> PoseFrame:
    """Reduce a 17-keypoint COCO frame to the 9 upper-body joints.

    The neck is synthesized as the shoulder midpoint with the smaller of
    the two shoulder confidences; head, knee and ankle keypoints are
    never read.
    """
    raw_frame = np.asarray(raw_frame, dtype=np.float64)
    if raw_frame.shape != (N_COCO_KEYPOINTS, 3):
        raise SchemaError(f"expected (17, 3) keypoints, got {raw_frame.shape}")
    joints = np.empty((N_JOINTS, 3))
    ls, rs = raw_frame[COCO_L_SHOULDER], raw_frame[COCO_R_SHOULDER]
    joints[NECK, :2] = (ls[:2] + rs[:2]) / 2.0
    joints[NECK, 2] = min(ls[2], rs[2])
    joints[1:] = raw_frame[list(_COCO_SOURCE)]
    return PoseFrame(joints=joints, frame_index=frame_index)


def normalize_pose(frame: PoseFrame) -> PoseFrame:
    """Subtract the neck/hips centroid from every joint position."""
    origin = frame.joints[[NECK, R_HIP, L_HIP], :2].mean(axis=0)
    joints = frame.joints.copy()
    joints[:, :2] -= origin
    return PoseFrame(joints=joints, frame_index=frame.frame_index)


def upper_body_sequence(raw: RawPoseSequence) -> PoseSequence:
    frames = tuple(
        select_upper_body(kp, int(idx)) for idx, kp in zip(raw.frame_indices, raw.frames)
    )
    return PoseSequence(
        frames=frames, fps=raw.fps, subject_id=raw.subject_id, video_id=raw.video_id
    )


def normalize_sequence(seq: PoseSequence) -> PoseSequence:
    return replace(seq, frames=tuple(normalize_pose(f) for f in seq.frames))


def _visible_runs(seq: PoseSequence) -> list[list[PoseFrame]]:
    """Maximal runs of consecutive frame indices whose frames are visible."""
    runs: list[list[PoseFrame]] = []
    current: list[PoseFrame] = []
    for frame in seq.frames:
        if frame.mean_confidence < VISIBILITY_THRESHOLD:
            if current:
                runs.append(current)
            current = []
            continue
        if current and frame.frame_index != current[-1].frame_index + 1:
            runs.append(current)
            current = []
        current.append(frame)
    if current:
        runs.append(current)
    return runs


def slice_clips(seq: PoseSequence, clip_len: int = DEFAULT_CLIP_LEN) -> list[ClipSample]:
    """Cut each visible run into non-overlapping clips of `clip_len` frames.

    Trailing frames that do not fill a clip are dropped; a video shorter
    than `clip_len` yields no clips. Clips inherit the video's identity
    and raw labels (rating = max of present hand ratings).
    """
    if clip_len < 1:
        raise ValueError(f"clip_len must be >= 1, got {clip_len}")
    rating: int | None = None
    if seq.rating_left is not None or seq.rating_right is not None:
        rating = merge_hand_ratings(seq.rating_left, seq.rating_right)
    clips = []
    for run in _visible_runs(seq):
        for start in range(0, len(run) - clip_len + 1, clip_len):
            stacked = np.stack([f.joints for f in run[start : start + clip_len]])
            clips.append(
                ClipSample(
                    features=np.ascontiguousarray(stacked.transpose(1, 0, 2)),
                    subject_id=seq.subject_id,
                    video_id=seq.video_id,
                    tremor_type=seq.tremor_type,
                    rating=rating,
                )
            )
    return clips


def merge_hand_ratings(left: int | None, right: int | None) -> int:
    """Collapse per-hand ratings to one video rating by taking the maximum."""
    present = [r for r in (left, right) if r is not None]
    if not present:
        raise MissingLabelError("both hand ratings are absent")
    return max(present)


class RatingScheme(Enum):
    THREE_ONLY = "three_only"  # classes from ratings {1, 2, 3}
    THREE_PLUS = "three_plus"  # classes from ratings {1, 2, >=3}


def group_ratings(rating: int, scheme: RatingScheme) -> int | None:
    """Map a 0-7 rating to a class index, or None when the scheme excludes it."""
    if not 0 <= rating <= 7:
        raise ValueError(f"rating {rating} outside [0, 7]")
    if rating == 0:
        return None
    if scheme is RatingScheme.THREE_ONLY:
        return rating - 1 if rating <= 3 else None
    if scheme is RatingScheme.THREE_PLUS:
        return min(rating, 3) - 1
    raise ValueError(f"unknown rating scheme {scheme!r}")


# ---------------------------------------------------------------------------
# Keypoint interchange format (JSON array-of-records or 54-column CSV)
# ---------------------------------------------------------------------------

CSV_HEADER = ["video_id", "subject_id", "frame_index"] + [
    f"kp{k:02d}_{axis}" for k in range(N_COCO_KEYPOINTS) for axis in ("x", "y", "c")
]


def _record_to_row(video_id, subject_id, frame_index, keypoints, record_no):
    if len(keypoints) != KEYPOINT_VALUES:
        raise SchemaError(
            f"record {record_no}: expected {KEYPOINT_VALUES} keypoint values, "
            f"got {len(keypoints)}"
        )
    try:
        values = np.asarray([float(v) for v in keypoints], dtype=np.float64)
        frame_index = int(frame_index)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"record {record_no}: {exc}") from None
    if not np.isfinite(values).all():
        raise DataError(f"record {record_no}: non-finite keypoint value")
    return str(video_id), str(subject_id), frame_index, values.reshape(N_COCO_KEYPOINTS, 3)


def _parse_json_records(text: str):
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON keypoint file: {exc}") from None
    if not isinstance(records, list):
        raise SchemaError("JSON keypoint file must be an array of records")
    for n, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise SchemaError(f"record {n}: expected an object")
        try:
            yield _record_to_row(
                rec["video_id"], rec["subject_id"], rec["frame_index"], rec["keypoints"], n
            )
        except KeyError as exc:
            raise SchemaError(f"record {n}: missing field {exc}") from None


def _parse_csv_records(text: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return
    if len(header) != len(CSV_HEADER):
        raise SchemaError(
            f"CSV keypoint header must have {len(CSV_HEADER)} columns, got {len(header)}"
        )
    for n, row in enumerate(reader):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise SchemaError(f"record {n}: expected {len(CSV_HEADER)} columns, got {len(row)}")
        yield _record_to_row(row[0], row[1], row[2], row[3:], n)


def load_keypoint_file(path: str | Path, fps: float = 30.0) -> list[RawPoseSequence]:
    """Parse a keypoint interchange file into one raw sequence per video.

    The interchange format carries no frame rate, so `fps` is attached
    here. Frames are ordered by frame_index within each video; an empty
    file yields an empty list.
    """
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    text = Path(path).read_text()
    if not text.strip():
        return []
    records = _parse_json_records(text) if text.lstrip()[0] in "[{" else _parse_csv_records(text)

    by_video: dict[str, dict] = {}
    for video_id, subject_id, frame_index, keypoints in records:
        entry = by_video.setdefault(video_id, {"subject_id": subject_id, "frames": []})
        if entry["subject_id"] != subject_id:
            raise DataError(
                f"video {video_id!r} appears under subjects "
                f"{entry['subject_id']!r} and {subject_id!r}"
            )
        entry["frames"].append((frame_index, keypoints))

    sequences = []
    for video_id, entry in by_video.items():
        entry["frames"].sort(key=lambda item: item[0])
        indices = np.array([i for i, _ in entry["frames"]], dtype=np.int64)
        frames = np.stack([kp for _, kp in entry["frames"]])
        sequences.append(
            RawPoseSequence(
                video_id=video_id,
                subject_id=entry["subject_id"],
                fps=fps,
                frame_indices=indices,
                frames=frames,
            )
        )
    return sequences


def write_keypoint_file(path: str | Path, sequences: list[RawPoseSequence], fmt: str = "json"):
    """Write raw sequences in the interchange format (`fmt` is 'json' or 'csv')."""
    path = Path(path)
    if fmt == "json":
        records = [
            {
                "video_id": seq.video_id,
                "subject_id": seq.subject_id,
                "frame_index": int(idx),
                "keypoints": [float(v) for v in kp.ravel()],
            }
            for seq in sequences
            for idx, kp in zip(seq.frame_indices, seq.frames)
        ]
        path.write_text(json.dumps(records))
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for seq in sequences:
                for idx, kp in zip(seq.frame_indices, seq.frames):
                    writer.writerow(
                        [seq.video_id, seq.subject_id, int(idx)] + [repr(float(v)) for v in kp.ravel()]
                    )
    else:
        raise ValueError(f"unknown keypoint format {fmt!r}")


# ---------------------------------------------------------------------------
# Labels file (CSV: video_id, subject_id, tremor_type, rating_left, rating_right)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelRecord:
    video_id: str
    subject_id: str
    tremor_type: str = "UNLABELED"
    rating_left: int | None = None
    rating_right: int | None = None


LABELS_HEADER = ["video_id", "subject_id", "tremor_type", "rating_left", "rating_right"]


def load_labels_file(path: str | Path) -> dict[str, LabelRecord]:
    """Read the labels CSV keyed by video_id; empty cells mean absent."""
    records: dict[str, LabelRecord] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(LABELS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"labels file missing columns: {sorted(missing)}")
        for n, row in enumerate(reader):
            tremor_type = (row["tremor_type"] or "UNLABELED").strip() or "UNLABELED"
            if tremor_type not in TREMOR_TYPES:
                raise DataError(f"labels row {n}: unknown tremor type {tremor_type!r}")

            def rating_of(cell, n=n):
                cell = (cell or "").strip()
                if not cell:
                    return None
                try:
                    value = int(cell)
                except ValueError:
                    raise ParseError(f"labels row {n}: bad rating {cell!r}") from None
                if not 0 <= value <= 7:
                    raise DataError(f"labels row {n}: rating {value} outside [0, 7]")
                return value

            video_id = row["video_id"]
            if video_id in records:
                raise DataError(f"labels row {n}: duplicate video_id {video_id!r}")
            records[video_id] = LabelRecord(
                video_id=video_id,
                subject_id=row["subject_id"],
                tremor_type=tremor_type,
                rating_left=rating_of(row["rating_left"]),
                rating_right=rating_of(row["rating_right"]),
            )
    return records


def write_labels_file(path: str | Path, records: list[LabelRecord]):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABELS_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.video_id,
                    rec.subject_id,
                    rec.tremor_type,
                    "" if rec.rating_left is None else rec.rating_left,
                    "" if rec.rating_right is None else rec.rating_right,
                ]
            )


def apply_labels(sequences: list[PoseSequence], labels: dict[str, LabelRecord]) -> list[PoseSequence]:
    """Attach label records to sequences by video_id; unlabeled videos pass through."""
    labeled = []
    for seq in sequences:
        rec = labels.get(seq.video_id)
        if rec is None:
            labeled.append(seq)
            continue
        if rec.subject_id != seq.subject_id:
            raise DataError(
                f"labels assign video {seq.video_id!r} to subject {rec.subject_id!r} "
                f"but keypoints say {seq.subject_id!r}"
            )
        labeled.append(
            replace(
                seq,
                tremor_type=rec.tremor_type,
                rating_left=rec.rating_left,
                rating_right=rec.rating_right,
            )
        )
    return labeled


# ---------------------------------------------------------------------------
# Clip container: a flat binary file holding sliced clips plus raw labels.
#
# Layout (all integers little-endian):
#   magic            8 bytes  b"TRMCLIP1"
#   n_clips          u32
#   n_joints         u32
#   clip_len         u32
#   n_channels       u32
#   per clip:
#     subject_id     u16 length + UTF-8 bytes
#     video_id       u16 length + UTF-8 bytes
#     tremor_type    u8 (index into TREMOR_TYPES)
#     rating         i16 (-1 = absent)
#     label          i16 (-1 = unassigned)
#     features       n_joints * clip_len * n_channels float64 values
# ---------------------------------------------------------------------------

CLIPS_MAGIC = b"TRMCLIP1"


def write_clips(path: str | Path, clips: list[ClipSample]):
    if clips:
        clip_len = clips[0].clip_len
        if any(c.clip_len != clip_len for c in clips):
            raise ValueError("all clips in a container must share one clip length")
    else:
        clip_len = DEFAULT_CLIP_LEN
    with Path(path).open("wb") as fh:
        fh.write(CLIPS_MAGIC)
        fh.write(struct.pack("<IIII", len(clips), N_JOINTS, clip_len, 3))
        for clip in clips:
            for text in (clip.subject_id, clip.video_id):
                blob = text.encode("utf-8")
                fh.write(struct.pack("<H", len(blob)))
                fh.write(blob)
            fh.write(
                struct.pack(
                    "<Bhh",
                    TREMOR_TYPES.index(clip.tremor_type),
                    -1 if clip.rating is None else clip.rating,
                    -1 if clip.label is None else clip.label,
                )
            )
            fh.write(np.ascontiguousarray(clip.features, dtype="<f8").tobytes())


def read_clips(path: str | Path) -> list[ClipSample]:
    data = Path(path).read_bytes()
    if data[:8] != CLIPS_MAGIC:
        raise SchemaError(f"{path}: not a clip container (bad magic)")
    n_clips, n_joints, clip_len, n_channels = struct.unpack_from("<IIII", data, 8)
    if n_joints != N_JOINTS or n_channels != 3:
        raise SchemaError(f"{path}: unsupported clip geometry {n_joints}x{n_channels}")
    offset = 24
    feature_bytes = n_joints * clip_len * n_channels * 8
    clips = []
    try:
        for _ in range(n_clips):
            texts = []
            for _ in range(2):
                (length,) = struct.unpack_from("<H", data, offset)
                offset += 2
                texts.append(data[offset : offset + length].decode("utf-8"))
                offset += length
            type_idx, rating, label = struct.unpack_from("<Bhh", data, offset)
            offset += 5
            features = np.frombuffer(data, dtype="<f8", count=n_joints * clip_len * n_channels, offset=offset)
            offset += feature_bytes
            clips.append(
                ClipSample(
                    features=features.reshape(n_joints, clip_len, n_channels).copy(),
                    subject_id=texts[0],
                    video_id=texts[1],
                    tremor_type=TREMOR_TYPES[type_idx],
                    rating=None if rating < 0 else int(rating),
                    label=None if label < 0 else int(label),
                )
            )
    except (struct.error, IndexError) as exc:
        raise ParseError(f"{path}: truncated clip container ({exc})") from None
    return clips


def ingest_sequences(
    raw_sequences: list[RawPoseSequence],
    labels: dict[str, LabelRecord] | None = None,
    clip_len: int = DEFAULT_CLIP_LEN,
) -> tuple[list[PoseSequence], list[ClipSample]]:
    """Full ingest pipeline: select upper body, normalize, label, slice."""
    sequences = [normalize_sequence(upper_body_sequence(raw)) for raw in raw_sequences]
    if labels is not None:
        sequences = apply_labels(sequences, labels)
    clips = [clip for seq in sequences for clip in slice_clips(seq, clip_len)]
    return sequences, clips


def joint_series(seq: PoseSequence, joint: int) -> np.ndarray:
    """Stack one joint's (x, y, c) values over time as a (T, 3) array."""
    if not seq.frames:
        return np.zeros((0, 3))
    return np.stack([f.joints[joint] for f in seq.frames])


__all__ = [
    "TREMOR_TYPES",
    "Keypoint2D",
    "PoseFrame",
    "RawPoseSequence",
    "PoseSequence",
    "ClipSample",
    "LabelRecord",
    "RatingScheme",
    "select_upper_body",
    "normalize_pose",
    "upper_body_sequence",
    "normalize_sequence",
    "slice_clips",
    "merge_hand_ratings",
    "group_ratings",
    "load_keypoint_file",
    "write_keypoint_file",
    "load_labels_file",
    "write_labels_file",
    "apply_labels",
    "write_clips",
    "read_clips",
    "ingest_sequences",
    "joint_series",
    "JOINT_NAMES",
]
