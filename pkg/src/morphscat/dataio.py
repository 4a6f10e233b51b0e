"""Manifests, subject-disjoint splits, synthetic fixtures, and file formats.

The feature cache and model container are little-endian binary files with a
magic tag, a u32 format version, and a trailing CRC32 over everything that
precedes it, so truncation and version skew are told apart cleanly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .classifier import KernelSpec, SrkdaModel
from .errors import (
    ChecksumError,
    ConfigMismatch,
    IoError,
    LeakageError,
    ParseError,
    SchemaError,
    VersionError,
)
from .pipeline import DmadModel, PairFeatures
from .scattering import ScatteringConfig

MANIFEST_COLUMNS = (
    "pair_id",
    "suspicious_path",
    "trusted_path",
    "label",
    "morph_factor",
    "subject_ids",
)

LABEL_MORPH = "morph"
LABEL_BONAFIDE = "bonafide"

FEATURE_MAGIC = b"WSNF"
FEATURE_VERSION = 1
MODEL_MAGIC = b"DMDL"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    suspicious_path: Path
    trusted_path: Path
    label: str
    morph_factor: float | None
    subject_ids: tuple[str, ...]


def load_manifest(path) -> list[PairRecord]:
    """Parse and validate a pair manifest CSV.

    Relative image paths are resolved against the manifest's directory.
    Referenced files are not opened here; existence is checked lazily when
    features are extracted.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc

    base = path.parent
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader, None)
    except csv.Error as exc:
        raise ParseError(str(exc), line=1) from exc
    if header is None or tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
        raise SchemaError(
            f"manifest header must be {','.join(MANIFEST_COLUMNS)}", line=1
        )

    records = []
    seen_ids = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_COLUMNS):
            raise ParseError(
                f"expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}", line=lineno
            )
        pair_id, susp, trusted, label, factor_s, subjects_s = (v.strip() for v in row)
        if not pair_id:
            raise SchemaError("empty pair_id", line=lineno)
        if pair_id in seen_ids:
            raise SchemaError(f"duplicate pair_id {pair_id!r}", line=lineno)
        seen_ids.add(pair_id)
        if not susp or not trusted:
            raise SchemaError("empty image path", line=lineno)
        if label not in (LABEL_MORPH, LABEL_BONAFIDE):
            raise SchemaError(f"unknown label {label!r}", line=lineno)

        factor: float | None
        if factor_s in ("", "none"):
            factor = None
        else:
            try:
                factor = float(factor_s)
            except ValueError as exc:
                raise ParseError(f"bad morph_factor {factor_s!r}", line=lineno) from exc
            if not 0.0 < factor < 1.0:
                raise SchemaError(f"morph_factor {factor} outside (0, 1)", line=lineno)

        subjects = tuple(s for s in subjects_s.split(";") if s)
        if label == LABEL_MORPH:
            if factor is None:
                raise SchemaError("morph row needs a morph_factor", line=lineno)
            if len(subjects) < 2:
                raise SchemaError("morph row needs >= 2 subject ids", line=lineno)
        else:
            if factor is not None:
                raise SchemaError("bonafide row must not carry a morph_factor", line=lineno)
            if len(subjects) < 1:
                raise SchemaError("bonafide row needs a subject id", line=lineno)

        records.append(
            PairRecord(
                pair_id=pair_id,
                suspicious_path=base / susp,
                trusted_path=base / trusted,
                label=label,
                morph_factor=factor,
                subject_ids=subjects,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Split handling


@dataclass(frozen=True)
class SplitSpec:
    train_subjects: frozenset
    test_subjects: frozenset

    def __post_init__(self):
        overlap = self.train_subjects & self.test_subjects
        if overlap:
            raise SchemaError(f"subjects on both sides of the split: {sorted(overlap)}")

    @classmethod
    def from_json_file(cls, path) -> "SplitSpec":
        try:
            blob = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(f"cannot read split file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"split file {path} is not valid JSON: {exc}") from exc
        try:
            return cls(
                train_subjects=frozenset(blob["train_subjects"]),
                test_subjects=frozenset(blob["test_subjects"]),
            )
        except KeyError as exc:
            raise SchemaError(f"split file missing key {exc}") from exc


@dataclass(frozen=True)
class SplitReport:
    """Per-side pair counts broken down by label and morph factor."""

    train_bonafide: int
    train_morph_by_factor: dict
    test_bonafide: int
    test_morph_by_factor: dict
    warnings: tuple[str, ...]


def split_sides(records, split: SplitSpec) -> dict:
    """Map pair_id -> "train"/"test"; raises on leakage or unassigned subjects."""
    all_subjects = {s for r in records for s in r.subject_ids}
    unassigned = all_subjects - split.train_subjects - split.test_subjects
    if unassigned:
        raise SchemaError(f"manifest subjects not assigned by split: {sorted(unassigned)}")
    sides = {}
    leaking = []
    for r in records:
        in_train = [s in split.train_subjects for s in r.subject_ids]
        if all(in_train):
            sides[r.pair_id] = "train"
        elif not any(in_train):
            sides[r.pair_id] = "test"
        else:
            leaking.append(r.pair_id)
    if leaking:
        raise LeakageError(
            f"pairs straddle the subject split: {', '.join(sorted(leaking))}",
            pairs=sorted(leaking),
        )
    return sides


def check_split(records, split: SplitSpec) -> SplitReport:
    """Validate subject-disjointness and summarize both sides."""
    sides = split_sides(records, split)
    counts = {
        "train": {"bonafide": 0, "morph": {}},
        "test": {"bonafide": 0, "morph": {}},
    }
    for r in records:
        side = counts[sides[r.pair_id]]
        if r.label == LABEL_BONAFIDE:
            side["bonafide"] += 1
        else:
            side["morph"][r.morph_factor] = side["morph"].get(r.morph_factor, 0) + 1
    warnings = []
    for name in ("train", "test"):
        n = counts[name]["bonafide"] + sum(counts[name]["morph"].values())
        if n == 0:
            warnings.append(f"{name} side of the split contains no pairs")
    return SplitReport(
        train_bonafide=counts["train"]["bonafide"],
        train_morph_by_factor=counts["train"]["morph"],
        test_bonafide=counts["test"]["bonafide"],
        test_morph_by_factor=counts["test"]["morph"],
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Synthetic fixture


MORPH_FACTORS = (0.3, 0.5, 0.7)


def morph_blend(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Pixel alpha-blend alpha*a + (1-alpha)*b, rounded half-to-even."""
    blend = alpha * a.astype(np.float64) + (1.0 - alpha) * b.astype(np.float64)
    return np.rint(blend).astype(np.uint8)


def _subject_face(rng, size=250):
    """Smooth pseudo-face: elliptical head blob, eye/mouth marks, skin tint."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = 125.0 + rng.uniform(-8, 8)
    cy = 128.0 + rng.uniform(-8, 8)
    ax = 62.0 + rng.uniform(-8, 8)
    ay = 82.0 + rng.uniform(-8, 8)
    head = np.exp(-(((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2) ** 2)

    def blotch(x0, y0, sx, sy):
        return np.exp(-(((xx - x0) / sx) ** 2 + ((yy - y0) / sy) ** 2))

    eye_dx = 24.0 + rng.uniform(-4, 4)
    eye_y = cy - 22.0 + rng.uniform(-4, 4)
    marks = (
        blotch(cx - eye_dx, eye_y, 7, 5)
        + blotch(cx + eye_dx, eye_y, 7, 5)
        + blotch(cx + rng.uniform(-3, 3), cy + 34 + rng.uniform(-4, 4), 14, 5)
    )

    luma_texture = gaussian_filter(rng.standard_normal((size, size)), 2.5)
    luma_texture *= 22.0 / luma_texture.std()
    tint_texture = gaussian_filter(rng.standard_normal((size, size)), 6.0)
    tint_texture *= 10.0 / tint_texture.std()

    base = 55.0 + 130.0 * head - 70.0 * marks + luma_texture * head
    skin = rng.uniform(-0.12, 0.12)  # per-subject chroma cast
    channels = [
        base * (1.0 + skin) + 0.6 * tint_texture,
        base,
        base * (1.0 - skin) - 0.6 * tint_texture,
    ]
    return np.stack(channels, axis=-1)


def _render_session(face: np.ndarray, rng) -> np.ndarray:
    """Apply capture-session effects: gain, smooth field, sensor noise."""
    gain = rng.uniform(0.96, 1.04)
    field = gaussian_filter(rng.standard_normal(face.shape[:2]), 12.0)
    field *= 4.0 / field.std()
    noisy = face * gain + field[..., None] + rng.normal(0.0, 1.5, face.shape)
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def generate_fixture(seed: int, n_subjects: int, out_dir) -> Path:
    """Write a deterministic synthetic image set plus its manifest.

    Per subject: one enrolled photo (session 0) and two trusted captures.
    Bona fide pairs compare same-subject sessions; morph pairs blend the
    enrolled photos of consecutive subject pairs (2k, 2k+1) at the standard
    factors, each checked against a trusted capture of either contributor,
    so splits that keep those subject pairs together stay leak-free.
    """
    if n_subjects < 4:
        raise ValueError("fixture needs at least 4 subjects")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create fixture directory {out_dir}: {exc}") from exc

    def save(name, pixels) -> str:
        rel = f"images/{name}"
        Image.fromarray(pixels, mode="RGB").save(out_dir / rel, format="PNG")
        return rel

    subjects = [f"s{i:03d}" for i in range(n_subjects)]
    photos = {}
    for i, sid in enumerate(subjects):
        face = _subject_face(np.random.default_rng([seed, i, 0]))
        sessions = [
            _render_session(face, np.random.default_rng([seed, i, 1 + k]))
            for k in range(3)
        ]
        photos[sid] = sessions[0]
        for k, px in enumerate(sessions):
            save(f"{sid}_session{k}.png", px)

    rows = []
    for sid in subjects:
        for k, session in enumerate((0, 2)):
            rows.append(
                (
                    f"bf_{sid}_{k}",
                    f"images/{sid}_session{session}.png",
                    f"images/{sid}_session1.png",
                    LABEL_BONAFIDE,
                    "none",
                    sid,
                )
            )
    for a_idx in range(0, n_subjects - 1, 2):
        sid_a, sid_b = subjects[a_idx], subjects[a_idx + 1]
        for factor in MORPH_FACTORS:
            morph_px = morph_blend(photos[sid_a], photos[sid_b], factor)
            ftag = f"{int(round(factor * 100)):02d}"
            rel = save(f"morph_{sid_a}_{sid_b}_f{ftag}.png", morph_px)
            for trusted_sid in (sid_a, sid_b):
                rows.append(
                    (
                        f"mp_{sid_a}_{sid_b}_f{ftag}_{trusted_sid}",
                        rel,
                        f"images/{trusted_sid}_session1.png",
                        LABEL_MORPH,
                        f"{factor:g}",
                        f"{sid_a};{sid_b}",
                    )
                )

    manifest_path = out_dir / "manifest.csv"
    with manifest_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        writer.writerows(rows)
    return manifest_path


# ---------------------------------------------------------------------------
# Binary helpers


def _pack_array(buf: bytearray, arr: np.ndarray):
    data = np.ascontiguousarray(arr, dtype="<f8")
    buf += struct.pack("<I", data.size)
    buf += data.tobytes()


class _Cursor:
    """Bounded little-endian reader that maps underruns to ChecksumError."""

    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.off = offset

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise ChecksumError("file truncated")
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self) -> np.ndarray:
        n = self.u32()
        return np.frombuffer(self.take(8 * n), dtype="<f8").copy()

    def string(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")


def _finish_file(path, body: bytearray):
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    try:
        Path(path).write_bytes(bytes(body))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _open_checked(path, magic: bytes, version: int) -> _Cursor:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < len(magic) + 8:
        # too short to even hold magic+version+crc; treat as truncation
        raise ChecksumError(f"{path} is too short")
    if blob[: len(magic)] != magic:
        raise VersionError(f"{path} has wrong magic bytes")
    got_version = struct.unpack("<I", blob[len(magic) : len(magic) + 4])[0]
    if got_version != version:
        raise VersionError(f"{path} has unsupported version {got_version}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError(f"{path} failed its CRC check")
    return _Cursor(blob[:-4], offset=len(magic) + 4)


# ---------------------------------------------------------------------------
# Feature cache


def write_features(path, batch) -> None:
    """Serialize PairFeatures records (all sharing one config hash)."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty feature batch")
    hashes = {pf.config_hash for pf in batch}
    if len(hashes) != 1:
        raise ConfigMismatch("feature batch mixes scattering configs")
    body = bytearray()
    body += FEATURE_MAGIC
    body += struct.pack("<I", FEATURE_VERSION)
    body += batch[0].config_hash
    body += struct.pack("<I", len(batch))
    for pf in batch:
        pid = pf.pair_id.encode("utf-8")
        body += struct.pack("<I", len(pid))
        body += pid
        for channel in (pf.fd_y, pf.fd_cb, pf.fd_cr):
            _pack_array(body, channel)
    _finish_file(path, body)


def read_features(path) -> list[PairFeatures]:
    """Load a feature cache written by write_features."""
    cur = _open_checked(path, FEATURE_MAGIC, FEATURE_VERSION)
    config_hash = cur.take(32)
    count = cur.u32()
    out = []
    for _ in range(count):
        pair_id = cur.string()
        fd_y, fd_cb, fd_cr = cur.array(), cur.array(), cur.array()
        out.append(
            PairFeatures(
                pair_id=pair_id,
                fd_y=fd_y,
                fd_cb=fd_cb,
                fd_cr=fd_cr,
                config_hash=config_hash,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Model container


def save_model(path, model: DmadModel) -> None:
    """Serialize a trained model with its scattering config and metadata."""
    header = {
        "tau": model.tau,
        "score_ranges": (
            None
            if model.score_ranges is None
            else {c: list(v) for c, v in model.score_ranges.items()}
        ),
        "metadata": model.metadata,
        "channels": {},
    }
    arrays = bytearray()
    for name in ("y", "cb", "cr"):
        ch: SrkdaModel = model.channel_models[name]
        header["channels"][name] = {
            "kernel_kind": ch.kernel.kind,
            "bandwidth": ch.kernel.bandwidth,
            "polarity": ch.polarity,
            "delta": ch.delta,
            "class_means": list(ch.class_means),
            "solver_residual": ch.solver_residual,
            "n_train": int(ch.training_features.shape[0]),
            "n_features": int(ch.training_features.shape[1]),
        }
        _pack_array(arrays, ch.alpha)
        _pack_array(arrays, ch.training_features.ravel())
    header_blob = json.dumps(header, sort_keys=True).encode("utf-8")

    body = bytearray()
    body += MODEL_MAGIC
    body += struct.pack("<I", MODEL_VERSION)
    body += model.config_hash
    body += struct.pack("<I", len(header_blob))
    body += header_blob
    body += arrays
    _finish_file(path, body)


def load_model(path) -> DmadModel:
    """Reconstruct a DmadModel saved by save_model (bitwise score-stable)."""
    cur = _open_checked(path, MODEL_MAGIC, MODEL_VERSION)
    config_hash = cur.take(32)
    header = json.loads(cur.string())
    channel_models = {}
    for name in ("y", "cb", "cr"):
        meta = header["channels"][name]
        alpha = cur.array()
        feats = cur.array().reshape(meta["n_train"], meta["n_features"])
        channel_models[name] = SrkdaModel(
            training_features=feats,
            alpha=alpha,
            kernel=KernelSpec(kind=meta["kernel_kind"], bandwidth=meta["bandwidth"]),
            polarity=int(meta["polarity"]),
            delta=float(meta["delta"]),
            class_means=tuple(meta["class_means"]),
            solver_residual=float(meta["solver_residual"]),
        )
    score_ranges = header["score_ranges"]
    if score_ranges is not None:
        score_ranges = {c: tuple(v) for c, v in score_ranges.items()}
    return DmadModel(
        channel_models=channel_models,
        config_hash=config_hash,
        tau=float(header["tau"]),
        score_ranges=score_ranges,
        metadata=header["metadata"],
    )


def file_digest(path) -> str:
    """Hex SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def scattering_config_from_file(path) -> ScatteringConfig:
    """Read a ScatteringConfig from a JSON or key=value config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    text = text.strip()
    base = ScatteringConfig().to_dict()
    if text.startswith("{"):
        try:
            overrides = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config file {path} is not valid JSON: {exc}") from exc
    else:
        overrides = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {raw!r}", line=lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                overrides[key] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad value for {key}: {value!r}", line=lineno) from exc
    unknown = set(overrides) - set(base)
    if unknown:
        raise SchemaError(f"unknown scattering config keys: {sorted(unknown)}")
    base.update(overrides)
    return ScatteringConfig.from_dict(base)
