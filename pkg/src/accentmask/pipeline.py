"""Corpus-level stages: featurization and augmented-corpus construction."""
from __future__ import annotations

import hashlib
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import frontend, rng
from .classifier import ClassifierModel
from .corpus import UtteranceRecord, load_manifest, save_manifest
from .frontend import Spectrogram
from .masking import MaskPolicy, apply_mask, build_mask
from .saliency import compute as compute_saliency

log = logging.getLogger(__name__)

AUGMENTED_MANIFEST = "augmented.jsonl"
FEATURE_MANIFEST = "features.jsonl"
_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


@dataclass
class StageResult:
    rows: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    manifest: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.errors


def safe_name(uid: str) -> str:
    """Filesystem-safe stem for an utterance id, stable across runs."""
    name = _UNSAFE.sub("_", uid)
    if name != uid or not name:
        name += "-" + hashlib.sha1(uid.encode("utf-8")).hexdigest()[:8]
    return name


def _relocate(rec: UtteranceRecord, manifest_dir: Path, out_dir: Path) -> dict:
    row = rec.to_dict()
    row["audio_path"] = os.path.relpath(manifest_dir / rec.audio_path, out_dir)
    if "spec_path" in row:
        row["spec_path"] = os.path.relpath(manifest_dir / row["spec_path"], out_dir)
    return row


def load_spectrogram(rec: UtteranceRecord, manifest_dir, n_frames: int = frontend.N_FRAMES,
                     features_dir=None) -> Spectrogram:
    """Precomputed features when available, otherwise featurize the audio."""
    if features_dir is not None:
        return frontend.read_spectrogram(Path(features_dir) / f"{safe_name(rec.id)}.spec")
    if "spec_path" in rec.extra:
        return frontend.read_spectrogram(Path(manifest_dir) / rec.extra["spec_path"])
    clip = frontend.load_audio(rec.resolve(manifest_dir))
    return frontend.featurize(clip, n_frames=n_frames)


def _map_rows(fn, items, jobs: int):
    jobs = max(1, int(jobs or 1))
    if jobs == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _attempt(fn, rec):
    try:
        return fn(rec), None
    except (OSError, ValueError) as exc:
        log.warning("utterance %s failed: %s", rec.id, exc)
        return None, {"id": rec.id, "error": f"{type(exc).__name__}: {exc}"}


def featurize_corpus(manifest, out_dir, n_frames: int = frontend.N_FRAMES, jobs: int = 1) -> StageResult:
    """One SPEC file per record plus a feature manifest with ``spec_path`` columns."""
    manifest = Path(manifest)
    out_dir = Path(out_dir)
    records = load_manifest(manifest)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(rec):
        spec = frontend.featurize(frontend.load_audio(rec.resolve(manifest.parent)), n_frames=n_frames)
        name = f"{safe_name(rec.id)}.spec"
        frontend.write_spectrogram(spec, out_dir / name)
        row = _relocate(rec, manifest.parent, out_dir)
        row["spec_path"] = name
        return row

    result = StageResult()
    for row, err in _map_rows(lambda r: _attempt(work, r), records, jobs):
        if err:
            result.errors.append(err)
        else:
            result.rows.append(row)
    result.manifest = out_dir / FEATURE_MANIFEST
    save_manifest(result.rows, result.manifest)
    return result


def build_augmented_corpus(manifest, model: ClassifierModel, policy: MaskPolicy | None = None,
                           seed: int = rng.DEFAULT_SEED, out_dir=".", jobs: int = 1,
                           method: str = "gradcam", target="predicted") -> StageResult:
    """Pair every training utterance with a saliency-masked copy.

    For each train-split record: load or compute its spectrogram, run the
    saliency method, draw a mask from the stream ``(seed, "mask", id)`` and
    apply it. Both spectrograms are written under ``out_dir/spectrograms``;
    the output manifest lists the original row and the masked row
    (``augmented: true``) for each. Other splits pass through unchanged.
    Records that fail are skipped and reported in ``errors``.

    ``target`` is ``"predicted"``, ``"label"`` (the record's own accent) or a
    class index.
    """
    policy = policy or MaskPolicy()
    manifest = Path(manifest)
    out_dir = Path(out_dir)
    spec_dir = out_dir / "spectrograms"
    spec_dir.mkdir(parents=True, exist_ok=True)
    records = load_manifest(manifest)
    n_frames = model.config.input_shape[2]
    phash = policy.hash()

    def work(rec: UtteranceRecord):
        base = _relocate(rec, manifest.parent, out_dir)
        base.update(augmented=False, source_id=rec.id, seed=int(seed), policy_hash=phash)
        if rec.split != "train":
            return [base]
        spec = load_spectrogram(rec, manifest.parent, n_frames)
        tgt = model.index_of(rec.accent) if target == "label" else target
        sal = compute_saliency(model, spec, method, tgt)
        mask = build_mask(sal, policy, seed, key=(rec.id,), shape=spec.shape)
        masked = apply_mask(spec, mask)
        stem = safe_name(rec.id)
        frontend.write_spectrogram(spec, spec_dir / f"{stem}.spec")
        frontend.write_spectrogram(masked, spec_dir / f"{stem}.masked.spec")
        base["spec_path"] = f"spectrograms/{stem}.spec"
        aug = dict(base, id=f"{rec.id}#masked", spec_path=f"spectrograms/{stem}.masked.spec",
                   augmented=True, saliency_target=int(sal.target), saliency_method=method)
        return [base, aug]

    result = StageResult()
    for rows, err in _map_rows(lambda r: _attempt(work, r), records, jobs):
        if err:
            result.errors.append(err)
        else:
            result.rows.extend(rows)
    result.manifest = out_dir / AUGMENTED_MANIFEST
    save_manifest(result.rows, result.manifest)
    return result
