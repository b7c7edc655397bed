"""JSONL manifests, holdout splits and per-accent statistics."""
from __future__ import annotations

import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .errors import ValidationError
from .gridio import atomic_write

SPLITS = ("train", "dev", "test")
KNOWN_FIELDS = ("id", "audio_path", "accent", "transcript", "split", "duration_s")
REQUIRED_FIELDS = ("id", "audio_path", "accent")
MIN_DURATION_S, MAX_DURATION_S = 3.0, 30.0


class DurationWarning(UserWarning):
    """Clip duration outside the 3-30 s segment range."""


@dataclass
class UtteranceRecord:
    id: str
    audio_path: str
    accent: str
    transcript: str = ""
    split: str = "train"
    duration_s: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"record {self.id!r}: split must be one of {SPLITS}, got {self.split!r}")
        if self.duration_s is not None and not self.duration_s > 0:
            raise ValidationError(f"record {self.id!r}: duration_s must be > 0, got {self.duration_s}")

    @classmethod
    def from_dict(cls, row: dict) -> "UtteranceRecord":
        for name in REQUIRED_FIELDS:
            if name not in row:
                raise ValidationError(f"missing required field {name!r}")
            if not isinstance(row[name], str):
                raise ValidationError(f"field {name!r} must be a string")
        duration = row.get("duration_s")
        if duration is not None and (isinstance(duration, bool) or not isinstance(duration, (int, float))):
            raise ValidationError("field 'duration_s' must be a number")
        return cls(
            id=row["id"], audio_path=row["audio_path"], accent=row["accent"],
            transcript=row.get("transcript", "") or "", split=row.get("split", "train"),
            duration_s=None if duration is None else float(duration),
            extra={k: v for k, v in row.items() if k not in KNOWN_FIELDS},
        )

    def to_dict(self) -> dict:
        row = {"id": self.id, "audio_path": self.audio_path, "accent": self.accent,
               "transcript": self.transcript, "split": self.split}
        if self.duration_s is not None:
            row["duration_s"] = self.duration_s
        row.update(self.extra)
        return row

    def resolve(self, base_dir) -> Path:
        """Audio path resolved against the manifest's directory."""
        return Path(base_dir) / self.audio_path


def parse_manifest(lines: Iterable[str], source: str = "<manifest>") -> list[UtteranceRecord]:
    records, seen = [], {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{source}:{lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(row, dict):
            raise ValidationError(f"{source}:{lineno}: expected a JSON object")
        try:
            rec = UtteranceRecord.from_dict(row)
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from None
        if rec.id in seen:
            raise ValidationError(f"{source}:{lineno}: duplicate id {rec.id!r} (first on line {seen[rec.id]})")
        seen[rec.id] = lineno
        if rec.duration_s is not None and not MIN_DURATION_S <= rec.duration_s <= MAX_DURATION_S:
            warnings.warn(f"{source}:{lineno}: duration {rec.duration_s:g} s outside "
                          f"[{MIN_DURATION_S:g}, {MAX_DURATION_S:g}] s", DurationWarning, stacklevel=3)
        records.append(rec)
    return records


def load_manifest(path) -> list[UtteranceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh, str(path))


def dump_manifest(rows: Iterable) -> str:
    out = []
    for row in rows:
        if isinstance(row, UtteranceRecord):
            row = row.to_dict()
        out.append(json.dumps(row, ensure_ascii=False) + "\n")
    return "".join(out)


def save_manifest(rows: Iterable, path) -> None:
    atomic_write(Path(path), dump_manifest(rows).encode("utf-8"))


# -- statistics -------------------------------------------------------------

@dataclass
class GroupTotals:
    samples: int = 0
    seconds: float = 0.0

    @property
    def hours(self) -> float:
        return self.seconds / 3600.0


@dataclass
class CorpusStats:
    per_accent: dict[str, GroupTotals]
    per_split: dict[str, GroupTotals]

    @property
    def total_samples(self) -> int:
        return sum(g.samples for g in self.per_accent.values())

    @property
    def total_hours(self) -> float:
        return sum(g.seconds for g in self.per_accent.values()) / 3600.0

    def to_dict(self) -> dict:
        def group(d):
            return {k: {"samples": g.samples, "hours": g.hours} for k, g in d.items()}
        return {"per_accent": group(self.per_accent), "per_split": group(self.per_split),
                "total_samples": self.total_samples, "total_hours": self.total_hours}

    def render(self, total_label: str = "Total") -> str:
        rows = [(name, str(g.samples), f"{g.hours:.1f} h") for name, g in self.per_accent.items()]
        total = (total_label, str(self.total_samples), f"{self.total_hours:.1f} h")
        header = ("Accent", "Samples", "Hours")
        widths = [max(len(r[i]) for r in [header, total, *rows]) for i in range(3)]

        def fmt(r):
            return f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}"

        rule = "-" * len(fmt(header))
        return "\n".join([rule, fmt(header), rule, *map(fmt, rows), rule, fmt(total), rule])


def stats(records: Iterable[UtteranceRecord]) -> CorpusStats:
    per_accent: dict[str, GroupTotals] = defaultdict(GroupTotals)
    per_split: dict[str, GroupTotals] = defaultdict(GroupTotals)
    for rec in records:
        seconds = rec.duration_s or 0.0
        for group in (per_accent[rec.accent], per_split[rec.split]):
            group.samples += 1
            group.seconds += seconds
    return CorpusStats(dict(per_accent), dict(per_split))


def split_holdout(records: list[UtteranceRecord], holdout_accents) -> tuple[list, list]:
    """Force held-out accents into the test split.

    Returns ``(train_side, test_only)``: records not in the test split, and
    records in it (held-out accents always land in the second list).
    """
    holdout = set(holdout_accents)
    accents = {r.accent for r in records}
    if records and holdout and accents <= holdout:
        raise ValidationError(f"holdout {sorted(holdout)} covers every accent; nothing left to train on")
    train_side, test_only = [], []
    for rec in records:
        if rec.accent in holdout and rec.split != "test":
            rec = replace(rec, split="test", extra=dict(rec.extra))
        (test_only if rec.split == "test" else train_side).append(rec)
    return train_side, test_only
