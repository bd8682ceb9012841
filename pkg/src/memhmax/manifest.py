"""Dataset manifests: CSV with header ``id,name,image,landmarks,split``.

Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, MemHmaxIOError
from .synthetic import MANIFEST_HEADER

SPLITS = ("memory", "test")


@dataclass(frozen=True)
class ManifestRow:
    line: int
    id: int
    name: str
    image: Path
    landmarks: Path
    split: str


def load_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise MemHmaxIOError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
        raise FormatError(f"{path}: line 1: header must be {','.join(MANIFEST_HEADER)}")
    base = path.parent
    rows, names = [], {}
    for line, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(MANIFEST_HEADER):
            raise FormatError(f"{path}: line {line}: expected {len(MANIFEST_HEADER)} fields, got {len(rec)}")
        ident_s, name, image, landmarks, split = (f.strip() for f in rec)
        try:
            ident = int(ident_s)
        except ValueError:
            raise FormatError(f"{path}: line {line}: id {ident_s!r} is not an integer") from None
        if split not in SPLITS:
            raise FormatError(f"{path}: line {line}: split must be one of {SPLITS}, got {split!r}")
        if names.setdefault(ident, name) != name:
            raise FormatError(f"{path}: line {line}: id {ident} was named {names[ident]!r} earlier")
        img_p, lm_p = base / image, base / landmarks
        for p in (img_p, lm_p):
            if not p.is_file():
                raise MemHmaxIOError(f"{path}: line {line}: file not found: {p}")
        rows.append(ManifestRow(line, ident, name, img_p, lm_p, split))
    return rows
