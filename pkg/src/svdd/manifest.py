"""Trial manifest: a TSV with one row per utterance.

Columns: utt_id, dataset, attack, label, path.  label is "bonafide" or
"spoof"; attack is "-" for bonafide rows and a tag such as A09..A14 for
spoof rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

LABELS = ("bonafide", "spoof")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    dataset: str
    attack: str
    label: str
    path: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(
                f"{self.utt_id}: label must be one of {LABELS}, "
                f"got {self.label!r}")
        if self.label == "bonafide" and self.attack != "-":
            raise ManifestError(
                f"{self.utt_id}: bonafide rows must use attack '-', "
                f"got {self.attack!r}")
        if self.label == "spoof" and self.attack == "-":
            raise ManifestError(
                f"{self.utt_id}: spoof rows need an attack tag")
        if not self.utt_id:
            raise ManifestError("empty utt_id")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ManifestError(
                f"{path}:{lineno}: expected 5 tab-separated fields, "
                f"got {len(fields)}")
        entry = ManifestEntry(*fields)
        if entry.utt_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate utt_id "
                                f"{entry.utt_id}")
        seen.add(entry.utt_id)
        entries.append(entry)
    if not entries:
        raise ManifestError(f"{path}: empty manifest")
    return entries


def write_manifest(entries, path):
    lines = [
        "\t".join((e.utt_id, e.dataset, e.attack, e.label, e.path))
        for e in entries
    ]
    Path(path).write_text("\n".join(lines) + "\n")
