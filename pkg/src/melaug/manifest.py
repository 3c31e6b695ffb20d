"""Utterance manifests: ``utt_id<TAB>audio_path<TAB>transcript`` per line."""

from dataclasses import dataclass
from pathlib import Path

from melaug.errors import ParseError


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    audio_path: Path
    transcript: str


def parse_manifest(lines, base_dir=None):
    """Parse manifest lines; blank lines and ``#`` comments are skipped.

    Relative audio paths resolve against ``base_dir`` when given.
    """
    entries = []
    seen = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", lineno)
        utt_id, audio, transcript = (f.strip() for f in fields)
        if not utt_id or not audio:
            raise ParseError("empty utterance id or audio path", lineno)
        if not transcript:
            raise ParseError(f"empty transcript for {utt_id}", lineno)
        if utt_id in seen:
            raise ParseError(f"duplicate utterance id {utt_id}", lineno)
        seen.add(utt_id)
        path = Path(audio)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        entries.append(ManifestEntry(utt_id, path, transcript))
    return entries


def read_manifest(path):
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        return parse_manifest(f, base_dir=path.parent)
