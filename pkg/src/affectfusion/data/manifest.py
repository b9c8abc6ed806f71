"""Corpus manifest loading with eager validation."""

from __future__ import annotations

from pathlib import Path

from affectfusion.data.io import read_json, relpath_or_abs
from affectfusion.data.types import CorpusManifest, SubjectEntry
from affectfusion.errors import ValidationError

PARTITIONS = ("train", "dev", "test")


def load_manifest(path) -> CorpusManifest:
    """Load and fully validate a manifest JSON document.

    Relative paths are resolved against the manifest's directory. Every
    problem found is collected and reported together, one line per
    subject/field, so a broken corpus fails before any extraction starts.
    """
    path = Path(path)
    doc = read_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("subjects"), list):
        raise ValidationError(f"{path}: manifest must be an object with a 'subjects' list")
    root = path.parent
    errors: list[str] = []
    seen: set[str] = set()
    entries = []
    for i, raw in enumerate(doc["subjects"]):
        if not isinstance(raw, dict):
            errors.append(f"subjects[{i}]: entry must be an object")
            continue
        sid = raw.get("id")
        where = f"subject {sid!r}" if sid is not None else f"subjects[{i}]"
        if not isinstance(sid, str) or not sid:
            errors.append(f"{where}: field 'id' must be a non-empty string")
            continue
        if sid in seen:
            errors.append(f"{where}: duplicate subject id")
            continue
        seen.add(sid)
        unknown = set(raw) - {"id", "partition", "modalities", "labels"}
        if unknown:
            errors.append(f"{where}: unknown field(s) {sorted(unknown)}")
        partition = raw.get("partition")
        if partition not in PARTITIONS:
            errors.append(f"{where}: field 'partition' has unknown tag {partition!r}")
        mods = raw.get("modalities", {})
        if not isinstance(mods, dict) or not all(isinstance(v, str) for v in mods.values()):
            errors.append(f"{where}: field 'modalities' must map names to paths")
            mods = {}
        resolved = {}
        for name, p in mods.items():
            full = relpath_or_abs(p, root)
            if not Path(full).exists():
                errors.append(f"{where}: modality {name!r} path does not exist: {full}")
            resolved[name] = full
        labels = raw.get("labels")
        if labels is None:
            if partition in ("train", "dev"):
                errors.append(f"{where}: field 'labels' is required for partition {partition!r}")
        elif not isinstance(labels, str):
            errors.append(f"{where}: field 'labels' must be a path")
            labels = None
        else:
            labels = relpath_or_abs(labels, root)
            if not Path(labels).is_file():
                errors.append(f"{where}: labels file does not exist: {labels}")
        entries.append(SubjectEntry(sid, partition, resolved, labels))
    if errors:
        raise ValidationError(f"{path}: invalid manifest\n  " + "\n  ".join(errors))
    return CorpusManifest(tuple(entries), str(root))
