import json
import sys

import numpy as np
import pytest

from affectfusion.data.io import write_annotation_track, write_feature_track
from affectfusion.data.types import AnnotationTrack, FeatureTrack


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_manifest(root, partitions, n_frames=20, dim=3, modalities=("video",)):
    """Tiny on-disk corpus: one subject per entry of ``partitions``."""
    subjects = []
    t = np.arange(n_frames) * 0.1
    r = np.random.default_rng(0)
    for i, part in enumerate(partitions):
        sid = f"s{i}"
        entry = {"id": sid, "partition": part, "modalities": {}}
        for m in modalities:
            rel = f"{m}/{sid}.csv"
            write_feature_track(root / rel, FeatureTrack(t, r.normal(size=(n_frames, dim)), m))
            entry["modalities"][m] = rel
        if part != "test":
            rel = f"labels/{sid}.csv"
            write_annotation_track(root / rel, AnnotationTrack.from_matrix(t, r.uniform(-1, 1, (n_frames, 3))))
            entry["labels"] = rel
        subjects.append(entry)
    path = root / "manifest.json"
    path.write_text(json.dumps({"subjects": subjects}))
    return path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
