import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mosaic.space import Pipeline
from mosaic.warmstart import (Archive, ArchiveEntry, ArchiveError, archive_from_dict, archive_to_dict, distances,
                              load_archive, nearest_datasets, save_archive)


def entry(i, *meta, reward=0.5):
    return ArchiveEntry(i, tuple(float(m) for m in meta), Pipeline(("a",), ({"x": 0.1},)), reward)


def unit_archive():
    """Entries whose per-feature mean is 0 and population std 1, so raw equals standardized."""
    u, v = math.sqrt(8.0), 1.0
    pts = [(3, 4), (-3, -4), (u, v), (-u, -v)] + [(0, 0)] * 30
    ids = ["b", "c", "d", "e"] + [f"z{i:02d}" for i in range(30)]
    return Archive(("f1", "f2"), tuple(entry(i, *p) for i, p in zip(ids, pts)))


def test_standardized_distances_example():
    archive = unit_archive()
    mean, std, _ = archive.standardization()
    assert np.allclose(mean, 0.0, atol=1e-12) and np.allclose(std, 1.0, atol=1e-12)
    d = distances(archive, (0.0, 0.0))
    assert d["z00"] == pytest.approx(0.0, abs=1e-12)
    assert d["b"] == pytest.approx(5.0, abs=1e-12)
    order = [e.id for e in nearest_datasets(archive, (0.0, 0.0), 34)]
    assert order[:30] == [f"z{i:02d}" for i in range(30)]   # ties broken by id
    assert set(order[-2:]) == {"b", "c"}


def test_resident_vector_comes_first():
    archive = Archive(("f",), (entry("p", 1.0), entry("q", 4.0), entry("r", 9.0)))
    assert nearest_datasets(archive, (4.0,), 1)[0].id == "q"
    assert distances(archive, (4.0,))["q"] == 0.0


def test_k_larger_than_archive():
    archive = Archive(("f",), (entry("p", 1.0), entry("q", 4.0)))
    assert len(nearest_datasets(archive, (0.0,), 25)) == 2


def test_errors():
    with pytest.raises(ArchiveError):
        nearest_datasets(Archive(("f",)), (0.0,), 1)
    archive = Archive(("f",), (entry("p", 1.0), entry("q", 4.0)))
    with pytest.raises(ValueError):
        nearest_datasets(archive, (0.0, 1.0), 1)
    with pytest.raises(ArchiveError):
        Archive(("f",), (entry("p", math.nan),))


def test_zero_variance_feature_is_ignored():
    archive = Archive(("f", "g"), (entry("p", 1.0, 7.0), entry("q", 4.0, 7.0)))
    assert [e.id for e in nearest_datasets(archive, (3.9, 100.0), 2)] == ["q", "p"]


def test_leave_one_out():
    archive = Archive(("f",), (entry("p", 1.0), entry("q", 4.0)))
    assert [e.id for e in archive.without("p").entries] == ["q"]


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3), col=st.integers(0, 2))
def test_ordering_invariant_under_feature_rescaling(seed, scale, col):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(8, 3))
    z = rng.normal(size=3)
    a = Archive(("a", "b", "c"), tuple(entry(f"d{i}", *row) for i, row in enumerate(M)))
    M2, z2 = M.copy(), z.copy()
    M2[:, col] *= scale
    z2[col] *= scale
    b = Archive(("a", "b", "c"), tuple(entry(f"d{i}", *row) for i, row in enumerate(M2)))
    da, db = distances(a, z), distances(b, z2)
    assert all(abs(da[k] - db[k]) <= 1e-9 * max(1.0, da[k]) for k in da)


def test_round_trip(tmp_path):
    archive = Archive(("f1", "f2"), (entry("p", 1, 2), entry("q", 3, 4, reward=0.9), entry("r", 5, 6)))
    path = tmp_path / "archive.json"
    save_archive(archive, path)
    assert load_archive(path) == archive
    empty = Archive(("f1",))
    save_archive(empty, path)
    assert len(load_archive(path)) == 0


def test_nan_rejected_at_load(tmp_path):
    doc = archive_to_dict(Archive(("f",), (entry("p", 1.0),)))
    doc["entries"][0]["meta"] = [float("nan")]
    path = tmp_path / "archive.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ArchiveError, match="meta"):
        load_archive(path)


def test_malformed_documents(tmp_path):
    with pytest.raises(ArchiveError, match="unknown"):
        archive_from_dict({"feature_names": [], "entries": [], "extra": 1})
    path = tmp_path / "bad.json"
    path.write_text('{"feature_names": [\n]]')
    with pytest.raises(ArchiveError, match="line 2"):
        load_archive(path)
