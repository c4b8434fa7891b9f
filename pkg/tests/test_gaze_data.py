import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salgaze.errors import DataError, DegenerateMapError, ParseError, ShapeError, ValidationError
from salgaze.gaze_data import (
    FixationMap,
    FixationRecord,
    blur_to_density,
    build_fixation_map,
    load_manifest,
    parse_fixation_table,
    union_fixation_maps,
)

HEADER = "subject_id,image_id,index,x,y,duration_ms\n"


def test_parse_single_row():
    records = parse_fixation_table(io.StringIO(HEADER + "s1,img7,0,12.5,30.0,180\n"))
    assert records == [FixationRecord("s1", "img7", 0, 12.5, 30.0, 180.0)]


def test_parse_header_only():
    assert parse_fixation_table(io.StringIO(HEADER)) == []


def test_parse_non_numeric_coordinate():
    with pytest.raises(ParseError) as err:
        parse_fixation_table(io.StringIO(HEADER + "s1,img7,0,abc,30.0,180\n"))
    assert err.value.line == 2


def test_parse_wrong_arity():
    with pytest.raises(ParseError):
        parse_fixation_table(io.StringIO(HEADER + "s1,img7,0,1.0\n"))


def test_parse_missing_header():
    with pytest.raises(ParseError):
        parse_fixation_table(io.StringIO("a,b,c\n"))


def test_parse_empty_duration():
    records = parse_fixation_table(io.StringIO(HEADER + "s1,img7,0,1.0,2.0,\n"))
    assert records[0].duration_ms is None


def _rec(x, y, sid="s1", iid="i1", idx=0):
    return FixationRecord(sid, iid, idx, x, y, None)


def test_build_map_floor_semantics():
    fmap = build_fixation_map([_rec(1.2, 2.9), _rec(1.7, 2.1)], 4, 4)
    assert fmap.hits == {(1, 2)}
    assert fmap.dropped_count == 0


def test_build_map_out_of_bounds_dropped():
    fmap = build_fixation_map([_rec(-1.0, 0.0)], 4, 4)
    assert fmap.hits == frozenset()
    assert fmap.dropped_count == 1


def test_build_map_distinct_pixels():
    fmap = build_fixation_map([_rec(0, 0), _rec(1, 1), _rec(2, 3)], 4, 4)
    assert len(fmap.hits) == 3


def test_build_map_zero_dims():
    with pytest.raises(DataError):
        build_fixation_map([], 0, 4)


@given(
    st.lists(
        st.tuples(st.floats(-2, 9, allow_nan=False), st.floats(-2, 9, allow_nan=False)),
        max_size=30,
    ),
    st.randoms(),
)
@settings(max_examples=50)
def test_build_map_permutation_invariant(points, pyrandom):
    records = [_rec(x, y, idx=i) for i, (x, y) in enumerate(points)]
    shuffled = list(records)
    pyrandom.shuffle(shuffled)
    a = build_fixation_map(records, 8, 8)
    b = build_fixation_map(shuffled, 8, 8)
    assert a.hits == b.hits and a.dropped_count == b.dropped_count


@given(
    st.lists(
        st.tuples(st.floats(-3, 12, allow_nan=False), st.floats(-3, 12, allow_nan=False)),
        max_size=40,
    )
)
@settings(max_examples=50)
def test_build_map_accounting(points):
    # |hits| + duplicates + dropped == |records|
    records = [_rec(x, y, idx=i) for i, (x, y) in enumerate(points)]
    fmap = build_fixation_map(records, 8, 8)
    in_bounds = [
        (math.floor(x), math.floor(y))
        for x, y in points
        if 0 <= math.floor(x) < 8 and 0 <= math.floor(y) < 8
    ]
    duplicates = len(in_bounds) - len(set(in_bounds))
    assert len(fmap.hits) + duplicates + fmap.dropped_count == len(records)


def _fmap(hits, w=4, h=4, dropped=0):
    return FixationMap(width=w, height=h, hits=frozenset(hits), dropped_count=dropped)


def test_union_disjoint():
    assert union_fixation_maps([_fmap({(0, 0)}), _fmap({(1, 1)})]).hits == {(0, 0), (1, 1)}


def test_union_idempotent():
    assert union_fixation_maps([_fmap({(0, 0)}), _fmap({(0, 0)})]).hits == {(0, 0)}


def test_union_shape_mismatch():
    with pytest.raises(ShapeError):
        union_fixation_maps([_fmap({(0, 0)}, 4, 4), _fmap({(0, 0)}, 8, 8)])


def test_union_empty_input():
    with pytest.raises(DataError):
        union_fixation_maps([])


coords = st.tuples(st.integers(0, 3), st.integers(0, 3))
hit_sets = st.frozensets(coords, min_size=0, max_size=6)


@given(hit_sets, hit_sets, hit_sets)
@settings(max_examples=50)
def test_union_commutative_associative(a, b, c):
    ma, mb, mc = _fmap(a), _fmap(b), _fmap(c)
    assert union_fixation_maps([ma, mb]).hits == union_fixation_maps([mb, ma]).hits
    left = union_fixation_maps([union_fixation_maps([ma, mb]), mc]).hits
    right = union_fixation_maps([ma, union_fixation_maps([mb, mc])]).hits
    assert left == right == a | b | c


def test_blur_sigma_zero_is_delta():
    d = blur_to_density(_fmap({(2, 1)}), 0.0)
    assert d.values[1, 2] == 1.0
    assert d.values.sum() == pytest.approx(1.0)
    assert np.count_nonzero(d.values) == 1


def test_blur_mirror_symmetry():
    # two hits mirror-symmetric about the vertical centerline of a 9-wide map
    d = blur_to_density(_fmap({(2, 3), (6, 3)}, w=9, h=7), 1.5)
    assert np.allclose(d.values, d.values[:, ::-1], atol=1e-12)


def test_blur_central_hit():
    d = blur_to_density(_fmap({(16, 16)}, w=33, h=33), 2.0)
    assert abs(d.values.sum() - 1.0) <= 1e-9
    assert np.unravel_index(np.argmax(d.values), d.values.shape) == (16, 16)


@given(st.frozensets(coords, min_size=1, max_size=5), st.floats(0.0, 3.0, allow_nan=False))
@settings(max_examples=50)
def test_blur_sums_to_one_anywhere(hits, sigma):
    # includes corner hits: border renormalization keeps total mass 1
    d = blur_to_density(_fmap(hits), sigma)
    assert abs(d.values.sum() - 1.0) <= 1e-9
    assert d.values.min() >= 0


def test_blur_zero_hits():
    with pytest.raises(DegenerateMapError):
        blur_to_density(_fmap(set()), 1.0)


def _write_manifest(tmp_path, payload):
    for entry in payload.get("images", []):
        (tmp_path / entry["path"]).write_bytes(b"\x89PNG\r\n\x1a\n")
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(payload))
    return path


def _base_manifest():
    return {
        "mode": "subject-classification",
        "class_names": ["A", "B"],
        "images": [
            {"id": f"im{i}", "path": f"im{i}.png", "width": 64, "height": 48} for i in range(3)
        ],
        "subjects": [{"id": "s1", "label": "A"}, {"id": "s2", "label": "B"}],
    }


def test_load_manifest_valid(tmp_path):
    m = load_manifest(_write_manifest(tmp_path, _base_manifest()))
    assert len(m.subjects) == 2 and len(m.images) == 3 and len(m.class_names) == 2
    assert m.sigma_for(m.image("im0")) == pytest.approx(64 / 32)


def test_load_manifest_unknown_subject_label(tmp_path):
    payload = _base_manifest()
    payload["subjects"][1]["label"] = "C"
    with pytest.raises(ValidationError) as err:
        load_manifest(_write_manifest(tmp_path, payload))
    assert any("'C'" in p for p in err.value.problems)


def test_load_manifest_task_mode_requires_labels(tmp_path):
    payload = _base_manifest()
    payload["mode"] = "task-classification"
    with pytest.raises(ValidationError):
        load_manifest(_write_manifest(tmp_path, payload))


def test_load_manifest_collects_all_failures(tmp_path):
    payload = _base_manifest()
    payload["subjects"][0]["label"] = "Z"
    payload["mode"] = "task-classification"
    with pytest.raises(ValidationError) as err:
        load_manifest(_write_manifest(tmp_path, payload))
    assert len(err.value.problems) >= 2


def test_load_manifest_unreadable_image(tmp_path):
    payload = _base_manifest()
    payload["images"][0]["path"] = "missing.png"
    path = tmp_path / "manifest.json"
    for entry in payload["images"][1:]:
        (tmp_path / entry["path"]).write_bytes(b"x")
    path.write_text(json.dumps(payload))
    with pytest.raises(ValidationError) as err:
        load_manifest(path)
    assert any("not readable" in p for p in err.value.problems)
