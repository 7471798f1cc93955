import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshanim.errors import DataError, TopologyError
from meshanim.spirals import build_spirals, load_spirals, save_spirals
from meshanim.synth import icosphere


def test_fan_hand_trace(fan):
    # faces (0,1,2)(0,2,3)(0,3,4)(0,4,5)(0,5,1): winding walk from neighbor 1
    table = build_spirals(fan.faces, 6, 6)
    assert list(table.sequences[0]) == [0, 1, 2, 3, 4, 5]


def test_length_one_is_self_only(fan):
    table = build_spirals(fan.faces, 6, 1)
    assert np.array_equal(table.sequences[:, 0], np.arange(6))


def test_isolated_vertex_rejected(fan):
    with pytest.raises(TopologyError, match="no incident face"):
        build_spirals(fan.faces, 7, 4)  # vertex 6 exists but has no face


def test_row_starts_with_self(ico2):
    table = build_spirals(ico2.faces, ico2.n_vertices, 10)
    assert np.array_equal(table.sequences[:, 0], np.arange(ico2.n_vertices))


def test_entries_distinct_before_sentinel(ico1):
    table = build_spirals(ico1.faces, ico1.n_vertices, 14)
    for row in table.sequences:
        live = row[row != table.pad_sentinel]
        assert len(set(live.tolist())) == len(live)


def test_sentinel_only_as_suffix():
    # single triangle: spirals exhaust after 3 entries
    faces = np.array([[0, 1, 2]])
    table = build_spirals(faces, 3, 6)
    for row in table.sequences:
        live = np.flatnonzero(row != 3)
        assert np.array_equal(live, np.arange(len(live)))
        assert len(live) == 3


def test_rebuild_is_identical(ico1):
    a = build_spirals(ico1.faces, ico1.n_vertices, 9)
    b = build_spirals(ico1.faces, ico1.n_vertices, 9)
    assert a == b


def test_truncation_equals_smaller_build(ico1):
    big = build_spirals(ico1.faces, ico1.n_vertices, 12)
    small = build_spirals(ico1.faces, ico1.n_vertices, 7)
    assert big.truncated(7) == small


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 20))
def test_row_length_always_l(length):
    mesh = icosphere(0)
    table = build_spirals(mesh.faces, mesh.n_vertices, length)
    assert table.sequences.shape == (12, length)


def test_boundary_fan_covers_all_neighbors():
    # open fan: boundary vertex 0 with neighbors 1..4, faces wound CCW
    faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4]])
    table = build_spirals(faces, 5, 5)
    assert list(table.sequences[0]) == [0, 1, 2, 3, 4]


def test_winding_order_on_regular_vertex(ico1):
    # each consecutive 1-ring pair of the spiral must share a face with v
    table = build_spirals(ico1.faces, ico1.n_vertices, 6)
    face_set = {frozenset(f) for f in ico1.faces.tolist()}
    for v in range(ico1.n_vertices):
        ring = table.sequences[v][1:6]  # valence 5 or 6; first 5 are 1-ring
        for a, b in zip(ring[:-1], ring[1:]):
            assert frozenset((v, int(a), int(b))) in face_set


def test_export_round_trip(tmp_path):
    mesh = icosphere(0)
    table = build_spirals(mesh.faces, mesh.n_vertices, 15)  # > N: has sentinels
    assert np.any(table.sequences == table.pad_sentinel)
    path = tmp_path / "spirals.txt"
    save_spirals(table, path)
    assert " -1" in path.read_text()
    again = load_spirals(path)
    assert again == table


def test_invalid_length():
    with pytest.raises(DataError):
        build_spirals(np.array([[0, 1, 2]]), 3, 0)
