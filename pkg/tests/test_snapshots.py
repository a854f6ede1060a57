import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podgp import (GeometryError, ParseError, PowerMap, SnapshotSeries, ValidationError,
                   box_mesh, load_powermap, load_snapshots, power_at, subtract_ambient,
                   write_powermap, write_snapshots)


def _series(n_t=4, n=6, t_amb=300.0, seed=0):
    rng = np.random.default_rng(seed)
    return SnapshotSeries(np.linspace(0.0, 1.0, n_t), t_amb + rng.random((n_t, n)), t_amb)


def test_snapshot_roundtrip_is_bitwise(tmp_path):
    s = _series()
    write_snapshots(s, tmp_path / "a.pods")
    back = load_snapshots(tmp_path / "a.pods")
    assert back.t_amb == s.t_amb
    assert np.array_equal(back.times, s.times)
    assert np.array_equal(back.fields, s.fields)


def test_snapshot_layout_is_little_endian(tmp_path):
    s = _series(n_t=2, n=3)
    write_snapshots(s, tmp_path / "a.pods")
    raw = (tmp_path / "a.pods").read_bytes()
    assert raw[:4] == b"PODS"
    assert struct.unpack("<IQQd", raw[4:32]) == (1, 2, 3, 300.0)
    assert len(raw) == 32 + 8 * (2 + 6)


@given(st.integers(2, 6), st.integers(1, 7), st.floats(-1e3, 1e3))
@settings(max_examples=25, deadline=None)
def test_snapshot_roundtrip_property(tmp_path_factory, n_t, n, t_amb):
    s = _series(n_t, n, t_amb)
    path = tmp_path_factory.mktemp("s") / "x.pods"
    write_snapshots(s, path)
    back = load_snapshots(path)
    assert np.array_equal(back.fields, s.fields)


def test_truncated_and_trailing_bytes_rejected(tmp_path):
    write_snapshots(_series(), tmp_path / "a.pods")
    raw = (tmp_path / "a.pods").read_bytes()
    (tmp_path / "short.pods").write_bytes(raw[:-8])
    (tmp_path / "long.pods").write_bytes(raw + b"\0" * 8)
    with pytest.raises(ParseError, match="truncated"):
        load_snapshots(tmp_path / "short.pods")
    with pytest.raises(ParseError):
        load_snapshots(tmp_path / "long.pods")


def test_bad_magic_and_version(tmp_path):
    write_snapshots(_series(), tmp_path / "a.pods")
    raw = bytearray((tmp_path / "a.pods").read_bytes())
    (tmp_path / "m.pods").write_bytes(b"XXXX" + raw[4:])
    raw[4] = 2
    (tmp_path / "v.pods").write_bytes(bytes(raw))
    with pytest.raises(ParseError, match="magic"):
        load_snapshots(tmp_path / "m.pods")
    with pytest.raises(ParseError, match="version"):
        load_snapshots(tmp_path / "v.pods")


def test_missing_snapshot_file(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_snapshots(tmp_path / "nope.pods")


def test_dof_mismatch_message(tmp_path):
    mesh = box_mesh((1, 1, 1))
    write_snapshots(_series(n=5), tmp_path / "a.pods")
    with pytest.raises(ValidationError, match="DoF mismatch: snapshots have 5 DoF, mesh has 8"):
        load_snapshots(tmp_path / "a.pods", mesh)


def test_series_validation():
    with pytest.raises(ValidationError, match="strictly increasing"):
        SnapshotSeries([0.0, 1.0, 1.0], np.zeros((3, 2)), 0.0)
    with pytest.raises(ValidationError, match="at least 2"):
        SnapshotSeries([0.0], np.zeros((1, 2)), 0.0)
    bad = np.zeros((2, 2))
    bad[1, 0] = np.nan
    with pytest.raises(ValidationError, match="snapshot 1"):
        SnapshotSeries([0.0, 1.0], bad, 0.0)
    with pytest.raises(ValidationError):
        SnapshotSeries([0.0, 1.0], np.zeros((3, 2)), 0.0)


def test_subtract_ambient():
    s = _series()
    rise = subtract_ambient(s)
    assert np.allclose(rise.fields, s.fields - 300.0)
    assert rise.t_amb == 300.0


def _pmap():
    times = np.array([0.0, 1.0, 2.0])
    boxes = [[0, 0, 0, 0.5, 0.5, 1], [0.25, 0.25, 0, 1, 1, 1]]
    return PowerMap(boxes, [[0.0, 2.0, 2.0], [1.0, 1.0, 3.0]], times)


def test_powermap_densities_interpolate_linearly():
    pm = _pmap()
    assert np.allclose(pm.densities(0.5), [1.0, 1.0])
    assert np.allclose(pm.densities(1.5), [2.0, 2.0])
    assert pm.densities([0.0, 2.0]).shape == (2, 2)


def test_powermap_no_extrapolation():
    with pytest.raises(ValidationError, match="no extrapolation"):
        _pmap().densities(2.5)


def test_overlapping_regions_sum():
    pm = _pmap()
    assert power_at(pm, [0.3, 0.3, 0.5], 1.0) == pytest.approx(3.0)
    assert power_at(pm, [0.1, 0.1, 0.5], 1.0) == pytest.approx(2.0)
    assert power_at(pm, [0.9, 0.1, 0.5], 1.0) == 0.0


def test_powermap_add():
    pm = _pmap() + _pmap()
    assert pm.n_regions == 4
    with pytest.raises(ValidationError):
        _pmap() + PowerMap([[0, 0, 0, 1, 1, 1]], [[1.0, 1.0]], [0.0, 1.0])


def test_powermap_validation():
    with pytest.raises(ValidationError, match="max corner"):
        PowerMap([[1, 0, 0, 0, 1, 1]], [[1.0, 1.0]], [0.0, 1.0])
    with pytest.raises(ValidationError, match=">= 0"):
        PowerMap([[0, 0, 0, 1, 1, 1]], [[1.0, -1.0]], [0.0, 1.0])
    with pytest.raises(ValidationError, match="strictly increasing"):
        PowerMap([[0, 0, 0, 1, 1, 1]], [[1.0, 1.0]], [1.0, 0.0])


def test_powermap_outside_mesh():
    pm = PowerMap([[0, 0, 0, 1.5, 1, 1]], [[1.0, 1.0]], [0.0, 1.0])
    with pytest.raises(GeometryError, match="region 0"):
        pm.check_within(box_mesh((1, 1, 1)))


def test_powermap_text_roundtrip(tmp_path):
    pm = _pmap()
    write_powermap(pm, tmp_path / "p.pmap")
    back = load_powermap(tmp_path / "p.pmap")
    assert np.array_equal(back.boxes, pm.boxes)
    assert np.array_equal(back.traces, pm.traces)
    assert np.array_equal(back.times, pm.times)


def test_powermap_parse_errors(tmp_path):
    p = tmp_path / "p.pmap"
    p.write_text("powermap 2\n1 2\n0 1\n")
    with pytest.raises(ParseError, match="header"):
        load_powermap(p)
    p.write_text("powermap 1\n1 2\n0 1\n0 0 0 1 1 1 5\n")
    with pytest.raises(ParseError, match="expected 10 numbers"):
        load_powermap(p)
    p.write_text("powermap 1\n1 2\n0 1\n0 0 0 1 1 1 5 abc\n")
    with pytest.raises(ParseError, match="line 4"):
        load_powermap(p)


def test_constant_field_roundtrip_on_cube(tmp_path, cube):
    s = SnapshotSeries([0.0, 1.0], np.full((2, cube.n_dof), 300.0), 300.0)
    write_snapshots(s, tmp_path / "c.pods")
    back = load_snapshots(tmp_path / "c.pods", cube)
    assert back.n_t == 2 and np.all(back.fields == 300.0)


def test_subtract_ambient_identities():
    s = SnapshotSeries([0.0, 1.0], np.full((2, 3), 300.0), 300.0)
    assert np.all(subtract_ambient(s).fields == 0.0)
    s0 = _series(t_amb=0.0)
    assert np.array_equal(subtract_ambient(s0).fields, s0.fields)
    s = _series()
    twice = subtract_ambient(SnapshotSeries(s.times, subtract_ambient(s).fields, 0.0))
    assert np.array_equal(twice.fields, subtract_ambient(s).fields)


def test_power_at_sample_and_midpoint():
    pm = PowerMap([[0, 0, 0, 1, 1, 1]], [[10.0, 20.0]], [0.0, 2.0])
    assert power_at(pm, [0.5, 0.5, 0.5], 0.0) == 10.0
    assert power_at(pm, [0.5, 0.5, 0.5], 1.0) == pytest.approx(15.0)
