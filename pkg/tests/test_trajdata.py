import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_case, random_case, straight_track
from wzsentinel.trajdata import (
    COLUMNS,
    CaseFormatError,
    DuplicateFrame,
    EmptyFile,
    FrameGap,
    FrameOutOfRange,
    InvalidAgentType,
    MissingColumn,
    NonContiguousTrackIds,
    NonNumericField,
    TimestampMismatch,
    TrackPoint,
    WindowTooLong,
    extract_windows,
    parse_case_csv,
    write_case_csv,
)

HEADER = ",".join(COLUMNS)


def write_rows(tmp_path, rows, case_id=7):
    path = tmp_path / f"trajectory_data_case_{case_id}.csv"
    path.write_text("\n".join([HEADER, *rows]) + "\n")
    return path


def test_parse_single_row(tmp_path):
    case = parse_case_csv(write_rows(tmp_path, ["1,100,1,car,0.0,0.0,10.0,0.0,0.0,4.0,2.0"]))
    assert case.case_id == 7
    p = case.tracks[1].points[0]
    assert (p.track_id, p.frame_id, p.vx, p.length, p.width) == (1, 1, 10.0, 4.0, 2.0)


@pytest.mark.parametrize(
    "row, error",
    [
        ("1,4100,41,car,0,0,0,0,0,4,2", FrameOutOfRange),
        ("1,0,0,car,0,0,0,0,0,4,2", FrameOutOfRange),
        ("1,200,1,car,0,0,0,0,0,4,2", TimestampMismatch),
        ("1,100,1,bus,0,0,0,0,0,4,2", InvalidAgentType),
        ("1,100,1,car,abc,0,0,0,0,4,2", NonNumericField),
        ("1,100,1,car,nan,0,0,0,0,4,2", NonNumericField),
        ("1,100,1,car,0,0,0,0,0,4", MissingColumn),
        ("2,100,1,car,0,0,0,0,0,4,2", NonContiguousTrackIds),
    ],
)
def test_parse_rejects_bad_rows(tmp_path, row, error):
    with pytest.raises(error):
        parse_case_csv(write_rows(tmp_path, [row]))


def test_error_names_file_and_row(tmp_path):
    path = write_rows(tmp_path, ["1,100,1,car,0,0,0,0,0,4,2", "1,200,2,car,0,zz,0,0,0,4,2"])
    with pytest.raises(NonNumericField) as info:
        parse_case_csv(path)
    assert info.value.row == 3
    assert str(path) in str(info.value) and "row 3" in str(info.value)


def test_duplicate_and_gap(tmp_path):
    with pytest.raises(DuplicateFrame):
        parse_case_csv(write_rows(tmp_path, ["1,100,1,car,0,0,0,0,0,4,2", "1,100,1,car,1,0,0,0,0,4,2"]))
    with pytest.raises(FrameGap):
        parse_case_csv(write_rows(tmp_path, ["1,100,1,car,0,0,0,0,0,4,2", "1,300,3,car,1,0,0,0,0,4,2"]))


def test_empty_and_header(tmp_path):
    with pytest.raises(EmptyFile):
        parse_case_csv(write_rows(tmp_path, []))
    bad = tmp_path / "trajectory_data_case_1.csv"
    bad.write_text("track_id,frame_id\n")
    with pytest.raises(MissingColumn):
        parse_case_csv(bad)
    empty = tmp_path / "trajectory_data_case_2.csv"
    empty.write_text("")
    with pytest.raises(EmptyFile):
        parse_case_csv(empty)


def test_bad_filename(tmp_path):
    path = tmp_path / "case.csv"
    path.write_text(HEADER + "\n1,100,1,car,0,0,0,0,0,4,2\n")
    with pytest.raises(CaseFormatError):
        parse_case_csv(path)
    assert parse_case_csv(path, case_id=3).case_id == 3


def test_psi_normalised():
    p = TrackPoint.at_frame(1, 1, "car", 0, 0, 0, 0, -math.pi, 4, 2)
    assert p.psi_rad == math.pi
    assert TrackPoint.at_frame(1, 1, "car", 0, 0, 0, 0, 7.0, 4, 2).psi_rad == pytest.approx(7.0 - 2 * math.pi)


def test_write_rejects_non_contiguous_ids(tmp_path):
    case = make_case(1, [straight_track(1, 0, 0, 10), straight_track(3, 0, 5, 10)])
    with pytest.raises(NonContiguousTrackIds):
        write_case_csv(case, tmp_path)


def test_fixed_precision_fixed_point(tmp_path):
    t = straight_track(1, 1.23456, 0.0, 10.0, frames=[1])
    path = write_case_csv(make_case(1, [t]), tmp_path)
    assert path.read_text().splitlines()[1].split(",")[4] == "1.2346"
    once = parse_case_csv(path)
    write_case_csv(once, tmp_path)
    assert parse_case_csv(path) == once


def test_written_file_layout(tmp_path, cv_case):
    path = write_case_csv(cv_case, tmp_path)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.decode().splitlines()[0] == HEADER
    assert path.name == "trajectory_data_case_1.csv"


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip(tmp_path_factory, seed):
    case = random_case(np.random.default_rng(seed))
    out = tmp_path_factory.mktemp("rt")
    parsed = parse_case_csv(write_case_csv(case, out))
    assert parsed == case.quantized()
    for p in parsed.points():
        assert p.timestamp_ms == 100 * p.frame_id


def test_window_counts(cv_case):
    assert len(extract_windows(cv_case, 10, 30)) == 1
    assert len(extract_windows(cv_case, 10, 10)) == 21


def test_partial_vehicle_excluded():
    case = make_case(1, [straight_track(1, 0, 0, 10), straight_track(2, 0, 5, 10, frames=range(5, 41))])
    (w,) = extract_windows(case, 10, 30)
    assert w.track_ids == (1,)
    assert len(extract_windows(case, 5, 5)[4].track_ids) == 2


def test_window_contents(cv_case):
    w = extract_windows(cv_case, 10, 30)[0]
    assert w.issue_frame == 10
    for tid in w.track_ids:
        frames = [p.frame_id for p in w.history[tid] + w.future_truth[tid]]
        assert frames == list(range(1, 41))
    assert w.truth()[1].shape == (30, 2)


def test_window_errors(cv_case):
    with pytest.raises(WindowTooLong):
        extract_windows(cv_case, 20, 21)
    short = make_case(1, [straight_track(1, 0, 0, 10, frames=range(1, 21))])
    with pytest.raises(WindowTooLong):
        extract_windows(short, 10, 30)
    with pytest.raises(ValueError):
        extract_windows(cv_case, 0, 5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 10))
def test_windows_never_span_absence(seed, H, F):
    case = random_case(np.random.default_rng(seed))
    if H + F > case.max_frame:
        return
    for w in extract_windows(case, H, F):
        for tid in w.track_ids:
            assert case.tracks[tid].covers(w.start_frame, w.start_frame + H + F - 1)
