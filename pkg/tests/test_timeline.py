from fractions import Fraction

import pytest

from qoe_forge.timeline import (
    FrameTimeline,
    Timebase,
    as_framerate,
    expected_nominal_duration,
    read_sidecar,
    round_half_up,
    uniform_timeline,
    validate,
    write_sidecar,
)


def test_round_half_up():
    assert round_half_up(Fraction(1, 2)) == 1
    assert round_half_up(Fraction(3, 2)) == 2
    assert round_half_up(Fraction(5, 2)) == 3
    assert round_half_up(Fraction(7, 10)) == 1
    assert round_half_up(Fraction(3, 10)) == 0
    assert round_half_up(Fraction(0)) == 0
    assert round_half_up(Fraction(41, 2)) == 21


def test_timebase_parse_and_ticks():
    tb = Timebase.parse("1/1000")
    assert (tb.numerator, tb.denominator) == (1, 1000)
    assert str(tb) == "1/1000"
    assert tb.ticks(0.5) == 500
    assert tb.ticks("0.5") == 500
    assert Timebase(1, 90000).ticks(0.5) == 45000
    # half-tick rounds up
    assert Timebase(1, 25).ticks(0.5) == 13
    with pytest.raises(ValueError):
        Timebase(0, 1000)
    with pytest.raises(ValueError):
        Timebase.parse("fast")


def test_as_framerate_exact():
    assert as_framerate(25) == Fraction(25)
    assert as_framerate("30000/1001") == Fraction(30000, 1001)
    # float goes through its decimal string, not its binary expansion
    assert as_framerate(29.97) == Fraction(2997, 100)
    with pytest.raises(ValueError):
        as_framerate(0)


def test_expected_nominal_duration():
    assert expected_nominal_duration(Timebase(1, 1000), Fraction(25)) == 40
    assert expected_nominal_duration(Timebase(1, 1000), Fraction(30)) == 33
    assert expected_nominal_duration(Timebase(1, 90000), Fraction(30)) == 3000
    assert expected_nominal_duration(Timebase(1, 90000), Fraction(30000, 1001)) == 3003


def test_uniform_timeline():
    t = uniform_timeline(5, 25, Timebase(1, 1000), (1280, 720))
    assert t.pts == (0, 40, 80, 120, 160)
    assert t.nominal_duration == 40
    assert t.frame_count == 5
    assert t.is_uniform()
    assert t.duration_seconds == Fraction(5, 25)
    assert validate(t) == []
    with pytest.raises(ValueError):
        uniform_timeline(1, 25)


def test_validate_reports_first_offender():
    t = uniform_timeline(5, 25)
    bad = FrameTimeline((0, 40, 40, 120, 160), t.timebase, t.framerate, 40, t.resolution)
    violations = validate(bad)
    assert [v.invariant for v in violations] == ["pts_strictly_increasing"]
    assert violations[0].index == 3

    short = FrameTimeline((0,), t.timebase, t.framerate, 40, t.resolution)
    assert any(v.invariant == "frame_count" for v in validate(short))

    wrong_nominal = FrameTimeline(t.pts, t.timebase, t.framerate, 41, t.resolution)
    assert any(v.invariant == "nominal_duration_consistent" for v in validate(wrong_nominal))

    bad_res = FrameTimeline(t.pts, t.timebase, t.framerate, 40, (0, 1080))
    assert any(v.invariant == "resolution_positive" for v in validate(bad_res))


def test_validate_accepts_distorted_tracks():
    # non-uniform gaps are fine as long as pts increase
    t = uniform_timeline(4, 25)
    distorted = FrameTimeline((0, 40, 160, 200), t.timebase, t.framerate, 40, t.resolution)
    assert validate(distorted) == []


def test_sidecar_round_trip(tmp_path):
    t = uniform_timeline(7, 30, Timebase(1, 90000), (1920, 1080))
    path = tmp_path / "track.csv"
    write_sidecar(t, path)
    back = read_sidecar(path)
    assert back == t


def test_sidecar_fractional_framerate(tmp_path):
    t = uniform_timeline(4, "30000/1001", Timebase(1, 90000))
    path = tmp_path / "ntsc.csv"
    write_sidecar(t, path)
    back = read_sidecar(path)
    assert back.framerate == Fraction(30000, 1001)
    assert back.nominal_duration == 3003


def test_sidecar_duration_flags(tmp_path):
    t = uniform_timeline(4, 25)
    distorted = FrameTimeline((0, 40, 160, 200), t.timebase, t.framerate, 40, t.resolution)
    path = tmp_path / "d.csv"
    write_sidecar(distorted, path)
    lines = path.read_text().splitlines()
    rows = [ln for ln in lines if ln and not ln.startswith("#")][1:]
    # frame 2 has a 120-tick forward gap, everything else nominal; last is 1
    assert rows == ["1,0,1", "2,40,0", "3,160,1", "4,200,1"]


@pytest.mark.parametrize(
    "mutate,message",
    [
        (lambda s: s.replace("# timebase=1/1000\n", ""), "missing"),
        (lambda s: s.replace("frame_index,pts,duration_flag", "a,b,c"), "header"),
        (lambda s: s.replace("2,40,1", "5,40,1"), "frame_index"),
        (lambda s: s.replace("2,40,1", "2,40,7"), "duration_flag"),
        (lambda s: s.replace("2,40,1", "2,x,1"), "integer"),
    ],
)
def test_sidecar_parse_errors(tmp_path, mutate, message):
    t = uniform_timeline(4, 25)
    path = tmp_path / "t.csv"
    write_sidecar(t, path)
    path.write_text(mutate(path.read_text()))
    with pytest.raises(ValueError, match=message):
        read_sidecar(path)
