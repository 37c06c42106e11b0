import math
import warnings

import numpy as np
import pytest

from sivsaw.errors import AlreadyCorrectedError, InvalidParameterError, UnsupportedOverlapError
from sivsaw.saw_device import power_to_rabi, propagation_delay
from sivsaw.sequence import (
    DIM, DOWN, EXCITED, UP, OutOfBandWarning, Pulse, PulseKind, PulseSequence,
    compile_sequence, correct_timing, pi_pulse_duration,
)

NS = 1e-9
C1, AC = PulseKind.OPTICAL_C1, PulseKind.ACOUSTIC


def optical(start, duration, label):
    return Pulse(C1, start * NS, duration * NS, power_or_rate=5e7, label=label)


def acoustic(start, duration, power=4e-3, freq=3.43e9, label=""):
    return Pulse(AC, start * NS, duration * NS, freq=freq, power_or_rate=power, label=label)


def odar_seq():
    return PulseSequence((optical(0, 150, "init"), acoustic(200, 20),
                          optical(300, 100, "readout")), 400 * NS)


def ramsey_seq(delay=30):
    return PulseSequence((optical(0, 150, "init"), acoustic(200, 5.2), acoustic(220 + delay, 5.2),
                          optical(320 + delay, 100, "readout")), (420 + delay) * NS)


def build(ctx, seq, **kw):
    kw.setdefault("allow_uncorrected", True)
    return compile_sequence(seq, ctx.model, ctx.device, ctx.calibration, **kw)


def test_odar_has_five_segments(ctx):
    sched = build(ctx, odar_seq())
    assert [s.label for s in sched.segments] == ["init", "gap", "acoustic", "gap", "readout"]
    assert len(sched.readout_windows) == 2


def test_ramsey_has_seven_segments(ctx):
    sched = build(ctx, ramsey_seq())
    assert len(sched.segments) == 7
    assert [w[1] for w in sched.readout_windows] == ["init", "readout"]


def test_empty_sequence_single_ambient_segment(ctx):
    sched = build(ctx, PulseSequence((), 100 * NS))
    assert len(sched.segments) == 1
    seg = sched.segments[0]
    assert seg.drives == () and seg.label == "gap"
    assert (seg.start, seg.stop) == (0.0, 100 * NS)


@pytest.mark.parametrize("seq", [odar_seq(), ramsey_seq(), ramsey_seq(0.7)])
def test_segments_tile_total_duration(ctx, seq):
    sched = build(ctx, seq)
    segs = sched.segments
    assert segs[0].start == 0.0 and segs[-1].stop == seq.total_duration
    for a, b in zip(segs[:-1], segs[1:]):
        assert a.stop == b.start
    total = math.fsum(s.length for s in segs)
    assert abs(total - seq.total_duration) <= 1e-15 * seq.total_duration


def test_optical_segments_carry_pump(ctx):
    sched = build(ctx, odar_seq())
    init, gap = sched.segments[0], sched.segments[1]
    assert len(init.collapses) == len(gap.collapses) + 1
    pump = init.collapses[-1]
    assert pump[EXCITED, DOWN] == pytest.approx(math.sqrt(5e7))
    assert np.count_nonzero(pump) == 1


def test_drive_peak_matches_power_to_rabi(ctx):
    sched = build(ctx, odar_seq())
    drive = sched.segments[2].drives[0]
    a, b = drive.envelope.support
    peak = drive.envelope.sample(np.linspace(a, b, 4001)).max()
    expected = 2 * math.pi * power_to_rabi(4e-3, 3.43e9, ctx.device, ctx.calibration)
    assert peak == pytest.approx(expected, rel=1e-12)
    assert drive.operator[DOWN, UP] == 1 and drive.operator.shape == (DIM, DIM)


def test_flat_passband_uses_calibration(ctx):
    seq = PulseSequence((acoustic(10, 20, freq=3.3e9),), 60 * NS)
    sched = build(ctx, seq, passband_weighting=False, envelope="rect")
    drive = sched.segments[1].drives[0]
    assert drive.envelope.amplitude == pytest.approx(2 * math.pi * 48e6)


def test_mirrored_boundaries(ctx):
    seq = ramsey_seq(13)
    fwd = build(ctx, seq, envelope="rect")
    rev = build(ctx, seq.mirrored(), envelope="rect")
    b_fwd = np.array([s.start for s in fwd.segments] + [fwd.total_duration])
    b_rev = np.array([s.start for s in rev.segments] + [rev.total_duration])
    np.testing.assert_allclose(b_rev, seq.total_duration - b_fwd[::-1], rtol=0, atol=1e-20)


def test_correct_timing_shift(ctx):
    seq = odar_seq()
    fixed = correct_timing(seq, 300e-6, ctx.device)
    delay = propagation_delay(300e-6, ctx.device)
    assert delay == pytest.approx(29.67 * NS, abs=0.01 * NS)
    assert fixed.delay_corrected
    for p, q in zip(seq.pulses, fixed.pulses):
        assert q.duration == p.duration
        assert q.start == (p.start + delay if p.kind is AC else p.start)


def test_correct_timing_zero_distance_is_identity(ctx):
    fixed = correct_timing(odar_seq(), 0.0, ctx.device)
    assert fixed.pulses == odar_seq().pulses


def test_correct_timing_keeps_acoustic_order(ctx):
    seq = ramsey_seq(3)
    fixed = correct_timing(seq, 500e-6, ctx.device)
    assert [p.start for p in fixed.acoustic] == sorted(p.start for p in fixed.acoustic)
    assert [p.duration for p in fixed.acoustic] == [p.duration for p in seq.acoustic]


def test_double_correction_rejected(ctx):
    fixed = correct_timing(odar_seq(), 300e-6, ctx.device)
    with pytest.raises(AlreadyCorrectedError):
        correct_timing(fixed, 300e-6, ctx.device)


def test_uncorrected_compile_rejected(ctx):
    with pytest.raises(InvalidParameterError):
        build(ctx, odar_seq(), allow_uncorrected=False)


def test_pi_pulse_duration():
    assert pi_pulse_duration(48e6) == pytest.approx(10.42 * NS, abs=0.005 * NS)
    assert pi_pulse_duration(48e6) / 2 == pytest.approx(5.21 * NS, abs=0.005 * NS)
    assert pi_pulse_duration(1.0) == 0.5
    with pytest.raises(InvalidParameterError):
        pi_pulse_duration(0.0)


def test_optical_overlap_rejected(ctx):
    seq = PulseSequence((optical(0, 100, "a"), optical(50, 100, "b")), 200 * NS)
    with pytest.raises(UnsupportedOverlapError):
        build(ctx, seq)


def test_optical_acoustic_overlap_needs_flag(ctx):
    pulses = (optical(0, 100, "init"), acoustic(50, 20))
    with pytest.raises(UnsupportedOverlapError):
        PulseSequence(pulses, 200 * NS)
    seq = PulseSequence(pulses, 200 * NS, allow_overlap=True)
    sched = build(ctx, seq, envelope="rect")
    ambient = len(sched.segments[-1].collapses)
    assert any(s.drives and len(s.collapses) > ambient for s in sched.segments)


def test_out_of_band_warns(ctx):
    seq = PulseSequence((acoustic(10, 20, freq=10e9),), 60 * NS)
    with pytest.warns(OutOfBandWarning):
        build(ctx, seq)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build(ctx, odar_seq())


def test_support_past_end_rejected(ctx):
    # the shaped envelope outlasts the declared pulse by the impulse-response length
    seq = PulseSequence((acoustic(10, 20),), 30 * NS)
    with pytest.raises(InvalidParameterError):
        build(ctx, seq)
    build(ctx, seq, envelope="rect")


def test_pulse_validation():
    with pytest.raises(InvalidParameterError):
        acoustic(0, 0)
    with pytest.raises(InvalidParameterError):
        acoustic(-1, 5)
    with pytest.raises(InvalidParameterError):
        acoustic(0, 5, power=-1.0)
    with pytest.raises(InvalidParameterError):
        Pulse(AC, 0.0, 1e-9)
    with pytest.raises(InvalidParameterError):
        PulseSequence((acoustic(0, 20),), 10 * NS)


def test_pulses_sorted_and_dict_round_trip():
    seq = PulseSequence(tuple(reversed(ramsey_seq().pulses)), ramsey_seq().total_duration)
    starts = [p.start for p in seq.pulses]
    assert starts == sorted(starts)
    again = PulseSequence.from_dict(seq.to_dict())
    assert again == seq
    assert again.pulses[0].kind is C1


def test_describe_lists_segments(ctx):
    text = build(ctx, odar_seq()).describe()
    assert len(text.splitlines()) == 5
    assert "readout" in text
