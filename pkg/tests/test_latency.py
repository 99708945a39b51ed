import dataclasses

import pytest

from qcsoc import programs
from qcsoc.config import Config
from qcsoc.latency import STAGES, LatencyError, LatencyReport, from_events

from simhelp import config, soc_for


def test_itemized_example_totals_68_ns():
    rep = LatencyReport(pulse_lambda=6, plant_delay=2, window=64 // 4, finalize=1,
                        cpu_reaction=3, cond_lambda=6)
    assert rep.total_cycles == 34
    assert rep.total_ns == pytest.approx(68.0)
    text = rep.format()
    assert [line.split()[0] for line in text.splitlines()[1:-1]] == list(STAGES)
    assert text.splitlines()[-1].split() == ["total", "34", "68.0"]


def test_ns_follow_the_configured_clock():
    rep = LatencyReport(1, 1, 1, 1, 1, 1, clock_hz=250e6)
    assert rep.ns(1) == pytest.approx(4.0)


def _report(variant, prep_amp=0, cfg=None):
    cfg = cfg or config()
    script = programs.build_fast_reset(variant, cfg, prep_amp=prep_amp)
    begin, ends = programs.section_labels(variant)
    soc, unit = soc_for(script, watch=(begin,) + ends)
    res = soc.run_shot(0)
    assert res.halt.reason == "program-exit"
    assert not any(e[0] == "sg_error" for e in soc.events)
    lat = {i: sg.latencies for i, sg in enumerate(soc.sgs)}
    return from_events(soc.events, cfg, unit.symbols[begin],
                       [unit.symbols[e] for e in ends], lat), soc


def test_loop_latency_is_pulse_delay_window_finalize():
    cfg = config()
    rep, soc = _report("branchless", cfg=cfg)
    sg = soc.sgs[cfg.plant.readout_dac]
    assert rep.pulse_lambda == max(sg.latencies)
    assert rep.plant_delay == -(-cfg.plant.delay // cfg.samples_per_cycle_adc)
    assert rep.window == programs.READOUT_DUR // cfg.samples_per_cycle_dac
    assert rep.finalize == 1
    release = min(e[1] for e in soc.events if e[0] == "release" and e[2] == cfg.plant.readout_dac)
    result = next(e[1] for e in soc.events if e[0] == "result")
    assert rep.loop_cycles == result + 1 - release


@pytest.mark.parametrize("prep_amp,taken", [(0, True), (programs.nominal_pi_amp(Config()), False)])
def test_branch_minus_branchless_matches_penalty(prep_amp, taken):
    a, _ = _report("branch", prep_amp)
    b, _ = _report("branchless", prep_amp)
    penalty = Config().pipeline.branch_taken_penalty
    assert a.cpu_reaction - b.cpu_reaction == (penalty if taken else 0)
    for k in ("pulse_lambda", "plant_delay", "window", "finalize", "cond_lambda"):
        assert getattr(a, k) == getattr(b, k)


def test_doubling_the_window_doubles_only_the_window(monkeypatch):
    base, _ = _report("branchless")
    monkeypatch.setattr(programs, "READOUT_DUR", 2 * programs.READOUT_DUR)
    monkeypatch.setattr(programs, "X_OFFSET", programs.X_OFFSET + base.window)
    dbl, _ = _report("branchless")
    assert dbl.window == 2 * base.window
    # poll_wait depends on where the poll loop happens to be; every other stage is fixed
    changed = {k for k in STAGES if getattr(dbl, k) != getattr(base, k)} - {"poll_wait"}
    assert changed == {"window"}


def test_missing_events_are_reported():
    with pytest.raises(LatencyError):
        from_events([], Config(), 0, [4])


def test_missing_section_is_reported():
    rep, soc = _report("branchless")
    with pytest.raises(LatencyError):
        from_events(soc.events, Config(), 0xFFF0, [0xFFF4])


def test_report_is_a_plain_record():
    rep = LatencyReport(6, 2, 16, 1, 3, 6)
    assert dataclasses.asdict(rep)["window"] == 16
