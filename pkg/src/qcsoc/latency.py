"""Feedback-latency accounting from a run's event log.

The round trip of a measurement-conditioned gate is split into
consecutive stages, each in cycles:

pulse_lambda   readout pulse: first parameter release -> t0
plant_delay    t0 -> first sample of the decoder window
window         decoder window length
finalize       last window cycle + 1 -> result visible to loads
poll_wait      result visible -> first instruction of the conditional section
cpu_reaction   conditional section (lw RESULT plus the branch or multiplex store)
cond_lambda    parameter latency of the conditional pulse
"""

from dataclasses import dataclass

STAGES = ("pulse_lambda", "plant_delay", "window", "finalize", "poll_wait",
          "cpu_reaction", "cond_lambda")


@dataclass
class LatencyReport:
    pulse_lambda: int
    plant_delay: int
    window: int
    finalize: int
    cpu_reaction: int
    cond_lambda: int
    poll_wait: int = 0
    clock_hz: float = 500e6

    @property
    def total_cycles(self):
        return sum(getattr(self, k) for k in STAGES)

    @property
    def loop_cycles(self):
        """Readout release to result visible."""
        return self.pulse_lambda + self.plant_delay + self.window + self.finalize

    def ns(self, cycles):
        return cycles * 1e9 / self.clock_hz

    @property
    def total_ns(self):
        return self.ns(self.total_cycles)

    def rows(self):
        return [(k, getattr(self, k), self.ns(getattr(self, k))) for k in STAGES]

    def format(self):
        lines = [f"{'stage':<14} {'cycles':>7} {'ns':>9}"]
        for k, c, ns in self.rows():
            lines.append(f"{k:<14} {c:>7} {ns:>9.1f}")
        lines.append(f"{'total':<14} {self.total_cycles:>7} {self.total_ns:>9.1f}")
        return "\n".join(lines) + "\n"


class LatencyError(ValueError):
    pass


def from_events(events, cfg, section_begin, section_ends, channel_latencies=None):
    """Build a report from one shot's events.

    ``section_begin`` / ``section_ends`` are the pcs bounding the conditional
    section; the core must have had them in its ``watch`` set.
    ``channel_latencies`` maps a generator index to its effective port
    latencies (used for the conditional pulse).
    """
    p = cfg.plant
    ro = p.readout_dac
    releases = [e for e in events if e[0] == "release" and e[2] == ro]
    arms = [e for e in events if e[0] == "arm" and e[2] == p.readout_adc]
    results = [e for e in events if e[0] == "result" and e[2] == p.readout_adc]
    if not releases or not arms or not results:
        raise LatencyError("event log lacks a readout release, arm and result")
    t0 = releases[0][4]
    first_rel = min(e[1] for e in releases if e[4] == t0)
    arm = arms[0]
    t_start, T = arm[3], arm[4]
    window_cycles = -(-T // cfg.samples_per_cycle_adc)
    result_cycle = results[0][1]          # last window cycle + 1
    ready = result_cycle + 1
    retire = [e for e in events if e[0] == "retire"]
    begin = next((e[1] for e in retire if e[2] == section_begin and e[1] >= ready), None)
    ends = set(section_ends)
    end = next((e[1] for e in retire if e[2] in ends and begin is not None and e[1] > begin), None)
    if begin is None or end is None:
        raise LatencyError("conditional section not found in the retire trace")
    if channel_latencies is None:
        cond_lambda = 0
    else:
        cond_lambda = max(channel_latencies[p.drive_channel])
    return LatencyReport(
        pulse_lambda=t0 - first_rel,
        plant_delay=t_start - t0,
        window=window_cycles,
        finalize=ready - (t_start + window_cycles),
        poll_wait=begin - ready,
        cpu_reaction=end - begin,
        cond_lambda=cond_lambda,
        clock_hz=cfg.system_clock_hz,
    )
