"""Top level: CPU, bus, signal generators, decoders and the plant in one clock domain.

Per cycle the fixed order is: CPU issues (bus effects land at the issue
cycle), then generators emit, the plant absorbs drive and emits readout,
and decoders consume. Peripherals are advanced lazily in spans between
events; ``sync`` brings them up to the CPU's current cycle before any
peripheral access.
"""

from dataclasses import dataclass

from . import trig as trigmod
from .bus import (Bus, Memory, Registers, DATA_BASE, DATA_SIZE, MEM_STRIDE, PROG_BASE,
                  PROG_SIZE, REG_STRIDE, SG_ERRFLAGS, SG_T0, SYS_BASE, SYS_REFTIME, SYS_SHOT, SYS_TREG,
                  env_addr, rd_addr, rdbuf_addr, sg_addr)
from . import config as configmod
from .config import Config
from .core import Core, Halt
from .fixedpoint import M32
from .plant import QubitPlant
from .rfdec import Decoder
from .rfsg import SignalGenerator


@dataclass
class ShotResult:
    shot: int
    halt: object
    state: int
    I: int
    Q: int
    cycles: int
    exit_code: int


class _SgPort:
    def __init__(self, soc, sg):
        self.soc = soc
        self.sg = sg

    def mmio_read(self, off):
        if off == SG_ERRFLAGS:
            self.soc.sync_to_cpu()
        return self.sg.mmio_read(off, self.soc.core.cycle)

    def mmio_write(self, off, value):
        # parameter registers and commits only touch FIFO tails, whose
        # entries release at or after the CPU's cycle, so no sync is needed
        soc = self.soc
        now = soc.core.cycle
        if off == SG_ERRFLAGS:
            soc.sync_to_cpu()
        elif off == SG_T0:
            soc.core.treg = value
            soc._activate(self.sg)
        self.sg.mmio_write(off, value, now)


class _RdPort:
    def __init__(self, soc, dec):
        self.soc = soc
        self.dec = dec

    def mmio_read(self, off):
        return self.dec.mmio_read(off, self.soc.core.cycle)

    def mmio_write(self, off, value):
        self.dec.mmio_write(off, value, self.soc.core.cycle)
        if self.dec.armed:
            self.soc._armed.add(self.dec)


class _SysPort:
    def __init__(self, soc):
        self.soc = soc

    def mmio_read(self, off):
        core = self.soc.core
        if off == SYS_TREG:
            return core.treg
        if off == SYS_REFTIME:
            return core.cycle & M32
        if off == SYS_SHOT:
            return self.soc.shot
        return 0

    def mmio_write(self, off, value):
        if off == SYS_TREG:
            self.soc.core.treg = value


class SoC:
    def __init__(self, config: Config = None, trace_channels=()):
        self.cfg = cfg = config or Config()
        self.events = []
        self.shot = 0
        self.seed = cfg.seed
        self.now = 0
        self.bus = bus = Bus()
        self.prog = Memory(PROG_SIZE)
        self.data = Memory(DATA_SIZE)
        self.image = b""
        bus.map_region(PROG_BASE, PROG_SIZE, "ram", self.prog, "prog")
        bus.map_region(DATA_BASE, DATA_SIZE, "ram", self.data, "data")

        sync = self.sync_to_cpu
        self.sgs = []
        for i in range(cfg.dac_channels):
            cc = cfg.dac_channel(i)
            sg = SignalGenerator(i, cfg.samples_per_cycle_dac, trigmod.parse(cc.trig),
                                 cc.latencies(), True, cc.fifo_depth, cc.envelope_capacity,
                                 cc.multiplex, cc.envelope_init, self.events)
            env = configmod.envelope_samples(cc)
            if env is not None:
                sg.load_envelope(env)
            sg.env.before = sync
            self.sgs.append(sg)
            bus.map_region(env_addr(i), sg.env.size, "ram", sg.env, f"env{i}")
            bus.map_region(sg_addr(i), REG_STRIDE, "mmio", Registers(_SgPort(self, sg)), f"sg{i}")

        self.decs = []
        for i in range(cfg.adc_channels):
            ac = cfg.adc_channel(i)
            dec = Decoder(i, cfg.samples_per_cycle_adc, trigmod.parse(ac.trig), ac.readout_buffer,
                          ac.readout_buffer_capacity, self.events)
            dec.rdbuf.before = sync
            dec.on_multiplex = (lambda j: lambda bank, now: self._multiplex(j, bank, now))(i)
            self.decs.append(dec)
            if ac.readout_buffer:
                bus.map_region(rdbuf_addr(i), min(dec.rdbuf.size, MEM_STRIDE), "rom", dec.rdbuf, f"rdbuf{i}")
            bus.map_region(rd_addr(i), REG_STRIDE, "mmio", Registers(_RdPort(self, dec), sync), f"rd{i}")
        bus.map_region(SYS_BASE, REG_STRIDE, "mmio", Registers(_SysPort(self)), "sys")

        self.plant = QubitPlant(cfg.plant, cfg.samples_per_cycle_dac, cfg.samples_per_cycle_adc, self.events)
        p = cfg.plant
        self.sgs[p.drive_channel].drive = self.plant.absorb
        self.sgs[p.readout_dac].on_window = self.plant.on_readout_window
        for dec in self.decs:
            dec.source = self.plant.samples

        self.core = Core(bus, cfg.pipeline, cfg.rv32m, pulse_unit=self)
        self.core.events = self.events
        self.prog.on_write = self._watch(PROG_BASE, PROG_SIZE, True)
        self.data.on_write = self._watch(DATA_BASE, DATA_SIZE, False)
        self._prog_dirty = True
        self.trace_channels = tuple(trace_channels)
        self.reset()

    # -- lifecycle ---------------------------------------------------------------

    def _watch(self, base, size, is_prog):
        core = self.core

        def written(off):
            if is_prog:
                self._prog_dirty = True
            if off is None:
                core.invalidate_range(base, base + size)
            else:
                core.invalidate(base + off)
        return written

    def load_program(self, image: bytes):
        if len(image) > PROG_SIZE:
            raise ValueError("program image larger than program RAM")
        self.image = bytes(image)
        self._prog_dirty = True
        self.reset(self.shot)

    def load_envelope(self, channel, samples, start=0):
        self.sgs[channel].load_envelope(samples, start)

    def reset(self, shot=0, seed=None):
        """Return to power-on state for ``shot``; program and envelopes are kept."""
        if seed is not None:
            self.seed = seed
        self.shot = shot
        self.events.clear()
        self.now = 0
        self.core.reset()
        if self._prog_dirty:
            self.prog.clear()
            self.prog.load(self.image)
            self._prog_dirty = False
        self.data.clear()
        for i, sg in enumerate(self.sgs):
            sg.reset(clear_env=False)
            sg.trace = [] if i in self.trace_channels else None
        for dec in self.decs:
            dec.reset()
        self.plant.reset(shot)
        self.plant.seed(self.seed, shot)
        self._active = set(sg for sg in self.sgs if sg.trace is not None)
        self._armed = set()

    # -- pulse unit ------------------------------------------------------------

    def issue(self, fields, treg):
        if fields.id >= len(self.sgs):
            raise Halt("illegal-instruction", detail=f"pulse to missing generator {fields.id}")
        sg = self.sgs[fields.id]
        self._activate(sg)
        sg.issue(fields, treg, self.core.cycle)

    def _activate(self, sg):
        if sg not in self._active:
            sg.now = max(sg.now, self.now)
            self._active.add(sg)

    def _multiplex(self, rd_index, bank, now):
        if rd_index >= len(self.sgs):
            return False
        sg = self.sgs[rd_index]
        self._activate(sg)
        return sg.set_multiplex(bank, now)

    # -- time --------------------------------------------------------------------

    def sync_to_cpu(self):
        self.sync(self.core.cycle)

    def sync(self, t_end):
        """Advance every peripheral through cycle ``t_end - 1``."""
        now = self.now
        if t_end <= now:
            return
        plant = self.plant
        act = sorted(self._active, key=lambda s: s.index)
        while now < t_end:
            nxt = t_end
            for sg in act:
                sg._events_at(now)
                e = sg.next_event()
                if e is not None and e < nxt:
                    nxt = e
            e = plant.next_event(now)
            if e is not None and now < e < nxt:
                nxt = e
            for sg in act:
                sg._emit(now, nxt)
                sg.now = nxt
            plant.advance(nxt)
            now = nxt
        self.now = t_end
        for sg in act:
            if not sg.busy():
                self._active.discard(sg)
        if self._armed:
            for dec in sorted(self._armed, key=lambda d: d.index):
                dec.advance(t_end)
                if not dec.armed:
                    self._armed.discard(dec)

    # -- running -----------------------------------------------------------------

    def run(self, max_cycles=None, drain=0):
        """Run the loaded program to a halt; peripherals follow to the halt cycle (+drain)."""
        rep = self.core.run(max_cycles or self.cfg.max_cycles)
        self.sync(rep.cycle + drain)
        return rep

    def run_shot(self, shot, max_cycles=None, drain=0):
        self.reset(shot)
        rep = self.run(max_cycles, drain)
        dec = self.decs[self.cfg.plant.readout_adc]
        r = dec.last_result
        state, I, Q = (r.state, r.I, r.Q) if r is not None else (-1, 0, 0)
        return ShotResult(shot, rep, state, I, Q, rep.cycle, rep.exit_code)

    def waveform(self, channel):
        """(first global sample index, samples) recorded for a traced channel."""
        return self.sgs[channel].traced_samples()

    def symbols(self):
        from .bus import address_constants
        out = dict(address_constants())
        for i in range(len(self.sgs)):
            out[f"SG_PHASE_ADDR({i})"] = sg_addr(i, 0x08)
        for i in range(len(self.decs)):
            out[f"RD_RES_ADDR({i})"] = rd_addr(i, 0x10)
            out[f"MULTIPLEX_REG_ADDR({i})"] = rd_addr(i, 0x14)
        return out
