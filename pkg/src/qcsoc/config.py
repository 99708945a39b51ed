"""Experiment configuration: strict TOML schema with defaults.

Layout (every key optional)::

    [system]   system_clock_hz, dac_channels, adc_channels,
               samples_per_cycle_dac, samples_per_cycle_adc, qubits_per_cpu
    [cpu]      rv32m, branch_taken_penalty, mmio_load_latency,
               ram_load_latency, max_cycles
    [dac]      envelope_capacity, envelope_init ("rect" | "zero"), trig,
               multiplex, fifo_depth, envelope_file,
               latency = {freq, phase, amp, env, dur}
    [dac.channel.N]   per-channel overrides of any [dac] key
    [adc]      readout_buffer, readout_buffer_capacity, trig
    [adc.channel.N]   per-channel overrides of any [adc] key
    [plant]    see :class:`qcsoc.plant.PlantParams`
    [run]      shots, seed

Unknown keys raise :class:`ConfigError` naming the offending key.
"""

import copy
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import trig as trigmod
from .core import PipelineModel
from .plant import PlantParams
from .rfsg import DEFAULT_LATENCIES, PORTS


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class DacChannelConfig:
    envelope_capacity: int = 4096
    envelope_init: str = "rect"
    trig: str = "lut:12"
    multiplex: bool = True
    fifo_depth: int = 16
    latency: dict = field(default_factory=lambda: dict(zip(PORTS, DEFAULT_LATENCIES)))
    envelope_file: str = ""

    def latencies(self):
        return tuple(self.latency[p] for p in PORTS)


@dataclass
class AdcChannelConfig:
    readout_buffer: bool = True
    readout_buffer_capacity: int = 16384
    trig: str = "lut:12"


@dataclass
class Config:
    system_clock_hz: float = 500e6
    dac_channels: int = 16
    adc_channels: int = 8
    samples_per_cycle_dac: int = 16
    samples_per_cycle_adc: int = 4
    qubits_per_cpu: int = 1
    rv32m: bool = True
    max_cycles: int = 2_000_000
    pipeline: PipelineModel = field(default_factory=PipelineModel)
    dac: DacChannelConfig = field(default_factory=DacChannelConfig)
    dac_overrides: dict = field(default_factory=dict)
    adc: AdcChannelConfig = field(default_factory=AdcChannelConfig)
    adc_overrides: dict = field(default_factory=dict)
    plant: PlantParams = field(default_factory=PlantParams)
    shots: int = 1
    seed: int = 0

    @property
    def dac_rate_hz(self):
        return self.system_clock_hz * self.samples_per_cycle_dac

    @property
    def adc_rate_hz(self):
        return self.system_clock_hz * self.samples_per_cycle_adc

    @property
    def cycle_ns(self):
        return 1e9 / self.system_clock_hz

    def dac_channel(self, i) -> DacChannelConfig:
        return self.dac_overrides.get(i, self.dac)

    def adc_channel(self, i) -> AdcChannelConfig:
        return self.adc_overrides.get(i, self.adc)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["dac_overrides"] = {str(k): v for k, v in sorted(d["dac_overrides"].items())}
        d["adc_overrides"] = {str(k): v for k, v in sorted(d["adc_overrides"].items())}
        return d

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **kw):
        c = copy.deepcopy(self)
        for k, v in kw.items():
            setattr(c, k, v)
        return c


_SYSTEM_KEYS = {
    "system_clock_hz": (int, float), "dac_channels": int, "adc_channels": int,
    "samples_per_cycle_dac": int, "samples_per_cycle_adc": int, "qubits_per_cpu": int,
}
_CPU_KEYS = {
    "rv32m": bool, "branch_taken_penalty": int, "mmio_load_latency": int,
    "ram_load_latency": int, "max_cycles": int,
}
_DAC_KEYS = {
    "envelope_capacity": int, "envelope_init": str, "trig": str, "multiplex": bool,
    "fifo_depth": int, "latency": dict, "envelope_file": str,
}
_ADC_KEYS = {"readout_buffer": bool, "readout_buffer_capacity": int, "trig": str}
_RUN_KEYS = {"shots": int, "seed": int}
_PLANT_KEYS = {
    f.name: ((int, float) if f.type in (float, "float") else int)
    for f in dataclasses.fields(PlantParams)
}


def _check(table, schema, prefix):
    out = {}
    for k, v in table.items():
        key = f"{prefix}.{k}" if prefix else k
        if k not in schema:
            raise ConfigError(key, "unknown key")
        typ = schema[k]
        if isinstance(v, bool) and typ is not bool:
            raise ConfigError(key, "expected a number, got a boolean")
        if not isinstance(v, typ):
            name = typ.__name__ if isinstance(typ, type) else "number"
            raise ConfigError(key, f"expected {name}, got {type(v).__name__}")
        out[k] = v
    return out


def _dac_channel(table, base, prefix):
    vals = _check(table, _DAC_KEYS, prefix)
    ch = copy.deepcopy(base)
    for k, v in vals.items():
        if k == "latency":
            lat = dict(ch.latency)
            for p, cyc in v.items():
                if p not in PORTS:
                    raise ConfigError(f"{prefix}.latency.{p}", "unknown port")
                if not isinstance(cyc, int) or isinstance(cyc, bool) or cyc < 0:
                    raise ConfigError(f"{prefix}.latency.{p}", "must be a non-negative integer")
                lat[p] = cyc
            ch.latency = lat
        else:
            setattr(ch, k, v)
    if ch.envelope_init not in ("rect", "zero"):
        raise ConfigError(f"{prefix}.envelope_init", "must be 'rect' or 'zero'")
    if not 1 <= ch.envelope_capacity <= 0x8000:
        raise ConfigError(f"{prefix}.envelope_capacity", "must be in [1, 32768]")
    if ch.fifo_depth < 1:
        raise ConfigError(f"{prefix}.fifo_depth", "must be >= 1")
    _check_trig(ch.trig, f"{prefix}.trig")
    return ch


def _adc_channel(table, base, prefix):
    vals = _check(table, _ADC_KEYS, prefix)
    ch = copy.deepcopy(base)
    for k, v in vals.items():
        setattr(ch, k, v)
    if not 1 <= ch.readout_buffer_capacity <= 0x8000:
        raise ConfigError(f"{prefix}.readout_buffer_capacity", "must be in [1, 32768]")
    _check_trig(ch.trig, f"{prefix}.trig")
    return ch


def _check_trig(text, key):
    try:
        trigmod.parse(text)
    except ValueError as e:
        raise ConfigError(key, str(e)) from None


def _channel_tables(table, prefix, count):
    chans = table.pop("channel", {})
    if not isinstance(chans, dict):
        raise ConfigError(f"{prefix}.channel", "expected a table")
    out = {}
    for k, v in chans.items():
        key = f"{prefix}.channel.{k}"
        try:
            i = int(k)
        except ValueError:
            raise ConfigError(key, "channel index must be an integer") from None
        if not 0 <= i < count:
            raise ConfigError(key, f"channel index out of range [0, {count})")
        if not isinstance(v, dict):
            raise ConfigError(key, "expected a table")
        out[i] = v
    return out


def from_dict(data) -> Config:
    data = copy.deepcopy(data)
    cfg = Config()
    known = {"system", "cpu", "dac", "adc", "plant", "run"}
    for k in data:
        if k not in known:
            raise ConfigError(k, "unknown section")
    for k, v in data.items():
        if not isinstance(v, dict):
            raise ConfigError(k, "expected a table")
    for k, v in _check(data.get("system", {}), _SYSTEM_KEYS, "system").items():
        setattr(cfg, k, v)
    cpu = _check(data.get("cpu", {}), _CPU_KEYS, "cpu")
    pipe = {k: cpu.pop(k) for k in list(cpu) if k.endswith(("penalty", "latency"))}
    for k, v in cpu.items():
        setattr(cfg, k, v)
    for k, v in pipe.items():
        if v < 0:
            raise ConfigError(f"cpu.{k}", "must be >= 0")
    cfg.pipeline = PipelineModel(**pipe)

    if cfg.system_clock_hz <= 0 or not math.isfinite(cfg.system_clock_hz):
        raise ConfigError("system.system_clock_hz", "must be positive")
    for k in ("dac_channels", "adc_channels"):
        if not 1 <= getattr(cfg, k) <= 32:
            raise ConfigError(f"system.{k}", "must be in [1, 32]")
    for k in ("samples_per_cycle_dac", "samples_per_cycle_adc", "qubits_per_cpu"):
        if getattr(cfg, k) < 1:
            raise ConfigError(f"system.{k}", "must be >= 1")
    if cfg.max_cycles < 1:
        raise ConfigError("cpu.max_cycles", "must be >= 1")

    dac = dict(data.get("dac", {}))
    dac_ch = _channel_tables(dac, "dac", cfg.dac_channels)
    cfg.dac = _dac_channel(dac, cfg.dac, "dac")
    cfg.dac_overrides = {i: _dac_channel(t, cfg.dac, f"dac.channel.{i}") for i, t in dac_ch.items()}

    adc = dict(data.get("adc", {}))
    adc_ch = _channel_tables(adc, "adc", cfg.adc_channels)
    cfg.adc = _adc_channel(adc, cfg.adc, "adc")
    cfg.adc_overrides = {i: _adc_channel(t, cfg.adc, f"adc.channel.{i}") for i, t in adc_ch.items()}

    plant = _check(data.get("plant", {}), _PLANT_KEYS, "plant")
    for k, v in plant.items():
        setattr(cfg.plant, k, v)
    p = cfg.plant
    for k, n in (("drive_channel", cfg.dac_channels), ("readout_dac", cfg.dac_channels),
                 ("readout_adc", cfg.adc_channels)):
        if not 0 <= getattr(p, k) < n:
            raise ConfigError(f"plant.{k}", "channel index out of range")
    if p.sigma < 0:
        raise ConfigError("plant.sigma", "must be >= 0")
    if p.delay < 0:
        raise ConfigError("plant.delay", "must be >= 0")

    for k, v in _check(data.get("run", {}), _RUN_KEYS, "run").items():
        setattr(cfg, k, v)
    if cfg.shots < 1:
        raise ConfigError("run.shots", "must be >= 1")
    return cfg


def loads(text) -> Config:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<toml>", str(e)) from None
    return from_dict(data)


def load(path) -> Config:
    """Parse a config file; relative envelope paths resolve against its directory."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError("<toml>", str(e)) from None
    cfg = from_dict(data)
    base = os.path.dirname(os.path.abspath(path))
    for ch in [cfg.dac, *cfg.dac_overrides.values()]:
        if ch.envelope_file:
            ch.envelope_file = os.path.join(base, ch.envelope_file)
    return cfg


def envelope_samples(ch: DacChannelConfig):
    """Little-endian int16 samples of a channel's envelope file, or None."""
    if not ch.envelope_file:
        return None
    with open(ch.envelope_file, "rb") as fh:
        raw = fh.read()
    if len(raw) % 2 or len(raw) // 2 > ch.envelope_capacity:
        raise ConfigError("envelope_file", f"{ch.envelope_file}: expected at most "
                          f"{ch.envelope_capacity} int16 samples")
    return np.frombuffer(raw, dtype="<i2")
