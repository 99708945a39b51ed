"""Batch front-end: ``qcsoc run | asm | disasm | map | latency``.

Exit codes: 0 success, 64 configuration error, 65 assembly error,
66 missing input, 70 guest fault, 75 timeout.
"""

import argparse
import csv
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import config as configmod
from . import programs
from .asm import AsmError, assemble, disassemble
from .bus import format_map
from .latency import LatencyError, from_events
from .soc import SoC

EXIT_OK = 0
EXIT_CONFIG = 64
EXIT_ASM = 65
EXIT_NOINPUT = 66
EXIT_GUEST = 70
EXIT_TIMEOUT = 75

GUEST_FAULTS = ("bus-fault", "misaligned", "illegal-instruction", "breakpoint")


def git_blob_sha1(data: bytes) -> str:
    """Content hash as ``git hash-object`` computes it."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def load_config(path):
    if not path:
        return configmod.Config()
    return configmod.load(path)


def load_program(source, cfg):
    """(image, symbols) for ``builtin:NAME``, an assembly file or a flat binary."""
    if source.startswith("builtin:"):
        unit = programs.builtin(source.split(":", 1)[1], cfg).assemble()
        return unit.image, unit.symbols
    if not os.path.exists(source):
        raise FileNotFoundError(source)
    if source.endswith((".s", ".S", ".asm")):
        with open(source, encoding="utf-8") as fh:
            unit = assemble(fh.read())
        return unit.image, unit.symbols
    with open(source, "rb") as fh:
        return fh.read(), {}


def _run_range(cfg, image, seed, shots, trace_channels, rdbuf):
    """Run a contiguous range of shots; returns rows, waveform rows, dumps, halts."""
    soc = SoC(cfg, trace_channels=trace_channels)
    soc.load_program(image)
    soc.reset(shots[0], seed)
    rows, waves, dumps, halts = [], [], {}, []
    for shot in shots:
        res = soc.run_shot(shot)
        rows.append((shot, res.state, res.I, res.Q, res.cycles))
        halts.append((res.halt.reason, res.exit_code))
        if shot == 0:
            for ch in trace_channels:
                g0, samples = soc.waveform(ch)
                S = cfg.samples_per_cycle_dac
                for k, v in enumerate(samples.tolist()):
                    g = g0 + k
                    waves.append((g // S, ch, g % S, v))
        if rdbuf:
            for dec in soc.decs:
                if dec.captured:
                    dumps.setdefault(dec.index, []).append(bytes(dec.rdbuf.data[:2 * dec.captured]))
        if res.halt.reason != "program-exit":
            break
    return rows, waves, dumps, halts


def _split(n, jobs):
    jobs = max(1, min(jobs, n))
    step = -(-n // jobs)
    return [list(range(i, min(n, i + step))) for i in range(0, n, step)]


def run_shots(cfg, image, seed, n_shots, trace_channels=(), rdbuf=False, jobs=1):
    """Execute ``n_shots`` and merge the per-range results in shot order."""
    parts = _split(n_shots, jobs)
    if len(parts) == 1:
        results = [_run_range(cfg, image, seed, parts[0], tuple(trace_channels), rdbuf)]
    else:
        with ProcessPoolExecutor(len(parts)) as ex:
            futs = [ex.submit(_run_range, cfg, image, seed, p, tuple(trace_channels), rdbuf)
                    for p in parts]
            results = [f.result() for f in futs]
    rows, waves, dumps, halts = [], [], {}, []
    for r, w, d, h in results:
        rows += r
        waves += w
        halts += h
        for ch, blobs in d.items():
            dumps.setdefault(ch, []).extend(blobs)
        if h and h[-1][0] != "program-exit":
            break
    return rows, waves, dumps, halts


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def manifest_text(cfg, seed, image, n_shots, halts):
    codes = {}
    for reason, code in halts:
        codes[(reason, code)] = codes.get((reason, code), 0) + 1
    lines = [
        f"config_hash={cfg.hash()}",
        f"seed={seed}",
        f"shots={n_shots}",
        f"program_sha1={git_blob_sha1(image)}",
        f"program_bytes={len(image)}",
        f"system_clock_hz={cfg.system_clock_hz:.0f}",
        f"dac_channels={cfg.dac_channels}",
        f"adc_channels={cfg.adc_channels}",
        f"samples_per_cycle_dac={cfg.samples_per_cycle_dac}",
        f"samples_per_cycle_adc={cfg.samples_per_cycle_adc}",
        f"dac_rate={cfg.dac_rate_hz / 1e9:.1f} GHz",
        f"adc_rate={cfg.adc_rate_hz / 1e9:.1f} GHz",
        "reftime_bits=32",
    ]
    for i in range(cfg.dac_channels):
        env = configmod.envelope_samples(cfg.dac_channel(i))
        if env is not None:
            lines.append(f"envelope{i}_sha1={git_blob_sha1(env.tobytes())}")
    for (reason, code), n in sorted(codes.items()):
        lines.append(f"halt.{reason}.exit{code}={n}")
    return "\n".join(lines) + "\n"


def _exit_for(halts):
    for reason, _ in halts:
        if reason == "timeout":
            return EXIT_TIMEOUT
        if reason in GUEST_FAULTS:
            return EXIT_GUEST
    return EXIT_OK


def cmd_run(args):
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    n = cfg.shots if args.shots is None else args.shots
    if n < 1:
        raise configmod.ConfigError("--shots", "must be >= 1")
    traced = tuple(int(c) for c in args.trace_channels.split(",") if c.strip()) if args.trace_channels else ()
    for ch in traced:
        if not 0 <= ch < cfg.dac_channels:
            raise configmod.ConfigError("--trace-channels", f"no DAC channel {ch}")
    image, _ = load_program(args.program, cfg)
    rows, waves, dumps, halts = run_shots(cfg, image, seed, n, traced, args.rdbuf, args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(os.path.join(args.out_dir, "shots.csv"),
               ("shot", "measured_state", "I", "Q", "cycles"), rows)
    if traced:
        _write_csv(os.path.join(args.out_dir, "waveform.csv"),
                   ("cycle", "channel", "sample_index_in_cycle", "value"), waves)
    for ch, blobs in sorted(dumps.items()):
        with open(os.path.join(args.out_dir, f"rdbuf_{ch}.bin"), "wb") as fh:
            fh.write(b"".join(blobs))
    with open(os.path.join(args.out_dir, "manifest.txt"), "w") as fh:
        fh.write(manifest_text(cfg, seed, image, n, halts))
    code = _exit_for(halts)
    if code != EXIT_OK:
        reason = next(r for r, _ in halts if r != "program-exit")
        print(f"error: shot {len(halts) - 1} halted with {reason}", file=sys.stderr)
    return code


def cmd_asm(args):
    with open(args.source, encoding="utf-8") as fh:
        unit = assemble(fh.read(), origin=args.origin)
    out = args.output or os.path.splitext(args.source)[0] + ".bin"
    with open(out, "wb") as fh:
        fh.write(unit.image)
    if args.symbols:
        with open(args.symbols, "w") as fh:
            fh.write(unit.symbol_table())
    else:
        sys.stdout.write(unit.symbol_table())
    return EXIT_OK


def cmd_disasm(args):
    with open(args.binary, "rb") as fh:
        data = fh.read()
    if len(data) % 4:
        data += bytes(4 - len(data) % 4)
    sys.stdout.write(disassemble(data, origin=args.origin))
    return EXIT_OK


def cmd_map(args):
    cfg = load_config(args.config)
    soc = SoC(cfg)
    sys.stdout.write(format_map(soc.bus, soc.symbols()))
    return EXIT_OK


def cmd_latency(args):
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    image, symbols = load_program(args.program, cfg)
    begin = symbols.get("cond_begin")
    ends = [v for k, v in symbols.items() if k.startswith("cond_end")]
    if begin is None or not ends:
        print("error: program has no cond_begin/cond_end labels", file=sys.stderr)
        return EXIT_NOINPUT
    soc = SoC(cfg)
    soc.load_program(image)
    soc.core.watch = frozenset([begin] + ends)
    soc.reset(args.shot, seed)
    rep = soc.run()
    if rep.reason != "program-exit":
        print(f"error: halted with {rep.reason}", file=sys.stderr)
        return EXIT_TIMEOUT if rep.reason == "timeout" else EXIT_GUEST
    lat = {i: sg.latencies for i, sg in enumerate(soc.sgs)}
    report = from_events(soc.events, cfg, begin, ends, lat)
    sys.stdout.write(report.format())
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="qcsoc", description="Quantum control SoC simulator")
    sub = ap.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run shots of a program")
    r.add_argument("--config")
    r.add_argument("--program", required=True, help="file.s, file.bin or builtin:NAME")
    r.add_argument("--shots", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--trace-channels", default="", help="comma-separated DAC channels to trace")
    r.add_argument("--out-dir", default="out")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--rdbuf", action="store_true", help="dump captured readout buffers")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("asm", help="assemble to a flat binary")
    a.add_argument("source")
    a.add_argument("-o", "--output")
    a.add_argument("--symbols")
    a.add_argument("--origin", type=lambda s: int(s, 0), default=0)
    a.set_defaults(func=cmd_asm)

    d = sub.add_parser("disasm", help="disassemble a flat binary")
    d.add_argument("binary")
    d.add_argument("--origin", type=lambda s: int(s, 0), default=0)
    d.set_defaults(func=cmd_disasm)

    m = sub.add_parser("map", help="print the address map")
    m.add_argument("--config")
    m.set_defaults(func=cmd_map)

    lt = sub.add_parser("latency", help="itemize the feedback latency of one shot")
    lt.add_argument("--config")
    lt.add_argument("--program", default="builtin:fast_reset_branchless")
    lt.add_argument("--seed", type=int)
    lt.add_argument("--shot", type=int, default=0)
    lt.set_defaults(func=cmd_latency)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except configmod.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AsmError as e:
        print(f"assembly error:\n{e}", file=sys.stderr)
        return EXIT_ASM
    except (FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NOINPUT
    except LatencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NOINPUT


if __name__ == "__main__":
    sys.exit(main())
