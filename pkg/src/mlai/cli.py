"""``mlai`` command line: run scenarios, benchmark latency, compare ReID, extract features.

Exit codes: 0 success, 1 usage, 2 scenario invalid / missing / empty suite,
3 deadlock, 4 I/O or transport failure. Reports go to stdout, diagnostics
to stderr. ``MLAI_LOG`` (DEBUG, INFO, WARNING...) sets the log level.
"""
import argparse
import json
import logging
import os
import sys

from .errors import Deadlock, MalformedHeader, LengthMismatch, MlaiError, ScenarioInvalid, TransportClosed

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_DEADLOCK, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("mlai")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load(path, seed):
    from .sim import load_scenario

    sc = load_scenario(path)
    return sc if seed is None else sc.with_seed(seed)


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot create output directory {path}: {exc}") from None
    return path


def _write(path, text, mode="w"):
    try:
        with open(path, mode) as fh:
            fh.write(text)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write {path}: {exc}") from None


def cmd_run(args):
    from .sim import run_scenario

    if not args.scenario:
        raise _Fail(EXIT_USAGE, "run needs --scenario")
    sc = _load(args.scenario, args.seed)
    log.info("running %s (seed %d, %d frames)", sc.name, sc.seed, sc.duration)
    events = run_scenario(sc, mode=args.mode)
    out = _outdir(args.out)
    if args.format == "jsonl":
        _write(os.path.join(out, "events.jsonl"), events.to_jsonl())
    else:
        _write(os.path.join(out, "events.csv"), events.to_csv())
    _write(os.path.join(out, "metrics.csv"), events.to_csv())
    outcome = events.outcome
    print(f"scenario {sc.name}")
    print(f"frames {events.frames_run}")
    print(f"events {len(events.events)}")
    print(f"outcome {outcome.kind} {json.dumps(outcome.detail, sort_keys=True)}")
    print(f"phases {json.dumps({str(k): v for k, v in events.final_phases.items()}, sort_keys=True)}")
    return EXIT_OK


def cmd_bench(args):
    from .sim.benchmark import make_handover_scenario
    from .sim.latency import DETECT, TRACK, Injection, run_latency_bench

    if args.samples < 1:
        raise _Fail(EXIT_USAGE, f"--samples must be >= 1, got {args.samples}")
    if not args.threshold_s > 0:
        raise _Fail(EXIT_USAGE, "--threshold-s must be positive")
    for flag, k in (("--inject-detect", args.inject_detect), ("--inject-track", args.inject_track)):
        if not 0 <= k <= args.samples:
            raise _Fail(EXIT_USAGE, f"{flag} must lie in [0, --samples]")
    sc = _load(args.scenario, args.seed) if args.scenario else make_handover_scenario(args.seed or 0)
    plan = {DETECT: (args.inject_detect, args.inject_latency), TRACK: (args.inject_track, args.inject_latency)}
    try:
        collector = run_latency_bench(sc, args.samples, args.threshold_s, Injection(plan, args.seed or 0))
    except TransportClosed as exc:
        raise _Fail(EXIT_IO, f"transport failure: {exc}") from None
    print(collector.table())
    if args.out:
        out = _outdir(args.out)
        rows = ["Request,C_s,C_t,C_total,Apdex Score\n"] + [f"{k},{cs},{ct},{tot},{score!r}\n" for k, cs, ct, tot, score in collector.rows()]
        _write(os.path.join(out, "apdex.csv"), "".join(rows))
    return EXIT_OK


def cmd_compare_reid(args):
    from .sim.benchmark import compare_reid, load_suite

    path = args.scenario
    if not path:
        raise _Fail(EXIT_USAGE, "compare-reid needs --scenario (a suite directory or a scenario file)")
    if os.path.isdir(path):
        suite = load_suite(path)
    elif os.path.exists(path):
        suite = [_load(path, None)]
    else:
        raise _Fail(EXIT_SCENARIO, f"scenario suite not found: {path}")
    if args.seed is not None:
        suite = [sc.with_seed(args.seed) for sc in suite]
    if not suite:
        raise _Fail(EXIT_SCENARIO, f"no scenarios in {path}")
    report = compare_reid(suite)
    print(report.summary())
    if args.out:
        out = _outdir(args.out)
        _write(os.path.join(out, "compare_reid.json"), json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        lines = ["scenario,seed,expected,one_way,two_way\n"]
        for r in report.rows:
            lines.append(",".join("" if r[k] is None else str(r[k]) for k in ("scenario", "seed", "expected", "one_way", "two_way")) + "\n")
        _write(os.path.join(out, "compare_reid.csv"), "".join(lines))
    return EXIT_OK


def cmd_extract(args):
    from .features import extract_feature, pack_feature
    from .imaging import read_image

    try:
        frame = read_image(args.image)
    except FileNotFoundError:
        raise _Fail(EXIT_IO, f"image not found: {args.image}") from None
    except (OSError, MalformedHeader, LengthMismatch) as exc:
        raise _Fail(EXIT_IO, f"cannot read image {args.image}: {exc}") from None
    try:
        fv = extract_feature(frame)
    except MlaiError as exc:
        raise _Fail(EXIT_IO, f"cannot describe {args.image}: {exc}") from None
    dest = args.out or (os.path.splitext(args.image)[0] + ".feat")
    if os.path.isdir(dest):
        dest = os.path.join(dest, os.path.splitext(os.path.basename(args.image))[0] + ".feat")
    _write(dest, pack_feature(fv), "wb")
    print(f"dimension {fv.dimension}")
    print(f"config_id {fv.config_id}")
    print(f"written {dest}")
    return EXIT_OK


def cmd_inspect(args):
    from .features import unpack_feature
    from .imaging import MAGIC, decode_frame

    path = args.path
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read {path}: {exc}") from None
    if data[:4] == MAGIC:
        try:
            f = decode_frame(data)
        except (MalformedHeader, LengthMismatch) as exc:
            raise _Fail(EXIT_IO, f"{path}: {exc}") from None
        print(f"frame {f.width}x{f.height} channels {f.channels} model {f.color_model.name}")
        return EXIT_OK
    if path.endswith((".yaml", ".yml")):
        sc = _load(path, args.seed)
        print(f"scenario {sc.name} seed {sc.seed} frames {sc.duration} at {sc.frame_rate:g} Hz")
        for s in sc.sensors:
            print(f"sensor {s.id} {s.role} fov {list(s.fov)} geo {s.geo.latitude:.6f},{s.geo.longitude:.6f}")
        for t in sc.targets:
            mark = " tracked" if t.tracked else ""
            print(f"target {t.id} {t.label}{mark} waypoints {len(t.trajectory)}")
        print(f"expected_assistant {sc.expected_assistant}")
        return EXIT_OK
    try:
        fv, used = unpack_feature(data)
    except (ValueError, MlaiError) as exc:
        raise _Fail(EXIT_IO, f"{path}: not a frame, scenario or feature file ({exc})") from None
    if used != len(data):
        raise _Fail(EXIT_IO, f"{path}: {len(data) - used} trailing bytes after feature")
    print(f"feature dimension {fv.dimension} config_id {fv.config_id}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="mlai", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--format", choices=("csv", "jsonl"), default="jsonl", help="event log format")

    r = sub.add_parser("run", help="run one scenario and write its event log")
    common(r)
    r.add_argument("--scenario", required=True, help="scenario YAML file")
    r.add_argument("--mode", choices=("deterministic", "threads"), default="deterministic")
    r.set_defaults(func=cmd_run, out="out")

    b = sub.add_parser("bench", help="Apdex of detect/track round trips")
    common(b)
    b.add_argument("--scenario", default=None, help="scenario to render (default: a built-in one)")
    b.add_argument("--samples", type=int, default=100, help="requests per kind (default 100)")
    b.add_argument("--threshold-s", type=float, default=0.5, help="Apdex threshold T in seconds")
    b.add_argument("--inject-detect", type=int, default=0, help="detect requests to delay")
    b.add_argument("--inject-track", type=int, default=0, help="track requests to delay")
    b.add_argument("--inject-latency", type=float, default=1.0, help="delay added to injected requests (s)")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("compare-reid", help="one-way vs two-way handover accuracy over a suite")
    common(c)
    c.add_argument("--scenario", required=True, help="suite directory (or a single scenario file)")
    c.set_defaults(func=cmd_compare_reid)

    e = sub.add_parser("extract", help="describe an MLF1 / PPM / PGM image")
    e.add_argument("image")
    e.add_argument("--out", default=None, help="feature file (default: image name with .feat)")
    e.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    e.set_defaults(func=cmd_extract)

    i = sub.add_parser("inspect", help="summarise a frame, scenario or feature file")
    i.add_argument("path")
    i.add_argument("--seed", type=int, default=None)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    level = os.environ.get("MLAI_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"mlai: {exc}", file=sys.stderr)
        return exc.code
    except ScenarioInvalid as exc:
        print(f"mlai: scenario invalid: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except Deadlock as exc:
        print(f"mlai: deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    except (TransportClosed, OSError) as exc:
        print(f"mlai: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
