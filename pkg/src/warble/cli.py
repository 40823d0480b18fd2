"""Command line front end.

    engine run        render a frame sequence to WAV + control log
    engine synth      render the voice source alone at fixed controls
    engine scan       classify the regime over a pressure x tension grid
    engine serve      run the WebSocket service for the browser panel
    engine calibrate  fit feature ranges from a frame sequence

All subcommands exit 0 on success, 2 on any engine error (bad config,
unreadable frames, failed initialization, port in use).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import __version__
from .config import load_config, save_config
from .errors import EngineError, TrackingLost
from .frameio import load_frames
from .mapping import calibrate_capture
from .offline import run_offline, write_control_log
from .server import serve_blocking
from .syrinx import OPERATING_PRESSURE, Synth, SyrinxControls, stability_scan
from .vision import analyze_frame, initialize
from .wavio import write_wav


def _click_arg(text: str) -> tuple:
    try:
        xs, ys = text.split(",")
        return (int(xs), int(ys))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected X,Y integer pair, got {text!r}")


def _grid_arg(text: str) -> np.ndarray:
    """a:b:n -> n evenly spaced values from a to b inclusive."""
    try:
        a_s, b_s, n_s = text.split(":")
        a, b, n = float(a_s), float(b_s), int(n_s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected START:STOP:COUNT, got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("grid needs at least one point")
    return np.linspace(a, b, n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engine",
        description="Mouth-driven birdsong instrument engine.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="render frames offline to WAV and CSV")
    p.add_argument("--frames", required=True,
                   help="directory of PPM/PNG frames, or a packed raw file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-wav", required=True)
    p.add_argument("--out-controls", required=True)
    p.add_argument("--click", type=_click_arg, default=None, metavar="X,Y",
                   help="init gesture position; default is the fixed "
                        "top-central window")
    p.add_argument("--fps", type=float, default=None,
                   help="override the config frame rate")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("synth",
                       help="render the voice source alone, fixed controls")
    p.add_argument("--config", required=True)
    p.add_argument("--duration", type=float, required=True, metavar="SEC")
    p.add_argument("--out-wav", required=True)
    p.add_argument("--pressure", type=float, default=OPERATING_PRESSURE,
                   help="lung pressure in Pa (default: the documented "
                        "operating point)")
    p.add_argument("--tension", type=float, default=1.0,
                   help="membrane tension, both valves (default 1.0)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("scan", help="regime map over a control grid")
    p.add_argument("--config", required=True)
    p.add_argument("--pressures", type=_grid_arg, required=True,
                   metavar="A:B:N")
    p.add_argument("--tensions", type=_grid_arg, required=True,
                   metavar="A:B:N")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--seconds", type=float, default=1.0,
                   help="render time per cell (default 1.0)")
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("serve", help="WebSocket service for the UI panel")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("calibrate",
                       help="fit feature ranges from a frame sequence")
    p.add_argument("--frames", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True,
                   help="path for the updated config file")
    p.add_argument("--click", type=_click_arg, default=None, metavar="X,Y")
    p.set_defaults(func=_cmd_calibrate)

    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.fps is not None:
        if not args.fps > 0:
            raise EngineError(f"fps must be positive, got {args.fps}")
        cfg = dataclasses.replace(cfg, fps=args.fps)
    frames = load_frames(args.frames, fps=cfg.fps)
    result = run_offline(cfg, frames, init_click=args.click)
    write_wav(result.samples, cfg.syrinx.sample_rate, args.out_wav)
    write_control_log(result.rows, args.out_controls)
    for event in result.events:
        print(event, file=sys.stderr)
    print(f"rendered {len(result.rows)} frames -> "
          f"{len(result.samples)} samples at "
          f"{cfg.syrinx.sample_rate:g} Hz")
    print(f"wrote {args.out_wav} and {args.out_controls}")
    return 0


def _cmd_synth(args) -> int:
    cfg = load_config(args.config)
    if not args.duration > 0:
        raise EngineError(f"duration must be positive, got {args.duration}")
    n = int(round(args.duration * cfg.syrinx.sample_rate))
    controls = SyrinxControls(p_lung=args.pressure,
                              tension_left=args.tension,
                              tension_right=args.tension)
    synth = Synth(cfg.syrinx, oversample=cfg.oversample)
    samples = synth.process_block(n, controls)
    write_wav(samples, cfg.syrinx.sample_rate, args.out_wav)
    peak = float(np.max(np.abs(samples))) if n else 0.0
    print(f"wrote {args.out_wav}: {n} samples, peak {peak:.4f}")
    if synth.blowup_events:
        print(f"{len(synth.blowup_events)} blowup event(s); "
              "output was muted briefly", file=sys.stderr)
    return 0


def _cmd_scan(args) -> int:
    cfg = load_config(args.config)
    if not args.seconds > 0:
        raise EngineError(f"seconds must be positive, got {args.seconds}")
    # short renders keep at least half the cell for classification
    discard = min(0.5, args.seconds / 2)
    labels, flags = stability_scan(cfg.syrinx, args.pressures, args.tensions,
                                   seconds=args.seconds, discard=discard)
    lines = ["pressure,tension,regime,blowup"]
    i = 0
    for pres in args.pressures:
        for ten in args.tensions:
            lines.append(f"{float(pres):g},{float(ten):g},"
                         f"{labels[i]},{int(flags[i])}")
            i += 1
    with open(args.out_csv, "w") as f:
        f.write("\n".join(lines) + "\n")
    n_blow = sum(flags)
    print(f"wrote {args.out_csv}: {len(labels)} cells, "
          f"{n_blow} flagged unstable")
    return 0


def _cmd_serve(args) -> int:
    cfg = load_config(args.config)
    try:
        serve_blocking(cfg, port=args.port, host=args.host)
    except KeyboardInterrupt:
        print("\nstopped")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    frames = load_frames(args.frames, fps=cfg.fps)
    state = initialize(frames[0], click=args.click, params=cfg.vision)
    captured = []
    skipped = 0
    for frame in frames:
        try:
            state, feats, _mask, _region = analyze_frame(
                frame, state, cfg.thresholds, cfg.vision)
        except TrackingLost:
            skipped += 1
            try:
                state = initialize(frame, click=args.click,
                                   params=cfg.vision)
            except EngineError:
                continue
            continue
        captured.append(feats.as_dict())
    cal = calibrate_capture(captured)
    out = dataclasses.replace(cfg, calibration=cal)
    save_config(out, args.out)
    print(f"calibrated from {len(captured)} tracked frames "
          f"({skipped} skipped)")
    for name in sorted(cal.ranges):
        lo, hi = cal.ranges[name]
        print(f"  {name}: [{lo:.3f}, {hi:.3f}]")
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EngineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
