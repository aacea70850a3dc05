"""Command-line experiment runner.

    ldisac run --scenario table1_desk --experiment kld_snr \
        --snr-db 0,10,20,30,40 --weights "0.3,0.7,0.4;0.7,0.3,0.4" \
        --trials 50 --seed 1 --out results/

Exit codes: 0 success, 2 every sweep point infeasible, 1 error.
"""

from __future__ import annotations

import argparse
import sys

from .harness import EXPERIMENT_KINDS, ExperimentSpec, run
from .txdesign import TradeoffWeights


def _parse_weights(text: str) -> tuple[TradeoffWeights, ...]:
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [float(p) for p in chunk.split(",")]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(
                f"weights triple must be 'w_c,w_ss,w_s' (got {chunk!r})"
            )
        out.append(TradeoffWeights(*parts))
    if not out:
        raise argparse.ArgumentTypeError("empty weights list")
    return tuple(out)


def _parse_snr(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldisac", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one experiment kind")
    runp.add_argument("--scenario", default=None,
                      help="scenario file path or preset name "
                           "(default: table1_desk, or table1 with --full-scale)")
    runp.add_argument("--experiment", required=True, choices=EXPERIMENT_KINDS)
    runp.add_argument("--snr-db", type=_parse_snr, default=(),
                      help="comma-separated SNR list in dB")
    runp.add_argument("--weights", type=_parse_weights, default=(),
                      help="semicolon-separated 'w_c,w_ss,w_s' triples")
    runp.add_argument("--trials", type=int, default=50)
    runp.add_argument("--seed", type=int, default=1)
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--full-scale", action="store_true",
                      help="default to the full-size scenario preset")
    runp.add_argument("--smoothing", choices=("on", "off"), default="on",
                      help="eavesdropper spatial smoothing (default on)")
    runp.add_argument("--workers", type=int, default=1,
                      help="concurrent trials (results are identical for any value)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    scenario = args.scenario or ("table1" if args.full_scale else "table1_desk")
    spec = ExperimentSpec(
        scenario=scenario,
        kind=args.experiment,
        out_dir=args.out,
        snr_db=tuple(args.snr_db),
        weights=tuple(args.weights),
        trials=args.trials,
        seed=args.seed,
        smoothing=args.smoothing == "on",
        workers=args.workers,
    )
    try:
        result = run(spec)
    except Exception as exc:  # surface a one-line error, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in result.paths:
        print(p)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
