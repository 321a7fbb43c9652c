"""``oil-tune`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness, keyrate
from ._validation import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CHECK = 4


def build_parser():
    parser = argparse.ArgumentParser(prog="oil-tune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "tune-coherence": "GA campaign on the phase-coherence fitness (5 controls)",
        "tune-qber": "GA campaign on the QBER fitness (6 controls)",
        "sweep": "expected QBER over detuning x injection ratio",
        "histogram": "random-phase interference intensity histogram",
        "keyrate": "decoy-state key rate from a DecoyInputs JSON (or a simulated acquisition)",
        "calibrate": "regenerate the plant optimum fixture",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="JSON config, or any output file of a previous run")
        p.add_argument("--seed", type=int, help="campaign seed (trial k uses seed + k)")
        p.add_argument("--trials", type=int, help="number of GA trials")
        p.add_argument("--out", help="output directory")
        p.add_argument("--noiseless", action="store_true", default=None, help="use expected counts")
        p.add_argument("--jobs", type=int, help="worker processes for trials")
        p.add_argument("--check", action="store_true", help="exit 4 if acceptance thresholds are missed")
        p.add_argument("-q", "--quiet", action="store_true")
    return parser


def _overrides(args):
    return {"seed": args.seed, "trials": args.trials, "output_dir": args.out, "noiseless": args.noiseless,
            "jobs": args.jobs}


def _run(args, say):
    file_data = harness.load_json(args.config) if args.config else None
    inputs = None
    if args.command == "keyrate" and file_data is not None and "config" not in file_data and "experiment" not in file_data:
        # a bare DecoyInputs document
        inputs = keyrate.DecoyInputs.from_dict(file_data)
        file_data = None
    elif args.command == "keyrate" and file_data is not None and "inputs" in file_data:
        # a previous keyrate output: reuse its inputs as well as its config
        inputs = keyrate.DecoyInputs.from_dict(file_data["inputs"])
    config = harness.resolve_config(args.command, file_data, _overrides(args))

    if args.command in ("tune-coherence", "tune-qber"):
        result = harness.run_campaign(config, progress=say)
        return harness.check_campaign(result)
    if args.command == "sweep":
        return harness.run_sweep(config).check()
    if args.command == "histogram":
        return harness.run_histogram(config).check()
    if args.command == "keyrate":
        result, _ = harness.run_keyrate(config, inputs)
        print(json.dumps(harness._jsonable(result.to_dict()), indent=2, sort_keys=True))
        return (result.rate > 0, f"rate {result.rate:.6g} bits per cycle")
    fixture = harness.run_calibrate(config)
    return True, f"optimum QBER {fixture['qber']:.5f}, V_coherent {fixture['v_coherent']:.4f}"


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    say = (lambda msg: None) if args.quiet else (lambda msg: print(msg, flush=True))
    try:
        passed, message = _run(args, say)
    except ConfigurationError as exc:
        fields = ", ".join(exc.fields) if exc.fields else "-"
        print(f"configuration error: {exc} (fields: {fields})", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    say(f"{args.command}: {message}")
    if args.check and not passed:
        print(f"check failed: {message}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
