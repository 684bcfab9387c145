"""Command-line front end for the experiment harness.

Each subcommand prints a single JSON line on success and a JSON error
object on stderr on failure (exit status 1; argparse usage errors exit 2).
"""
import argparse
import json
import sys

from . import harness
from .errors import ConfigError, CrqpufError

_COMMANDS = (
    ("qgen", "draw a device fingerprint and write fingerprint.json"),
    ("enroll", "enroll the persisted device, write crpdb.json"),
    ("learn-1d", "train per-qubit 1D models, write model_1d.json"),
    ("learn-2d", "train per-qubit 2D models, write model_2d.json"),
    ("attack-1d", "full 1D pipeline: enroll, train, forge, authenticate"),
    ("attack-2d", "full chain pipeline with the configured 2D chain"),
    ("fig4", "dump measured response curves and fits to CSV"),
    ("mitm", "replay the protocol with forged responses from saved artifacts"),
    ("baselines", "honest and impostor acceptance rates, no attack"),
)

# --grid sets the 1D training grid L here, the 2D grid G there, both elsewhere
_GRID_1D = {"fig4", "learn-1d", "attack-1d"}
_GRID_2D = {"learn-2d", "attack-2d"}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="crqpuf",
        description="CR-QPUF laboratory: simulate, enroll, attack, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in _COMMANDS:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=None, help="root seed (root_seed)")
        sp.add_argument("--n", type=int, default=None, help="number of qubits")
        sp.add_argument("--shots", type=int, default=None, help="shots per query")
        sp.add_argument("--grid", type=int, default=None,
                        help="training grid size (L for 1D commands, G for 2D)")
        sp.add_argument("--holdout", type=int, default=None,
                        help="number of enrolled challenges K")
        sp.add_argument("--reps", type=int, default=None,
                        help="signatures per challenge m")
        sp.add_argument("--degree", type=int, default=None, help="polynomial degree")
        sp.add_argument("--k", type=float, default=None, help="sigma multiplier")
        sp.add_argument("--two-sided", dest="two_sided", action="store_true",
                        default=None, help="use the two-sided acceptance window")
        sp.add_argument("--out", default=".", help="artifact directory")
        sp.add_argument("--config", default=None,
                        help="JSON config file mirroring ExperimentConfig")
    return parser


def _config_from_args(args):
    obj = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}") from None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e.msg}") from None
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
    for flag, key in (("seed", "root_seed"), ("n", "n"), ("shots", "shots"),
                      ("holdout", "holdout"), ("reps", "reps"),
                      ("degree", "degree"), ("k", "k"), ("two_sided", "two_sided")):
        val = getattr(args, flag)
        if val is not None:
            obj[key] = val
    if args.grid is not None:
        if args.command in _GRID_1D:
            obj["L"] = args.grid
        elif args.command in _GRID_2D:
            obj["grid"] = args.grid
        else:
            obj["L"] = args.grid
            obj["grid"] = args.grid
    return harness.config_from_obj(obj)


def _run(command, cfg, out_dir):
    base = {"command": command, "out": out_dir}
    if command == "qgen":
        fp = harness.run_qgen(cfg, out_dir)
        return {**base, "written": [harness.FINGERPRINT_FILE], "device_id": fp.device_id}
    if command == "enroll":
        db = harness.run_enroll(cfg, out_dir)
        return {**base, "written": [harness.CRPDB_FILE], "records": len(db.records)}
    if command == "learn-1d":
        _, fit = harness.run_learn_1d(cfg, out_dir)
        return {**base, "written": [harness.MODEL_1D_FILE], "fit": fit}
    if command == "learn-2d":
        _, fit = harness.run_learn_2d(cfg, out_dir)
        return {**base, "written": [harness.MODEL_2D_FILE], "fit": fit}
    if command == "attack-1d":
        report = harness.run_attack_1d(cfg, out_dir)
    elif command == "attack-2d":
        report = harness.run_attack_2d(cfg, out_dir)
    elif command == "fig4":
        report = harness.run_fig4(cfg, out_dir)
    elif command == "mitm":
        report = harness.run_mitm_demo(cfg, out_dir)
    else:
        report = harness.run_baselines(cfg, out_dir)
    result = {**base, "written": list(report.artifacts)}
    if report.rates:
        result["rates"] = report.rates
    if report.fit is not None:
        result["fit"] = report.fit
    return result


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        result = _run(args.command, cfg, args.out)
    except CrqpufError as e:
        err = {"type": type(e).__name__, "message": str(e)}
        stage = getattr(e, "stage", None)
        if stage is not None:
            err["stage"] = stage
        position = getattr(e, "position", None)
        if position is not None:
            err["position"] = position
        print(json.dumps({"error": err}), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
