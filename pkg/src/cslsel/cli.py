"""``cslsel`` command line.

Every subcommand computes all of its outputs in memory first and only then
writes them (plus the optional ``--manifest``) in one all-or-nothing step, so a
failing run leaves no files behind.

Exit codes: 0 success, 1 replay check mismatch, 2 bad usage or bad input,
3 I/O failure.
"""
import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .arraystore import IGNORE_INDEX, encode_array, read_array, validate_labels, write_files_atomic
from .evaluation import compare, format_report, format_table, score
from .losses import NORMS, loss_breakdown
from .perturbation import apply_mask, make_mask
from .separation import SeparationConfig, select, threshold_baseline
from .synthgen import SynthConfig, generate

MANIFEST_SCHEMA = "cslsel.run-manifest"
MANIFEST_VERSION = 1

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class Run:
    """What a subcommand produced, before anything touches the disk."""

    def __init__(self):
        self.files = []  # (name, path, bytes)
        self.inputs = {}
        self.stdout = ""
        self.warnings = []
        self.seed = None

    def add_array(self, name, path, arr):
        self.files.append((name, path, encode_array(arr)))

    def add_text(self, name, path, text):
        self.files.append((name, path, text.encode("utf-8")))

    def read(self, name, path):
        self.inputs[name] = path
        return read_array(path)


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_seed(seed):
    if seed is not None:
        return int(seed)
    env = os.environ.get("CSL_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"CSL_SEED must be an integer, got {env!r}") from None


# --- subcommands -------------------------------------------------------------

def _separation_config(args):
    return SeparationConfig(
        alpha=args.alpha,
        hard_rule=args.hard_rule,
        metric=args.metric,
        normalize=args.normalize,
        class_specific=args.class_specific,
        min_class_pixels=args.min_class_pixels,
    )


def cmd_select(args, run):
    probs = run.read("probs", args.probs)
    if probs.ndim != 3:
        raise ValueError(f"--probs must be K x H x W, got shape {probs.shape}")
    out = select(probs, _separation_config(args))
    run.add_array("weights", args.out_weights, out.weights.astype(np.float64))
    run.add_array("labels", args.out_labels, out.labels.astype(np.int32))
    if out.fallback_used:
        detail = "; ".join(out.notes) if out.notes else "degenerate feature matrix"
        run.warnings.append(f"fallback selection used ({detail})")


def cmd_mask(args, run):
    weights = run.read("weights", args.weights)
    image = run.read("image", args.image)
    if weights.ndim != 2:
        raise ValueError(f"--weights must be H x W, got shape {weights.shape}")
    if image.ndim != 3 or image.shape[1:] != weights.shape:
        raise ValueError(f"--image shape {image.shape} does not match weights {weights.shape} (want C x H x W)")
    run.seed = resolve_seed(args.seed)
    mask = make_mask(np.asarray(weights) == 1.0, args.patch_size, args.ratio, run.seed)
    run.add_array("image", args.out_image, apply_mask(image, mask))
    run.add_array("mask", args.out_mask, mask.zero_out.astype(np.uint8))


def _emit(run, args, text):
    run.stdout = text
    if args.out:
        run.add_text("report", args.out, text + "\n")


def cmd_eval(args, run):
    weights = run.read("weights", args.weights)
    pred = run.read("pred_labels", args.pred_labels)
    gt = run.read("gt", args.gt)
    report = score(weights, pred, gt, args.ignore_index)
    _emit(run, args, report.to_json(indent=2) if args.format == "json" else format_report(report))


def parse_method(spec):
    parts = spec.split(":")
    if len(parts) not in (2, 3) or not parts[0]:
        raise ValueError(f"--method must be name:kind[:param], got {spec!r}")
    name, kind = parts[0], parts[1].lower()
    if kind not in ("csl", "threshold"):
        raise ValueError(f"unknown method kind {kind!r} (csl or threshold)")
    param = None
    if len(parts) == 3:
        try:
            param = float(parts[2])
        except ValueError:
            raise ValueError(f"method parameter must be a number, got {parts[2]!r}") from None
    return name, kind, param


def cmd_compare(args, run):
    probs = run.read("probs", args.probs)
    gt = run.read("gt", args.gt)
    if probs.ndim != 3:
        raise ValueError(f"--probs must be K x H x W, got shape {probs.shape}")
    validate_labels(gt, probs.shape[0], args.ignore_index)
    base = _separation_config(args)
    methods = []
    pred = None
    for spec in args.method:
        name, kind, param = parse_method(spec)
        if kind == "threshold":
            sel = threshold_baseline(probs, 0.95 if param is None else param)
        else:
            cfg = base if param is None else SeparationConfig(**{**base.__dict__, "alpha": param})
            sel = select(probs, cfg)
        pred = sel.labels
        methods.append((name, sel))
    table = compare(methods, pred, gt, args.ignore_index)
    _emit(run, args, json.dumps(table, indent=2, sort_keys=True) if args.format == "json" else format_table(table))


def cmd_synth(args, run):
    run.seed = resolve_seed(args.seed)
    cfg = SynthConfig(
        height=args.height,
        width=args.width,
        classes=args.classes,
        error_rate=args.error_rate,
        temperature=args.temperature,
        confusion_mass=args.confusion_mass,
        region_seeds=args.region_seeds,
        seed=run.seed,
    )
    probs, gt, correct = generate(cfg)
    run.add_array("probs", args.out_probs, probs.astype(args.dtype))
    run.add_array("gt", args.out_gt, gt.astype(np.int32))
    if args.out_correct:
        run.add_array("correct", args.out_correct, correct.astype(np.uint8))


def cmd_loss(args, run):
    probs = run.read("probs", args.probs)
    target = run.read("target", args.target)
    weights = run.read("weights", args.weights)
    masked = run.read("probs_masked", args.probs_masked) if args.probs_masked else None
    lb = loss_breakdown(
        target, weights, probs, pred_masked=masked,
        lambda1=args.lambda1, lambda2=args.lambda2, norm=args.norm, ignore_index=args.ignore_index,
    )
    _emit(run, args, json.dumps(lb.as_dict(), sort_keys=True) if args.json else repr(lb.l_u))


# --- manifest / replay ---------------------------------------------------------

def canonical_argv(parser, args):
    """Fully resolved argument vector for ``args`` (no ``--manifest``)."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    argv = [args.command]
    for action in sub._actions:
        if not action.option_strings or action.dest in ("help", "manifest"):
            continue
        value = getattr(args, action.dest, None)
        flag = action.option_strings[-1]
        if action.dest == "seed":
            value = resolve_seed(value)
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif isinstance(action, argparse._AppendAction):
            for v in value or []:
                argv += [flag, str(v)]
        elif value is not None:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    return argv


def build_manifest(parser, args, run, wall_time):
    params = {k: v for k, v in vars(args).items() if k not in ("handler", "manifest")}
    if "seed" in params:
        params["seed"] = run.seed
    return {
        "schema": MANIFEST_SCHEMA,
        "schema_version": MANIFEST_VERSION,
        "tool": "cslsel",
        "tool_version": __version__,
        "subcommand": args.command,
        "argv": canonical_argv(parser, args),
        "params": params,
        "seed": run.seed,
        "inputs": {k: {"path": p, "sha256": _file_sha256(p)} for k, p in run.inputs.items()},
        "outputs": {name: {"path": path, "sha256": _sha256(data)} for name, path, data in run.files},
        "stdout_sha256": _sha256(run.stdout.encode("utf-8")) if run.stdout else None,
        "wall_time_s": wall_time,
    }


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            m = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if m.get("schema") != MANIFEST_SCHEMA or m.get("schema_version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: not a v{MANIFEST_VERSION} {MANIFEST_SCHEMA} manifest")
    return m


def cmd_replay(args):
    m = load_manifest(args.manifest)
    code = main(list(m["argv"]))
    if code != EXIT_OK or not args.check:
        return code
    bad = [
        name for name, rec in m["outputs"].items()
        if not os.path.exists(rec["path"]) or _file_sha256(rec["path"]) != rec["sha256"]
    ]
    if bad:
        print(f"replay mismatch: {', '.join(sorted(bad))}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def _add_selection_flags(p):
    p.add_argument("--alpha", type=float, default=8.0, help="Gaussian smoothing parameter (default 8)")
    p.add_argument("--metric", default="residual-dispersion",
                   choices=["residual-dispersion", "entropy", "residual-entropy", "margin"])
    p.add_argument("--hard-rule", default="and", choices=["and", "or"],
                   help="weight-1 rule: above the reliable mean on both features (and) or either (or)")
    p.add_argument("--normalize", action="store_true", help="z-score each feature row")
    p.add_argument("--class-specific", action="store_true", help="separate each predicted class on its own")
    p.add_argument("--min-class-pixels", type=int, default=8)


def build_parser():
    parser = argparse.ArgumentParser(prog="cslsel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="pseudo-label weights from a K x H x W probability map")
    p.add_argument("--probs", required=True)
    _add_selection_flags(p)
    p.add_argument("--out-weights", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("mask", help="trusted mask perturbation of an image")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--patch-size", type=int, default=32)
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--seed", type=int, help="RNG seed (default: $CSL_SEED, else 0)")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_mask)

    p = sub.add_parser("eval", help="score a weight map against ground truth")
    p.add_argument("--weights", required=True)
    p.add_argument("--pred-labels", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ignore-index", type=int, default=IGNORE_INDEX)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("compare", help="compare selection methods on one probability map")
    p.add_argument("--probs", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--method", action="append", required=True, metavar="NAME:KIND[:PARAM]",
                   help="kind csl (param = alpha) or threshold (param = tau, default 0.95); repeatable")
    _add_selection_flags(p)
    p.add_argument("--ignore-index", type=int, default=IGNORE_INDEX)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("synth", help="synthetic overconfident predictions with ground truth")
    d = SynthConfig()
    p.add_argument("--height", type=int, default=d.height)
    p.add_argument("--width", type=int, default=d.width)
    p.add_argument("--classes", type=int, default=d.classes)
    p.add_argument("--error-rate", type=float, default=d.error_rate)
    p.add_argument("--temperature", type=float, default=d.temperature)
    p.add_argument("--confusion-mass", type=float, default=d.confusion_mass)
    p.add_argument("--region-seeds", type=int, default=d.region_seeds)
    p.add_argument("--seed", type=int, help="RNG seed (default: $CSL_SEED, else 0)")
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")
    p.add_argument("--out-probs", required=True)
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-correct")
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("loss", help="combined unsupervised loss for one image")
    p.add_argument("--probs", required=True, help="predictions on the strongly augmented image")
    p.add_argument("--probs-masked", help="predictions on the perturbed image (default: reuse --probs)")
    p.add_argument("--target", required=True, help="pseudo-label map")
    p.add_argument("--weights", required=True)
    p.add_argument("--lambda1", type=float, default=0.5)
    p.add_argument("--lambda2", type=float, default=0.5)
    p.add_argument("--norm", choices=list(NORMS), default="all_pixels")
    p.add_argument("--ignore-index", type=int, default=IGNORE_INDEX)
    p.add_argument("--json", action="store_true", help="print every loss term")
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_loss)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--check", action="store_true", help="exit 1 unless outputs match the recorded hashes")
    p.set_defaults(handler=None)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "replay":
            return cmd_replay(args)
        run = Run()
        t0 = time.perf_counter()
        args.handler(args, run)
        items = [(path, data) for _, path, data in run.files]
        if args.manifest:
            manifest = build_manifest(parser, args, run, time.perf_counter() - t0)
            items.append((args.manifest, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()))
        paths = [os.path.abspath(path) for path, _ in items]
        if len(set(paths)) != len(paths):
            raise ValueError("two outputs (or an output and --manifest) share a path")
        write_files_atomic(items)
    except OSError as exc:
        print(f"cslsel: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ZeroDivisionError) as exc:
        print(f"cslsel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for w in run.warnings:
        print(f"cslsel: warning: {w}", file=sys.stderr)
    if run.stdout:
        print(run.stdout)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
