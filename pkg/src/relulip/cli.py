"""Command-line front end.

Exit codes: 0 success, 1 internal failure or failed verification,
2 usage or configuration error, 3 incompatible configuration.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core import RngStream, parse_p, write_csv, write_json
from .core.parallel import set_default_threads
from .errors import ResourceLimitError, UnsupportedConfiguration
from .experiments import CHECK_NAMES, CSV_HEADER, DEFAULT_SEED, SWEEPS, SweepConfig, run_verification_suite
from .lipschitz import (
    LipEstimate,
    exact_lip_1d,
    exact_lip_circle,
    layerwise_upper_bound,
    pointwise_grad_norm,
    sample_points,
    sampled_sup_grad_norm,
)
from .network import BiasSpec, NetworkParams, sample_network
from .tessellation import flip_fraction_vs_angle_experiment, local_flip_max_experiment, write_flip_table

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INCOMPATIBLE = 0, 1, 2, 3
METHODS = ("point", "sample", "upper", "exact1d", "circle")
# output locations are left out of the embedded invocation so reruns into
# another directory produce identical files
_OUTPUT_FLAGS = {"out", "out_dir", "config", "func", "verbose"}


class UsageError(Exception):
    """Bad input detected after argument parsing; exits with code 2."""


# -- argument types -------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be a nonnegative integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"seed must be a nonnegative integer, got {v}")
    return v


def _bias(text: str) -> str:
    try:
        spec = BiasSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if spec.kind == "fixed":
        raise argparse.ArgumentTypeError("bias must be zero, gaussian:SIGMA or uniform:SIGMA")
    return str(spec)


def _p(text: str) -> str:
    try:
        parse_p(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- helpers -------------------------------------------------------------------------------------


def _resolve_seed(args, config_seed=None) -> int:
    if args.seed is not None:
        return args.seed
    if config_seed is not None:
        return int(config_seed)
    # no seed given: draw one and record it in the output
    return secrets.randbits(63)


def _invocation(args, seed, config=None) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in _OUTPUT_FLAGS and k != "subcommand"}
    inv = {"program": "relulip", "version": __version__, "subcommand": args.subcommand, "flags": flags, "seed": seed}
    if config is not None:
        inv["config"] = config
    return inv


def _schema(name: str) -> dict:
    return json.loads(resources.files("relulip").joinpath("schemas", f"{name}.schema.json").read_text())


def load_config(path, schema_name: str) -> dict:
    """Read a JSON config and validate it, raising UsageError listing every offending field."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    validator = jsonschema.Draft202012Validator(_schema(schema_name))
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"  {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise UsageError(f"config {path} does not match the {schema_name} schema:\n" + "\n".join(lines))
    return data


def _load_network(path) -> NetworkParams:
    try:
        return NetworkParams.load(path)
    except FileNotFoundError:
        raise UsageError(f"network file not found: {path}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(path, doc) -> None:
    if path is not None:
        write_json(path, doc)
        print(f"wrote {path}")


# -- subcommands ---------------------------------------------------------------------------------


def cmd_sample(args) -> int:
    seed = _resolve_seed(args)
    net = sample_network(args.d, args.width, args.depth, args.bias, RngStream(seed, "network"))
    write_json(args.out, {**net.to_dict(), "invocation": _invocation(args, seed)})
    print(f"wrote {args.out} (seed {seed})")
    return EXIT_OK


def cmd_lip(args) -> int:
    net = _load_network(args.net)
    p = parse_p(args.p)
    seed = _resolve_seed(args)
    rng = RngStream(seed, "lip")
    if args.method == "point":
        if args.x is not None:
            x = np.array(args.x)
            if x.shape != (net.d,):
                raise UsageError(f"--x has {x.size} entries, the network expects {net.d}")
        else:
            x = sample_points(net.d, 1, rng.spawn("x"))[0]
        g = pointwise_grad_norm(net, x, p)
        est = LipEstimate(g.value, p, "lower", "point", {"points": 1}, rng.record(), tuple(map(float, x)))
    elif args.method == "sample":
        est = sampled_sup_grad_norm(
            net, p, args.samples, rng, hops=args.hops, ascent_starts=args.ascent_starts
        )
    elif args.method == "upper":
        est = layerwise_upper_bound(net, p)
    elif args.method == "exact1d":
        interval = None
        if args.interval is not None:
            if len(args.interval) != 2:
                raise UsageError("--interval takes two numbers a,b")
            interval = tuple(args.interval)
        est = exact_lip_1d(net, interval)
    else:
        est = exact_lip_circle(net, p)
    doc = {**est.to_dict(), "network": str(args.net), "invocation": _invocation(args, seed)}
    doc["invocation"]["flags"]["net"] = str(args.net)
    _emit(args.out, doc)
    print(f"{est.kind} {est.method} lip_{args.p} = {est.value!r}")
    return EXIT_OK


def cmd_tess(args) -> int:
    cfg = load_config(args.config, "tess")
    seed = _resolve_seed(args, cfg.get("seed"))
    inv = _invocation(args, seed, cfg)
    out = Path(args.out_dir)
    rng = RngStream(seed, "tess")
    comments = (f"invocation: {json.dumps(inv, sort_keys=True)}",)
    if cfg["experiment"] == "flip_fraction":
        rows = flip_fraction_vs_angle_experiment(cfg["n"], cfg["m"], cfg["angle_grid"], cfg["trials"], rng)
        write_flip_table(out / "tess.csv", rows, comments)
        write_json(out / "tess.json", {"experiment": "flip_fraction", "rows": [asdict(r) for r in rows], "invocation": inv})
    else:
        m = local_flip_max_experiment(cfg["n"], cfg["m"], cfg["eps"], cfg["pairs"], rng)
        row = (cfg["eps"], m, cfg["m"], cfg["pairs"])
        write_csv(out / "tess.csv", ("eps", "max_fraction", "m", "pairs"), [row], comments)
        write_json(out / "tess.json", {"experiment": "local_max", "max_fraction": m, "invocation": inv})
    print(f"wrote {out / 'tess.csv'} and {out / 'tess.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, "sweep")
    seed = _resolve_seed(args, cfg.get("seed"))
    try:
        sweep = SweepConfig.from_dict({**cfg, "seed": seed})
    except ValueError as exc:
        raise UsageError(f"invalid sweep config: {exc}") from None
    report = SWEEPS[sweep.experiment](sweep, args.threads)
    inv = _invocation(args, seed, cfg)
    out = Path(args.out_dir)
    write_csv(out / "sweep.csv", CSV_HEADER, report.csv_rows(), (f"invocation: {json.dumps(inv, sort_keys=True)}",))
    write_json(out / "sweep.json", {**report.to_dict(), "invocation": inv})
    for v in report.verdicts:
        print(f"[{'PASS' if v.passed else 'FAIL'}] {v.name}: {v.detail}")
    print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config, "verify") if args.config else {}
    seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_SEED))
    only = args.only or cfg.get("checks")
    if only:
        bad = sorted(set(only) - set(CHECK_NAMES))
        if bad:
            raise UsageError(f"unknown checks {bad}; choose from {', '.join(CHECK_NAMES)}")
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    manifest, timings = run_verification_suite(
        args.out_dir, seed, only, args.threads, cfg.get("network_file"), _invocation(args, seed, cfg), log
    )
    for e in manifest["checks"]:
        label = f"criterion {e['criterion']:>2}" if e["criterion"] is not None else "auxiliary   "
        extra = f" ({e['error']})" if e["error"] else ""
        print(f"[{'PASS' if e['passed'] else 'FAIL'}] {label} {e['name']} {timings[e['name']]:.1f} s{extra}")
    passed = sum(e["passed"] for e in manifest["checks"])
    print(f"{passed}/{len(manifest['checks'])} checks passed in {timings['total']:.1f} s; manifest in {args.out_dir}")
    return EXIT_OK if manifest["passed"] else EXIT_INTERNAL


# -- parser ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, help="master seed; drawn at random and recorded if omitted")
    common.add_argument("--threads", type=_positive_int, help="worker thread cap (default: all cores)")

    parser = argparse.ArgumentParser(prog="relulip", description="Lipschitz constants of random ReLU networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw a random network and save it as JSON")
    s.add_argument("--d", type=_positive_int, required=True, help="input dimension")
    s.add_argument("--width", type=_positive_int, required=True, help="hidden width N")
    s.add_argument("--depth", type=_positive_int, required=True, help="number of hidden layers L")
    s.add_argument("--bias", type=_bias, default="zero", help="zero | gaussian:SIGMA | uniform:SIGMA")
    s.add_argument("--out", type=Path, required=True, help="output network file")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("lip", parents=[common], help="estimate or bound the Lipschitz constant of a saved network")
    s.add_argument("--net", type=Path, required=True, help="network JSON file")
    s.add_argument("--p", type=_p, default="2", help="input norm exponent, a number >= 1 or inf")
    s.add_argument("--method", choices=METHODS, default="sample")
    s.add_argument("--samples", type=_positive_int, default=10_000, help="sample count for --method sample")
    s.add_argument("--hops", type=int, default=0, help="local perturbation rounds after sampling")
    s.add_argument("--ascent-starts", type=int, default=0, help="best samples refined by directional ascent")
    s.add_argument("--x", type=_floats, help="evaluation point for --method point, comma-separated")
    s.add_argument("--interval", type=_floats, help="a,b for --method exact1d, required for biased networks (write --interval=-inf,inf for negative a)")
    s.add_argument("--out", type=Path, help="write the estimate record here")
    s.set_defaults(func=cmd_lip)

    for name, func, text in (
        ("tess", cmd_tess, "run a hyperplane tessellation experiment"),
        ("sweep", cmd_sweep, "run a scaling sweep"),
    ):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--config", type=Path, required=True, help=f"JSON config (schema: {name}.schema.json)")
        s.add_argument("--out-dir", type=Path, required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("verify", parents=[common], help="run the pinned verification suite")
    s.add_argument("--config", type=Path, help="JSON config (schema: verify.schema.json)")
    s.add_argument("--out-dir", type=Path, default=Path("verify-out"))
    s.add_argument("--only", nargs="+", metavar="CHECK", help="run only these checks")
    s.add_argument("-v", "--verbose", action="store_true", help="progress and tracebacks on stderr")
    s.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    set_default_threads(args.threads)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"relulip {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnsupportedConfiguration, ResourceLimitError) as exc:
        print(f"relulip {args.subcommand}: incompatible configuration: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except Exception as exc:  # the stable contract maps everything else to 1
        print(f"relulip {args.subcommand}: internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
