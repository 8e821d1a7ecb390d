"""Command-line interface.

Exit codes: 0 on a completed run whatever the decision, 2 on usage errors,
3 on data errors (unreadable or malformed CSV/JSON, dimension mismatches).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import secrets
import sys

import numpy as np

from kequiv.csvio import DataError, format_float, read_samples
from kequiv.equivalence import (
    TestConfig,
    e_ksd_boot,
    e_ksd_normal,
    e_mmd_boot,
    e_mmd_normal,
    select_margin_ksd,
    select_margin_mmd,
)
from kequiv.experiments import (
    ExperimentPlan,
    population_discrepancy_mc,
    run_rejection_curve,
)
from kequiv.kernels import KernelSpec, median_heuristic
from kequiv.ksd import SteinContext
from kequiv.mmd import MmdContext
from kequiv.models import draw, load_model

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _probability(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _positive(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg(text):
    v = float(text)
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _count(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _seed(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _common(p, need_theta=True, variant=True):
    if need_theta:
        p.add_argument("--theta", type=_positive, required=True, help="equivalence margin")
    p.add_argument("--alpha", type=_probability, required=True, help="test level")
    if variant:
        p.add_argument("--variant", choices=("normal", "boot"), required=True)
    p.add_argument("--B", type=_count, default=500, help="bootstrap replicates (default 500)")
    p.add_argument("--seed", type=_seed, help="master seed; drawn and reported on stderr if omitted")
    p.add_argument("--bandwidth-sq", type=_positive, help="kernel bandwidth; median heuristic if omitted")
    _output(p)


def _output(p):
    p.add_argument("--out", help="write here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=_count, default=os.cpu_count() or 1,
                   help="worker threads for experiment replications")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kequiv", description="Kernel equivalence tests (KSD and MMD).")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ksd-test", help="one-sample KSD equivalence test")
    p.add_argument("--model", required=True, help="JSON score model")
    p.add_argument("--data", required=True, help="CSV sample")
    _common(p)

    p = sub.add_parser("mmd-test", help="two-sample MMD equivalence test")
    p.add_argument("--data-x", required=True)
    p.add_argument("--data-y", required=True)
    _common(p)

    p = sub.add_parser("margin", help="power-driven margin selection")
    p.add_argument("--kind", choices=("ksd", "mmd"), required=True)
    p.add_argument("--model", help="JSON score model (ksd)")
    p.add_argument("--data", help="CSV sample (ksd)")
    p.add_argument("--data-x", help="CSV sample X (mmd)")
    p.add_argument("--data-y", help="CSV sample Y (mmd)")
    p.add_argument("--theta-prime", type=_nonneg, required=True)
    p.add_argument("--beta", type=_probability, required=True, help="target type-II error")
    _common(p, need_theta=False, variant=False)

    p = sub.add_parser("experiment", help="run a rejection-rate experiment plan")
    p.add_argument("--plan", required=True, help="JSON experiment plan")
    _output(p)

    p = sub.add_parser("oracle", help="Monte-Carlo population KSD or MMD")
    p.add_argument("--kind", choices=("ksd", "mmd"), required=True)
    p.add_argument("--model", help="JSON model P (ksd score; mmd second sample)")
    p.add_argument("--sample-from", required=True, help="JSON model Q to sample from")
    p.add_argument("--mc-size", type=int, default=200_000)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--bandwidth-sq", type=_positive)
    _output(p)
    return parser


def _resolve_seed(args, err):
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"kequiv: using seed {args.seed}", file=err)
    return args.seed


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read model ({exc.strerror})", path) from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid model document ({exc})", path) from exc


def _ksd_ctx(model, X, bandwidth_sq):
    if X.shape[1] != model.dim:
        raise DataError(f"data has {X.shape[1]} columns but the model has dimension {model.dim}")
    if bandwidth_sq is None:
        return SteinContext.with_median_heuristic(model, X)
    return SteinContext(KernelSpec.imq(bandwidth_sq), model, X)


def _mmd_ctx(X, Y, bandwidth_sq):
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"X has {X.shape[1]} columns but Y has {Y.shape[1]}")
    if bandwidth_sq is None:
        return MmdContext.with_median_heuristic(X, Y)
    return MmdContext(KernelSpec.rbf(bandwidth_sq), X, Y)


def _record_csv(record: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(record)
    w.writerow(keys)
    w.writerow(["" if record[k] is None else format_float(record[k])
                if isinstance(record[k], float) else str(record[k]) for k in keys])
    return buf.getvalue()


def _emit(args, out, record=None, text_json=None, text_csv=None):
    if record is not None:
        text_json = json.dumps(record, indent=2, sort_keys=True) + "\n"
        text_csv = _record_csv(record)
    text = text_json if args.format == "json" else text_csv
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        out.write(text)


def _cmd_ksd_test(args, out, err):
    # the normal variant draws no random numbers
    seed = _resolve_seed(args, err) if args.variant == "boot" else 0
    config = TestConfig(args.alpha, args.theta, args.B, seed)
    model = _load_model(args.model)
    ctx = _ksd_ctx(model, read_samples(args.data), args.bandwidth_sq)
    report = (e_ksd_normal if args.variant == "normal" else e_ksd_boot)(ctx, config)
    print(f"kequiv: kernel {json.dumps(ctx.kernel.to_dict(), sort_keys=True)}", file=err)
    _emit(args, out, report.to_dict())


def _cmd_mmd_test(args, out, err):
    # the normal variant draws no random numbers
    seed = _resolve_seed(args, err) if args.variant == "boot" else 0
    config = TestConfig(args.alpha, args.theta, args.B, seed)
    ctx = _mmd_ctx(read_samples(args.data_x), read_samples(args.data_y), args.bandwidth_sq)
    report = (e_mmd_normal if args.variant == "normal" else e_mmd_boot)(ctx, config)
    print(f"kequiv: kernel {json.dumps(ctx.kernel.to_dict(), sort_keys=True)}", file=err)
    _emit(args, out, report.to_dict())


def _cmd_margin(args, out, err):
    if args.kind == "ksd" and not (args.model and args.data):
        raise UsageError("margin --kind ksd requires --model and --data")
    if args.kind == "mmd" and not (args.data_x and args.data_y):
        raise UsageError("margin --kind mmd requires --data-x and --data-y")
    seed = _resolve_seed(args, err)
    if args.kind == "ksd":
        ctx = _ksd_ctx(_load_model(args.model), read_samples(args.data), args.bandwidth_sq)
        theta = select_margin_ksd(ctx, args.theta_prime, args.alpha, args.beta, args.B, seed)
    else:
        ctx = _mmd_ctx(read_samples(args.data_x), read_samples(args.data_y), args.bandwidth_sq)
        theta = select_margin_mmd(ctx, args.theta_prime, args.alpha, args.beta, args.B, seed)
    _emit(args, out, {
        "kind": args.kind,
        "theta": theta,
        "theta_prime": args.theta_prime,
        "alpha": args.alpha,
        "beta": args.beta,
        "B": args.B,
        "seed": seed,
        "kernel": json.dumps(ctx.kernel.to_dict(), sort_keys=True),
    })


def _cmd_experiment(args, out, err):
    try:
        with open(args.plan) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read plan ({exc.strerror})", args.plan) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON ({exc.msg})", args.plan, exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict):
        raise DataError("plan must be a JSON object", args.plan)
    doc.setdefault("workers", args.threads)
    try:
        plan = ExperimentPlan.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid plan: {exc}") from exc
    curve = run_rejection_curve(plan)
    for f in curve.failures:
        print(f"kequiv: sweep point {f['parameter']} failed: {f['error']}", file=err)
    _emit(args, out, text_json=curve.to_json() + "\n", text_csv=curve.to_csv())


def _sampler(model):
    return lambda n, seed: draw(model, n, seed)


def _cmd_oracle(args, out, err):
    if args.model is None:
        raise UsageError("oracle requires --model")
    seed = _resolve_seed(args, err)
    q = _load_model(args.sample_from)
    p = _load_model(args.model)
    if q.dim != p.dim:
        raise DataError(f"--sample-from has dimension {q.dim} but --model has {p.dim}")
    if args.bandwidth_sq is None:
        pilot = draw(q, 2000, np.random.SeedSequence([seed, 7]))
        if args.kind == "mmd":
            pilot = np.vstack([pilot, draw(p, 2000, np.random.SeedSequence([seed, 8]))])
        bw = median_heuristic(pilot)
    else:
        bw = args.bandwidth_sq
    kernel = KernelSpec.imq(bw) if args.kind == "ksd" else KernelSpec.rbf(bw)
    try:
        result = population_discrepancy_mc(
            args.kind, kernel, _sampler(q), args.mc_size, seed,
            model=p if args.kind == "ksd" else None,
            sample_p=_sampler(p) if args.kind == "mmd" else None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    record = result.to_dict()
    record["kernel"] = json.dumps(kernel.to_dict(), sort_keys=True)
    _emit(args, out, record)


_COMMANDS = {
    "ksd-test": _cmd_ksd_test,
    "mmd-test": _cmd_mmd_test,
    "margin": _cmd_margin,
    "experiment": _cmd_experiment,
    "oracle": _cmd_oracle,
}


def run_cli(argv=None, stdout=None, stderr=None) -> int:
    """Run one command and return its exit code instead of exiting."""
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except DataError as exc:
        print(f"kequiv: data error: {exc}", file=err)
        return EXIT_DATA
    except (ValueError, FloatingPointError) as exc:
        print(f"kequiv: data error: {exc}", file=err)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
