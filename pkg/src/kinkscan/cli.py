"""
Command-line entry point.

    kinkscan kernel --order K [--verify] [--table STEP]
    kinkscan simulate CONFIG --out PATH [--seed S]
    kinkscan estimate --data CSV [--bandwidth auto|H] [--f-mode ranks|oracle] [--out JSON]
    kinkscan mc {rate,null,clt} CONFIG [--out-dir DIR] [--seed S]

Exit status: 0 on success (or a kink found), 1 for a clean negative outcome
(no kink, failed verification, tolerance missed), 2 on any error.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from importlib import resources

import numpy as np

from . import experiments as exp
from .config import load_config
from .errors import KinkScanError
from .estimator import EstimatorConfig, estimate
from .io import (atomic_write, format_table, header_comment, json_text, profile_svg,
                 read_dataset, write_dataset, write_json, write_series)
from .kernel import build_kernel, eval_kernel, verify_kernel
from .lrd import simulate_lrd
from .scenario import generate_dataset

EXIT_OK, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2
log = logging.getLogger("kinkscan")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def bundled_configs():
    return sorted(p.name for p in resources.files("kinkscan").joinpath("configs").iterdir()
                  if p.name.endswith(".cfg"))


def resolve_config_path(name):
    """A filesystem path, or the name of a bundled configuration."""
    if os.path.exists(name):
        return name
    bundled = resources.files("kinkscan").joinpath("configs", name)
    if bundled.is_file():
        return str(bundled)
    return name


def _load(path, seed=None):
    cfg = load_config(resolve_config_path(path))
    if seed is not None:
        cfg = cfg.with_values(run__seed=seed)
    return cfg


# -- kernel -----------------------------------------------------------------

def cmd_kernel(args, out):
    kernel = build_kernel(args.order)
    if args.table is not None:
        step = args.table
        count = round(2 / step)
        if step <= 0 or abs(count * step - 2) > 1e-9:
            raise KinkScanError("--table step must divide 2")
        x = np.linspace(-1.0, 1.0, count + 1)
        rows = [{"x": xi, **{c: eval_kernel(kernel, d, xi) for d, c in enumerate(("K", "K1", "K2", "K3"))}}
                for xi in x]
        out.write(format_table(("x", "K", "K1", "K2", "K3"), rows))
    else:
        out.write(f"# kernel order {kernel.order}, smoothness {kernel.smoothness}, "
                  f"normalizer {kernel.normalizer}\n")
        out.write("power,coefficient,value\n")
        for e, c in kernel.poly_coeffs:
            out.write(f"{e},{c},{float(c)!r}\n")
    if args.verify:
        report = verify_kernel(kernel)
        for name, value, ok in report.checks:
            out.write(f"# {'ok  ' if ok else 'FAIL'} {name} = {value:.3e}\n")
        out.write(f"# verification {'passed' if report.passed else 'FAILED'}\n")
        return EXIT_OK if report.passed else EXIT_NEGATIVE
    return EXIT_OK


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args, out):
    cfg = _load(args.config, args.seed)
    comment = header_comment(cfg.seed, cfg.digest())
    n = cfg["simulate.n"]
    rng = np.random.SeedSequence(cfg.seed)
    if cfg["simulate.output"] == "lrd_series":
        write_series(args.out, simulate_lrd(cfg.lrd_spec(), n, np.random.default_rng(rng)).values, comment)
    else:
        scenario = cfg.scenario()
        data = generate_dataset(scenario, n, rng, keep_latents=cfg["simulate.latents"])
        write_dataset(args.out, data, cfg["simulate.latents"], comment)
    log.info("wrote %d rows to %s", n, args.out)
    return EXIT_OK


# -- estimate ---------------------------------------------------------------

def _bandwidth(text):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("bandwidth must be 'auto' or a number") from None


def cmd_estimate(args, out):
    base = _load(args.config, None).estimator() if args.config else EstimatorConfig()
    fields = dict(f_mode=args.f_mode or base.f_mode)
    if args.bandwidth is not None:
        fields["bandwidth_detect"] = args.bandwidth
    if args.bandwidth_zero is not None:
        fields["bandwidth_zero"] = args.bandwidth_zero
    config = replace(base, **fields)
    data = read_dataset(args.data)
    if config.f_mode == "oracle" and data.F_of_x is None:
        raise KinkScanError("oracle F mode needs an F column in the data")
    result = estimate(data, config)
    text = json_text(result.to_dict())
    if args.out:
        atomic_write(args.out, text)
    else:
        out.write(text)
    if args.svg:
        prof = result.profile
        atomic_write(args.svg, profile_svg(prof.t, prof.tstat, threshold=prof.threshold,
                                           marks=[k.lambda_hat for k in result]))
    log.info("%d kink(s) found", len(result))
    return EXIT_OK if len(result) else EXIT_NEGATIVE


# -- mc ---------------------------------------------------------------------

def _mc_rate(cfg):
    res = exp.run_rate_study(cfg.scenario(), cfg["mc.n_list"], cfg["mc.reps"], cfg.estimator(), cfg.seed)
    lo, hi = sorted(cfg["mc.slope_band"])
    summary = res.summary()
    summary["slope_band"] = [lo, hi]
    summary["passed"] = bool(lo <= res.slope <= hi)
    return res, ("n", "rep", "abs_error", "missed"), summary


def _mc_null(cfg):
    res = exp.run_null_calibration(cfg.scenario(), cfg["mc.n"], cfg["mc.reps"], cfg.estimator(), cfg.seed)
    summary = res.summary()
    summary["max_gap_tolerance"] = cfg["mc.max_gap"]
    summary["max_false_alarm_tolerance"] = cfg["mc.max_false_alarm"]
    summary["gap_passed"] = bool(res.max_gap <= cfg["mc.max_gap"])
    summary["false_alarm_passed"] = bool(res.false_alarm_rate <= cfg["mc.max_false_alarm"])
    summary["passed"] = summary["gap_passed"] and summary["false_alarm_passed"]
    return res, ("rep", "sup_abs_scan", "false_alarm"), summary


def _mc_clt(cfg):
    res = exp.run_clt_study(cfg.scenario(), cfg["mc.t"], cfg["mc.n"], cfg["mc.reps"],
                            cfg["mc.regime"], cfg.estimator(), cfg.seed)
    summary = res.summary()
    summary["max_ks_tolerance"] = cfg["mc.max_ks"]
    summary["passed"] = bool(res.ks <= cfg["mc.max_ks"])
    return res, ("rep", "standardized"), summary


MC = {"rate": _mc_rate, "null": _mc_null, "clt": _mc_clt}


def cmd_mc(args, out):
    cfg = _load(args.config, args.seed)
    log.info("mc %s: config %s, seed %d", args.kind, cfg.digest(), cfg.seed)
    res, cols, summary = MC[args.kind](cfg)
    summary.update(seed=cfg.seed, config_hash=cfg.digest())
    comment = header_comment(cfg.seed, cfg.digest())
    os.makedirs(args.out_dir, exist_ok=True)
    atomic_write(os.path.join(args.out_dir, f"{args.kind}.csv"), format_table(cols, res.rows(), comment))
    write_json(os.path.join(args.out_dir, f"{args.kind}_summary.json"), summary)
    log.info("mc %s: %s", args.kind, "passed" if summary["passed"] else "outside tolerance")
    return EXIT_OK if summary["passed"] else EXIT_NEGATIVE


# -- entry ------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="kinkscan", description="Kink detection for random-design regression.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("kernel", help="print or verify a kernel")
    k.add_argument("--order", type=int, required=True)
    k.add_argument("--verify", action="store_true")
    k.add_argument("--table", type=float, metavar="STEP", help="CSV of K..K3 on [-1, 1]")

    s = sub.add_parser("simulate", help="simulate a dataset from a config")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    e = sub.add_parser("estimate", help="estimate kinks from a data file")
    e.add_argument("--data", required=True)
    e.add_argument("--bandwidth", type=_bandwidth, help="detection bandwidth or 'auto'")
    e.add_argument("--bandwidth-zero", type=_bandwidth, help="zero-crossing bandwidth or 'auto'")
    e.add_argument("--f-mode", choices=("ranks", "oracle"))
    e.add_argument("--config", help="config whose estimator.* keys are used")
    e.add_argument("--out")
    e.add_argument("--svg", help="write the t-statistic profile as SVG")

    m = sub.add_parser("mc", help="Monte Carlo studies")
    m.add_argument("kind", choices=sorted(MC))
    m.add_argument("config", help="config path or bundled config name")
    m.add_argument("--out-dir", default=".")
    m.add_argument("--seed", type=int)
    return p


COMMANDS = {"kernel": cmd_kernel, "simulate": cmd_simulate, "estimate": cmd_estimate, "mc": cmd_mc}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args, out)
    except (KinkScanError, OSError) as exc:
        print(f"kinkscan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
