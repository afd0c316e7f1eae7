"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 shape/config/file error,
3 nothing to do (e.g. no matching files), 4 a self-check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import accounting as acct
from .blocks import MambaConfig, MambaWeights, SS2DConfig, VSSWeights
from .errors import ConfigError, DimensionError, DomainError, ParseError
from .imageio import load_image, load_image_pgm, load_mask_pgm, probability_to_bytes, write_pgm
from .initialize import init_bundle, init_weights
from .metrics import all_metrics, confusion
from .runconfig import RunConfig, load_run_config
from .scan import scan_parallel, scan_sequential
from .segnet import net_forward
from .weightfile import load_weights, save_weights

EXIT_USAGE, EXIT_CONFIG, EXIT_EMPTY, EXIT_CHECK = 1, 2, 3, 4

JSON_KEYS = """\
json output keys:
  params     name, items[{term, count}], total; with --baseline also
             comparison{basis, value, baseline, parts,
             reduction_percent_exact, reduction_percent_rounded}
  flops      name, convention, items[{term, flops}], total, total_gflops
  eval       rows[{file, dsc, se, sp, acc}], mean{dsc, se, sp, acc}, pairs
  scan-bench d, n, len, repeat, rows[{variant, chunk, median_ms, max_rel_dev}]
  selftest   checks[{name, expected, actual, passed}], passed
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(fmt: str, text: str, doc: dict, rows: list[list] | None = None) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2, sort_keys=False))
    elif fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows or [])
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(text)


def _table(rows: list[list], header: list[str]) -> str:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for r in cells:
        first = r[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join([first, *rest]).rstrip())
    return "\n".join(lines) + "\n"


# -- params -------------------------------------------------------------------

def _block_report(block: str, d_model: int, p: int | None, kind: str, conv_mode: str,
                  shared: bool) -> acct.ParamReport:
    if block == "mamba":
        return acct.mamba_params(MambaConfig(d_model, conv_mode=conv_mode))
    if block == "ss2d":
        return acct.ss2d_params(SS2DConfig(d_model, conv_mode=conv_mode))
    return acct.pvm_params(d_model, p, kind, shared=shared, conv_mode=conv_mode)


def cmd_params(args) -> int:
    if (args.config is None) == (args.block is None):
        raise UsageError("give exactly one of --config or --block")
    if args.config is not None:
        for flag in ("d_model", "p", "baseline"):
            if getattr(args, flag) is not None:
                raise UsageError(f"--{flag.replace('_', '-')} cannot be combined with --config")
        report = acct.model_params(load_run_config(args.config).net_config())
        comparison = None
    else:
        if args.d_model is None:
            raise UsageError("--block needs --d-model")
        if args.p is not None and args.block != "pvm":
            raise UsageError("--p only applies to --block pvm")
        p = args.p or 4
        conv_mode = "depthwise" if args.depthwise else "full"
        report = _block_report(args.block, args.d_model, p, args.kind, conv_mode, args.shared)
        comparison = None
        if args.baseline is not None:
            if args.block == "pvm":
                base = _block_report("pvm", args.baseline, 1, args.kind, conv_mode, args.shared)
                cmp_rep = acct.ParamReport("branches", [("branches", report.item("branches"))])
                cmp_rep = cmp_rep.with_baseline(base.item("branches"), parts=1 if args.shared else p)
                basis = "branches"
            else:
                base = _block_report(args.block, args.baseline, None, args.kind, conv_mode, args.shared)
                cmp_rep = report.with_baseline(base.total)
                basis = "total"
            comparison = {
                "basis": basis,
                "value": cmp_rep.total,
                "baseline": cmp_rep.baseline,
                "parts": cmp_rep.parts,
                "reduction_percent_exact": round(100 * cmp_rep.reduction_fraction, 4),
                "reduction_percent_rounded": round(100 * cmp_rep.reduction_rounded, 1),
            }

    doc = report.to_dict()
    rows = [[t, c] for t, c in report.items]
    text = report.name + "\n" + _table(rows + [["total", report.total]], ["term", "count"])
    csv_rows = [["term", "count"], *rows, ["total", report.total]]
    if comparison is not None:
        doc["comparison"] = comparison
        text += (
            f"baseline ({comparison['basis']}) {comparison['baseline']}\n"
            f"reduction {comparison['reduction_percent_exact']:.4f}% exact, "
            f"{comparison['reduction_percent_rounded']:.1f}% rounded\n"
        )
        csv_rows += [["baseline", comparison["baseline"]],
                     ["reduction_percent_exact", comparison["reduction_percent_exact"]],
                     ["reduction_percent_rounded", comparison["reduction_percent_rounded"]]]
    _emit(args.format, text, doc, csv_rows)
    return 0


# -- flops --------------------------------------------------------------------

def cmd_flops(args) -> int:
    rc = load_run_config(args.config) if args.config else RunConfig()
    convention = args.convention or rc.flop_convention
    report = acct.model_flops(rc.net_config(), convention)
    rows = [[t, f] for t, f in report.items]
    text = (f"{report.name}\nconvention: {convention}\n"
            + _table(rows + [["total", report.total]], ["term", "flops"])
            + f"GFLOPs: {report.total_gflops:.6f}\n")
    _emit(args.format, text, report.to_dict(),
          [["term", "flops"], *rows, ["total", report.total], ["convention", convention]])
    return 0


# -- init / infer -------------------------------------------------------------

def cmd_init(args) -> int:
    rc = load_run_config(args.config) if args.config else RunConfig()
    seed = rc.seed if args.seed is None else args.seed
    save_weights(args.out, init_weights(rc.net_config(), seed))
    return 0


def cmd_infer(args) -> int:
    rc = load_run_config(args.config)
    cfg = rc.net_config()
    weights = load_weights(args.weights) if args.weights else init_weights(cfg, rc.seed)
    image = load_image(args.image)
    expected = (cfg.in_channels, *cfg.input_size)
    if image.shape != expected:
        raise ConfigError(f"image {args.image} is {image.shape[0]}x{image.shape[1]}x{image.shape[2]} "
                          f"(CxHxW) but the config expects {expected[0]}x{expected[1]}x{expected[2]}")
    prob = net_forward(cfg, weights, image, chunk=args.chunk)
    write_pgm(args.out, probability_to_bytes(prob))
    return 0


# -- eval ---------------------------------------------------------------------

METRIC_NAMES = ("dsc", "se", "sp", "acc")


def cmd_eval(args) -> int:
    pred_dir, truth_dir = Path(args.pred), Path(args.truth)
    for d in (pred_dir, truth_dir):
        if not d.is_dir():
            raise ConfigError(f"{d} is not a directory")
    preds = {p.name for p in pred_dir.glob("*.pgm")}
    truths = {p.name for p in truth_dir.glob("*.pgm")}
    for name in sorted(preds ^ truths):
        missing = "ground truth" if name in preds else "prediction"
        print(f"warning: {name} has no matching {missing}; skipped", file=sys.stderr)
    names = sorted(preds & truths)
    if not names:
        print("error: no matching prediction/ground-truth pairs", file=sys.stderr)
        return EXIT_EMPTY

    rows = []
    for name in names:
        counts = confusion(load_image_pgm(pred_dir / name), load_mask_pgm(truth_dir / name), args.threshold)
        rows.append({"file": name, **all_metrics(counts)})
    mean = {k: statistics.fmean(r[k] for r in rows) for k in METRIC_NAMES}

    table_rows = [[r["file"], *(f"{r[k]:.4f}" for k in METRIC_NAMES)] for r in rows]
    table_rows.append(["mean", *(f"{mean[k]:.4f}" for k in METRIC_NAMES)])
    header = ["file", *(k.upper() for k in METRIC_NAMES)]
    doc = {"rows": rows, "mean": mean, "pairs": len(rows)}
    csv_rows = [["file", *METRIC_NAMES]]
    csv_rows += [[r["file"], *(repr(r[k]) for k in METRIC_NAMES)] for r in rows]
    csv_rows.append(["mean", *(repr(mean[k]) for k in METRIC_NAMES)])
    _emit(args.format, _table(table_rows, header), doc, csv_rows)
    return 0


# -- scan-bench ---------------------------------------------------------------

def _parse_chunks(text: str, length: int) -> list[int]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok.upper() == "L":
            out.append(length)
        elif tok:
            try:
                out.append(int(tok))
            except ValueError:
                raise UsageError(f"bad chunk size {tok!r}") from None
    if not out or min(out) < 1:
        raise UsageError("chunk sizes must be positive integers (or L)")
    return out


def cmd_scan_bench(args) -> int:
    for flag in ("d", "n", "len", "repeat"):
        if getattr(args, flag) < 1:
            raise UsageError(f"--{flag} must be positive")
    chunks = _parse_chunks(args.chunks, args.len)
    rng = np.random.default_rng(args.seed)
    shape = (args.d, args.n, args.len)
    a = rng.uniform(0.5, 1.0, shape).astype(np.float32)
    b = rng.standard_normal(shape).astype(np.float32)

    def timed(fn):
        times, out = [], None
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t0)
        return out, 1e3 * statistics.median(times)

    ref, ref_ms = timed(lambda: scan_sequential(a, b))
    scale = float(np.abs(ref).max()) + 1e-12
    rows = [{"variant": "sequential", "chunk": None, "median_ms": ref_ms, "max_rel_dev": 0.0}]
    for c in chunks:
        out, ms = timed(lambda c=c: scan_parallel(a, b, c))
        rows.append({"variant": "parallel", "chunk": c, "median_ms": ms,
                     "max_rel_dev": float(np.abs(out - ref).max()) / scale})
    doc = {"d": args.d, "n": args.n, "len": args.len, "repeat": args.repeat, "rows": rows}
    table_rows = [[r["variant"], "-" if r["chunk"] is None else r["chunk"],
                   f"{r['median_ms']:.3f}", f"{r['max_rel_dev']:.2e}"] for r in rows]
    text = (f"d={args.d} n={args.n} len={args.len} repeat={args.repeat}\n"
            + _table(table_rows, ["variant", "chunk", "median_ms", "max_rel_dev"]))
    csv_rows = [["variant", "chunk", "median_ms", "max_rel_dev"]]
    csv_rows += [[r["variant"], "" if r["chunk"] is None else r["chunk"], r["median_ms"], r["max_rel_dev"]]
                 for r in rows]
    _emit(args.format, text, doc, csv_rows)
    return 0


# -- selftest -----------------------------------------------------------------

def selftest_checks() -> list[dict]:
    """Deterministic reproduction checks; no timings, so output is stable."""
    checks = []

    def check(name, expected, actual, passed=None):
        checks.append({"name": name, "expected": expected, "actual": actual,
                       "passed": bool(expected == actual if passed is None else passed)})

    m1024 = acct.mamba_params(MambaConfig(1024)).total
    m256 = acct.mamba_params(MambaConfig(256)).total
    s1024 = acct.ss2d_params(SS2DConfig(1024)).total
    s256 = acct.ss2d_params(SS2DConfig(256)).total
    check("mamba_params(1024)", 23435264, m1024)
    check("mamba_params(256)", 1484288, m256)
    check("ss2d_params(1024)", 45504512, s1024)
    check("ss2d_params(256)", 2921984, s256)
    check("mamba reduction 1024->256 (%)", 93.7, round(100 * (1 - m256 / m1024), 1))
    check("ss2d reduction 1024->256 (%)", 93.6, round(100 * (1 - s256 / s1024), 1))
    ratio = acct.pvm_params(1024, 4).item("branches") / acct.pvm_params(1024, 1).item("branches")
    check("pvm branch ratio p=4/p=1 at C=1024", 0.2534, round(ratio, 4), abs(ratio - 0.2534) <= 5e-4)
    check("pvm rounded reduction (%)", 74.8, round(100 * (1 - 4 * round(m256 / m1024, 3)), 1))

    net = RunConfig().net_config()
    total = acct.model_params(net).total
    check("model_params default in [44000, 54000]", "in range", total, 44000 <= total <= 54000)
    p1 = acct.model_params(RunConfig(parallelism=1).net_config()).total
    p2 = acct.model_params(RunConfig(parallelism=2).net_config()).total
    check("p=2/p=1 within 3pp of 51.47%", "in range", round(100 * p2 / p1, 2), abs(p2 / p1 - 0.5147) <= 0.03)
    check("p=4/p=1 within 3pp of 36.03%", "in range", round(100 * total / p1, 2), abs(total / p1 - 0.3603) <= 0.03)
    gf = acct.model_flops(net, "macs").total_gflops
    check("GFLOPs (macs) within 25% of 0.060", "in range", round(gf, 6), abs(gf / 0.060 - 1) <= 0.25)

    for cls, cfg, fn in ((MambaWeights, MambaConfig(16), acct.mamba_params),
                         (VSSWeights, SS2DConfig(8), acct.ss2d_params)):
        check(f"census {cls.__name__}({cfg.d_model})", fn(cfg).total, init_bundle(cls, cfg, 0).numel())
    check("census default network", total, init_weights(net, 0).numel())

    rng = np.random.default_rng(1234)
    a = rng.uniform(0.5, 1.0, (4, 16, 1024)).astype(np.float32)
    b = rng.standard_normal((4, 16, 1024)).astype(np.float32)
    ref = scan_sequential(a, b)
    dev = max(float(np.abs(scan_parallel(a, b, c) - ref).max()) for c in (1, 7, 64, 1024))
    dev /= float(np.abs(ref).max())
    check("scan_parallel vs sequential rel dev <= 1e-5", "<= 1e-05", f"{dev:.1e}", dev <= 1e-5)
    return checks


def cmd_selftest(args) -> int:
    checks = selftest_checks()
    ok = all(c["passed"] for c in checks)
    lines = [f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: expected {c['expected']}, got {c['actual']}"
             for c in checks]
    lines.append(f"{'PASS' if ok else 'FAIL'}  {sum(c['passed'] for c in checks)}/{len(checks)} checks")
    csv_rows = [["name", "expected", "actual", "passed"]]
    csv_rows += [[c["name"], c["expected"], c["actual"], c["passed"]] for c in checks]
    _emit(args.format, "\n".join(lines) + "\n", {"checks": checks, "passed": ok}, csv_rows)
    return 0 if ok else EXIT_CHECK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ultralight", description=__doc__,
                     epilog=JSON_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=JSON_KEYS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(fn=fn)
        return p

    def fmt(p):
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")

    p = add("params", cmd_params, "itemized parameter census of a block or a whole network")
    p.add_argument("--config", help="run-config JSON; reports the whole network")
    p.add_argument("--block", choices=("mamba", "ss2d", "pvm"))
    p.add_argument("--d-model", type=int, help="block input channels (PVM: total channels)")
    p.add_argument("--p", type=int, help="PVM parallelism (default 4)")
    p.add_argument("--kind", choices=("mamba-1d", "ss2d"), default="mamba-1d", help="PVM branch block")
    p.add_argument("--depthwise", action="store_true", help="count a depthwise rather than dense block conv")
    p.add_argument("--shared", action="store_true", help="PVM branches share one set of weights")
    p.add_argument("--baseline", type=int,
                   help="baseline channel count; prints exact and rounded reduction "
                        "(PVM: branch term against the unsplit layer)")
    fmt(p)

    p = add("flops", cmd_flops, "closed-form FLOP estimate of a network")
    p.add_argument("--config")
    p.add_argument("--convention", choices=("macs", "2macs"))
    fmt(p)

    p = add("init", cmd_init, "write seeded initial weights for a config")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("infer", cmd_infer, "run the network on one PPM/PGM image, write a PGM probability map")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", help="weight file (default: seeded init from the config)")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chunk", type=int, help="use the parallel scan with this chunk size")

    p = add("eval", cmd_eval, "DSC/SE/SP/ACC of predicted vs ground-truth PGM masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    fmt(p)

    p = add("scan-bench", cmd_scan_bench, "time the parallel scan against the sequential reference")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--len", type=int, default=1024)
    p.add_argument("--chunks", default="1,7,64,L", help="comma-separated chunk sizes; L means the full length")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    fmt(p)

    p = add("selftest", cmd_selftest, "check the reference parameter counts and kernel equivalence")
    fmt(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"ultralight: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DimensionError, DomainError, ParseError) as exc:
        print(f"ultralight: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ultralight: error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
