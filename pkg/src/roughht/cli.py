"""Command-line front end: transforms, decompositions, kernel probes, sweeps.

Subcommands read and write the plain text formats of the library: functions
as "site value" lines, cube dumps as "scale index average" lines, reports as
RFC-4180 CSV plus a JSON summary.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from .lattice import DyadicInterval, LatticeFunction, lp_norm
from .operators import TransformConfig, level_set_size, maximal_transform, partial_sum
from .czdecomp import cz_decompose, purge_small_cubes
from .kernels import averaged_kernel_holder, diagonal_split, kernel, probe_holder, probe_size_bound
from .experiments import (
    ExperimentConfig,
    emit_lemma_suite,
    emit_sweep,
    generate_input,
    lemma_suite,
    normalize_l1,
    read_function,
    weak11_sweep,
    write_csv,
    write_function,
)

KERNEL_PROBE_HEADER = ("n1", "n2", "j_center", "j_len", "c_hat", "delta_hat", "cell_runtime_ms")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float, default=1.001)
    p.add_argument("--theta", type=float, default=0.8)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out", help="output file or directory")
    p.add_argument("--allow-alpha", action="store_true", help="permit alpha above the tested range")


def _experiment_config(args, m_list=None) -> ExperimentConfig:
    kwargs = dict(
        alpha=args.alpha,
        theta=args.theta,
        epsilon=args.epsilon,
        seed=args.seed,
        workers=args.workers,
        output_dir=args.out,
        allow_large_alpha=args.allow_alpha,
    )
    if getattr(args, "config", None):
        base = ExperimentConfig.from_file(args.config)
        for key, val in kwargs.items():
            defaults = ExperimentConfig()
            if val != getattr(defaults, key):
                base = _replace_field(base, key, val)
        if m_list:
            base = _replace_field(base, "m_list", tuple(m_list))
        return base
    if m_list:
        kwargs["m_list"] = tuple(m_list)
    if getattr(args, "family", None):
        kwargs["input_family"] = args.family
    if getattr(args, "seeds", None):
        kwargs["seeds"] = args.seeds
    if getattr(args, "lam", None):
        kwargs["lambda_grid"] = tuple(args.lam)
    return ExperimentConfig(**kwargs)


def _replace_field(cfg: ExperimentConfig, key, val) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, **{key: val})


def _parse_m(values) -> list[int]:
    out = []
    for chunk in values:
        out.extend(int(x) for x in str(chunk).split(","))
    return out


# -- subcommands --------------------------------------------------------------


def _cmd_transform(args) -> int:
    cfg = TransformConfig(m=args.M, theta=args.theta, alpha=args.alpha, allow_large_alpha=args.allow_alpha)
    f = read_function(args.input) if args.input != "-" else read_function(sys.stdin)
    if args.B is not None:
        g = partial_sum(f, args.B, cfg, signed=not args.unsigned)
    elif args.maximal:
        g = maximal_transform(f, cfg)
    else:
        g = partial_sum(f, args.M, cfg, signed=not args.unsigned)
    if args.out == "-":
        write_function(g, sys.stdout)
    else:
        write_function(g, args.out)
    return 0


def _cmd_czd(args) -> int:
    f = read_function(args.input) if args.input != "-" else read_function(sys.stdin)
    dec = cz_decompose(f, args.lam)
    lines = dec.dump_lines()
    if args.out == "-":
        sys.stdout.write("\n".join(lines) + ("\n" if lines else ""))
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    if args.purge is not None:
        purged = purge_small_cubes(f, dec, args.purge)
        if args.purged_out:
            write_function(purged, args.purged_out)
    return 0


def _cmd_kernel_probe(args) -> int:
    cfg = TransformConfig(m=args.M, theta=args.theta, alpha=args.alpha, allow_large_alpha=args.allow_alpha)
    rows = []
    j = (args.j_start, args.j_start + args.j_len)
    center = args.j_start + args.j_len / 2.0
    t0 = time.perf_counter()
    if args.N1 != args.N2:
        kern = kernel(args.N1, args.N2, j, cfg)
        c_hat = probe_size_bound(args.N1, args.N2, j, cfg, kern=kern)
        delta_hat, _ = probe_holder(args.N1, args.N2, j, cfg, direction=1, kern=kern)
    else:
        split = diagonal_split(args.N1, j, cfg, epsilon=args.epsilon)
        c_hat = split.diag_ratio(cfg.alpha)
        delta_hat, _ = averaged_kernel_holder(
            args.N1, DyadicInterval.containing(max(1, int(math.log2(args.j_len))), args.j_start), cfg
        )
    ms = (time.perf_counter() - t0) * 1000.0
    rows.append((args.N1, args.N2, center, args.j_len, c_hat, delta_hat, ms))
    if args.out == "-":
        import csv as _csv

        w = _csv.writer(sys.stdout)
        w.writerow(KERNEL_PROBE_HEADER)
        for r in rows:
            w.writerow(r)
    else:
        write_csv(args.out, KERNEL_PROBE_HEADER, rows)
    return 0


def _cmd_weak11(args) -> int:
    ms = _parse_m(args.M)
    cfg = _experiment_config(args, m_list=ms)
    m = ms[0]
    tcfg = cfg.transform_config(m)
    if args.input:
        f0 = normalize_l1(read_function(args.input))
    else:
        f0 = normalize_l1(generate_input(cfg, cfg.input_family, m, cfg.seed))
    hm = maximal_transform(f0, tcfg)
    lams = cfg.lambda_grid or cfg.default_lambda_grid(f0, m)
    rows = []
    l1 = lp_norm(f0, 1)
    for lam in lams:
        ratio = lam * level_set_size(hm, lam) / l1 if not hm.is_zero() else 0.0
        rows.append((m, cfg.input_family, lam, ratio))
    if args.out == "-":
        for r in rows:
            sys.stdout.write(" ".join(repr(v) if isinstance(v, float) else str(v) for v in r) + "\n")
    else:
        write_csv(args.out, ("m", "family", "lambda", "ratio"), rows)
    return 0


def _cmd_lemma_suite(args) -> int:
    cfg = _experiment_config(args)
    report = lemma_suite(cfg)
    path = emit_lemma_suite(report, args.out)
    for line in report.text_lines():
        print(line)
    print(f"wrote {path}")
    return 0 if report.ok else 1


def _cmd_sweep(args) -> int:
    cfg = _experiment_config(args, m_list=_parse_m(args.M) if args.M else None)
    report = weak11_sweep(cfg)
    paths = emit_sweep(report, args.out)
    summary = report.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"wrote {paths['results']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rough-ht", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="apply the truncated transform to a function file")
    _add_common(p)
    p.add_argument("--input", required=True, help="function file ('site value' lines), '-' for stdin")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--B", type=int, default=None, help="truncation level (default: M)")
    p.add_argument("--maximal", action="store_true", help="compute the maximal truncation instead")
    p.add_argument("--unsigned", action="store_true", help="use the raw measures, not their odd parts")
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("czd", help="decompose a nonnegative function at a given height")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--purge", type=float, default=None, help="also purge cubes up to this length")
    p.add_argument("--purged-out", default=None, help="file for the purged function")
    p.set_defaults(func=_cmd_czd)

    p = sub.add_parser("kernel-probe", help="size/regularity probes of the window kernels")
    _add_common(p)
    p.add_argument("--N1", type=int, required=True)
    p.add_argument("--N2", type=int, required=True)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--j-start", type=int, default=0)
    p.add_argument("--j-len", type=int, required=True)
    p.set_defaults(func=_cmd_kernel_probe)

    p = sub.add_parser("weak11", help="weak-type ratios over a lambda grid")
    _add_common(p)
    p.add_argument("--M", nargs="+", required=True)
    p.add_argument("--family", default="delta")
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--lam", type=float, nargs="+", default=None, help="explicit lambda grid")
    p.add_argument("--input", default=None, help="use this function file instead of a generator")
    p.set_defaults(func=_cmd_weak11)

    p = sub.add_parser("lemma-suite", help="run every randomized executable check")
    _add_common(p)
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=_cmd_lemma_suite)

    p = sub.add_parser("sweep", help="full weak-type sweep over (m, family, seed, lambda)")
    _add_common(p)
    p.add_argument("--M", nargs="+", default=None)
    p.add_argument("--family", default=None, help="comma-separated input families")
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--lam", type=float, nargs="+", default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=_cmd_sweep)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # kernel-probe needs a transform config big enough to hold both scales
    if args.command == "kernel-probe" and args.M is None:
        args.M = max(args.N1, args.N2)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
