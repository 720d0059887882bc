"""Experiment orchestration: input generators, the weak-type sweep, randomized
lemma checks, and report emission.

Every generator and check is deterministic under (config, seed); sweep cells
are pure, so worker count changes scheduling only and the emitted CSV files
are byte-identical.  Timing is written to a separate file for that reason.
"""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .lattice import (
    DyadicInterval,
    IntervalFamily,
    LatticeFunction,
    band_indices,
    conditional_expectation,
    lp_norm,
    truncate_split,
)
from .measures import autocorrelation_offdiag_sup, bump_by_name, floor_powers
from .operators import (
    TransformConfig,
    convolve,
    four_term_split,
    level_set_size,
    maximal_transform,
    maximal_transform_bruteforce,
    split_term_maximal_sups,
)
from .czdecomp import (
    BadIndex,
    bad_part,
    check_cube_size_bounds,
    cz_decompose,
    cz_decompose_bruteforce,
    _ExactSums,
    _to_mantissa,
    _cmp_scaled,
    good_part_sum,
    purge_small_cubes,
    surviving_cubes,
    valid_shrink_range,
)
from .stopping import (
    averaged_convolutions,
    check_bad_stopping_max,
    check_stopping_max,
    exceptional_sets,
    oscillation_error,
)
from .kernels import kernel, probe_holder, probe_size_bound
from .squarefn import menshov_check, square_function_sides

__all__ = [
    "ExperimentConfig",
    "read_function",
    "write_function",
    "generate_input",
    "normalize_l1",
    "PipelineResult",
    "cz_pipeline",
    "SweepReport",
    "weak11_sweep",
    "gm_ratio",
    "er_decay_curve",
    "LemmaSuiteReport",
    "lemma_suite",
    "write_csv",
]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _round_guarded(x: float) -> int:
    # banker's rounding surprises at exact halves; shift off the knife edge
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass
class ExperimentConfig:
    """Global experiment parameters.

    The window at top scale m is [-4*m^alpha, 4*m^alpha); averaging windows
    have dyadic length 2^round((theta - epsilon) * log2(m)).  Exponents above
    the tested curve range need allow_large_alpha.
    """

    alpha: float = 1.001
    theta: float = 0.8
    epsilon: float = 0.05
    m_list: tuple = (1 << 10, 1 << 12)
    lambda_grid: tuple | None = None
    lambda_per_decade: int = 12
    bump: str = "default"
    input_family: str = "delta"
    seed: int = 1
    seeds: int = 1
    support_size: int = 32
    workers: int = 1
    output_dir: str = "out"
    allow_large_alpha: bool = False

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError("alpha must exceed 1")
        if self.alpha > 1.001 and not self.allow_large_alpha:
            raise ValueError("alpha above 1.001 requires allow_large_alpha / --allow-alpha")
        if not (0.0 < self.theta < 1.0):
            raise ValueError("theta must lie in (0, 1)")
        if not (0.0 < self.epsilon < self.theta / 2.0):
            raise ValueError("epsilon must lie in (0, theta/2)")
        self.m_list = tuple(int(m) for m in self.m_list)
        for m in self.m_list:
            if m < 2 or (m & (m - 1)) != 0:
                raise ValueError(f"m values must be dyadic, got {m}")

    # -- derived geometry ---------------------------------------------------

    def transform_config(self, m: int) -> TransformConfig:
        return TransformConfig(
            m=m,
            theta=self.theta,
            alpha=self.alpha,
            phi=bump_by_name(self.bump),
            allow_large_alpha=self.allow_large_alpha,
        )

    def window(self, m: int) -> tuple[int, int]:
        r = math.ceil(4.0 * m**self.alpha)
        return (-r, r)

    def j_length_exponent(self, m: int) -> int:
        return _round_guarded((self.theta - self.epsilon) * (m.bit_length() - 1))

    def j_length(self, m: int) -> int:
        return 1 << self.j_length_exponent(m)

    def j_family(self, m: int, lo: int | None = None, hi: int | None = None) -> IntervalFamily:
        if lo is None or hi is None:
            lo, hi = self.window(m)
        return IntervalFamily.tiling(lo, hi, self.j_length_exponent(m))

    def purge_threshold(self, m: int) -> float:
        return m ** (self.theta - 2.0 * self.epsilon)

    def default_lambda_grid(self, f0: LatticeFunction, m: int) -> tuple:
        if self.lambda_grid is not None:
            return tuple(self.lambda_grid)
        lo_w, hi_w = self.window(m)
        lam_lo = lp_norm(f0, 1) / (hi_w - lo_w)
        lam_hi = 2.0 * lp_norm(f0, math.inf)
        decades = math.log10(lam_hi / lam_lo)
        count = max(2, int(math.ceil(decades * self.lambda_per_decade)) + 1)
        return tuple(float(x) for x in np.geomspace(lam_lo, lam_hi, count))

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        """Flat key=value text; '#' starts a comment; lists are comma-separated."""
        kwargs = {}
        valid = {f.name for f in fields(ExperimentConfig)}
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"malformed config line: {raw!r}")
                key, val = (part.strip() for part in line.split("=", 1))
                if key not in valid:
                    raise ValueError(f"unknown config key {key!r}")
                kwargs[key] = _coerce_field(key, val)
        return ExperimentConfig(**kwargs)


def _coerce_field(key: str, val: str):
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[key]
    if key in ("m_list", "lambda_grid"):
        return tuple(float(x) if key == "lambda_grid" else int(x) for x in val.split(","))
    if kind == "int":
        return int(val)
    if kind == "float":
        return float(val)
    if kind == "bool":
        return val.lower() in ("1", "true", "yes")
    return val


# ---------------------------------------------------------------------------
# function text serialization: one "site value" pair per line
# ---------------------------------------------------------------------------


def write_function(f: LatticeFunction, path_or_file):
    if hasattr(path_or_file, "write"):
        for s, v in zip(f.sites, f.values):
            path_or_file.write(f"{s} {v!r}\n")
        return
    with open(path_or_file, "w", encoding="utf-8") as fh:
        write_function(f, fh)


def read_function(path_or_file) -> LatticeFunction:
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    sites, values = [], []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"malformed function line: {raw!r}")
        sites.append(int(parts[0]))
        values.append(float(parts[1]))
    return LatticeFunction(sites, values)


# ---------------------------------------------------------------------------
# input generators
# ---------------------------------------------------------------------------

FAMILIES = ("delta", "spaced-deltas", "cz-stress", "uniform-random", "normalized-l1")


def normalize_l1(f: LatticeFunction) -> LatticeFunction:
    n1 = lp_norm(f, 1)
    if n1 == 0.0:
        return f
    return f * (1.0 / n1)


def generate_input(cfg: ExperimentConfig, family: str, m: int, seed: int) -> LatticeFunction:
    """Deterministic test input at top scale m.

    delta: a single unit point mass; spaced-deltas: spikes sitting on curve
    sites; cz-stress: spikes of height lam*n at spacing comparable to n (the
    cube-size-critical geometry); uniform-random: uniform sites and heights;
    normalized-l1: uniform-random rescaled to unit l^1 mass.
    """
    rng = np.random.default_rng([seed, m, hash(family) & 0x7FFFFFFF])
    tcfg = cfg.transform_config(m)
    if family == "delta":
        return LatticeFunction.delta(0, 1.0)
    if family == "spaced-deltas":
        k = max(2, cfg.support_size // 4)
        ms = rng.integers(m // 2, m + 1, size=k)
        sites = floor_powers(np.unique(ms), cfg.alpha)
        heights = rng.uniform(0.5, 2.0, size=len(sites))
        return LatticeFunction(sites, heights)
    if family == "cz-stress":
        lam = 1.0 / m
        sites, heights = [], []
        pos = 0
        for _ in range(max(2, cfg.support_size // 4)):
            n = int(rng.choice(tcfg.scales))
            sites.append(pos)
            heights.append(lam * n * rng.uniform(0.9, 1.1))
            pos += int(n * rng.uniform(0.5, 2.0)) + 1
        return LatticeFunction(sites, heights)
    if family == "uniform-random":
        count = cfg.support_size
        sites = np.unique(rng.integers(0, m, size=count))
        values = rng.uniform(0.1, 1.0, size=len(sites))
        return LatticeFunction(sites, values)
    if family == "normalized-l1":
        return normalize_l1(generate_input(cfg, "uniform-random", m, seed))
    raise ValueError(f"unknown input family {family!r}; known: {FAMILIES}")


# ---------------------------------------------------------------------------
# decomposition pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    """Everything the height-lam analysis of one input needs downstream."""

    f0: LatticeFunction          # normalized input
    purged: LatticeFunction      # f0 zeroed on the small cubes
    lam: float
    dec: object
    fam_q: IntervalFamily        # surviving cubes
    fam_j: IntervalFamily
    threshold: float


def cz_pipeline(f0: LatticeFunction, cfg: ExperimentConfig, m: int, lam: float) -> PipelineResult:
    """Normalize, decompose at height lam, purge the short cubes, and fix the
    averaging-window grid."""
    if np.any(f0.values < 0):
        raise ValueError("pipeline inputs must be nonnegative; split signed inputs first")
    f0 = normalize_l1(f0)
    dec = cz_decompose(f0, lam)
    threshold = cfg.purge_threshold(m)
    purged = purge_small_cubes(f0, dec, threshold)
    fam_q = surviving_cubes(dec, threshold)
    return PipelineResult(
        f0=f0, purged=purged, lam=lam, dec=dec, fam_q=fam_q,
        fam_j=cfg.j_family(m), threshold=threshold,
    )


def gm_ratio(split, lam: float, f0: LatticeFunction) -> float:
    """||G||_2^2 / (lam * ||f0||_1) for the averaged-high-part stream of a split."""
    return lp_norm(split.g_m, 2) ** 2 / (lam * lp_norm(f0, 1))


# ---------------------------------------------------------------------------
# weak-type sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepReport:
    """Rows of the weak-type sweep plus derived summaries."""

    rows: list
    timing_rows: list
    config: ExperimentConfig

    RESULT_HEADER = (
        "m", "theta", "alpha", "family", "seed", "lambda",
        "ratio", "term_I", "term_II", "term_III", "term_IV", "gm_ratio", "status",
    )
    TIMING_HEADER = ("m", "family", "seed", "runtime_ms")

    def summary(self) -> dict:
        per_m: dict = {}
        for row in self.rows:
            if row[-1] != "ok":
                continue
            m, ratio = row[0], row[6]
            per_m.setdefault(m, []).append(ratio)
        max_ratio = {m: max(v) for m, v in per_m.items()}
        out = {
            "max_ratio_per_m": {str(m): max_ratio[m] for m in sorted(max_ratio)},
            "theta": self.config.theta,
            "alpha": self.config.alpha,
            "epsilon": self.config.epsilon,
            "note": (
                "theta=0.8 default keeps several scales per desk-size m; "
                "nearer-1 values matter only for window coverage, which is probed, not proved"
            ),
        }
        if max_ratio:
            vals = list(max_ratio.values())
            out["ratio_spread"] = max(vals) / min(vals) if min(vals) > 0 else math.inf
        return out

    def dat_lines(self) -> list[str]:
        lines = []
        for m, r in sorted(self.summary()["max_ratio_per_m"].items(), key=lambda kv: int(kv[0])):
            lines.append(f"{m} {r!r}")
        return lines


def _sweep_cell(args) -> tuple[list, list]:
    cfg_kwargs, m, family, seed = args
    cfg = ExperimentConfig(**cfg_kwargs)
    t0 = time.perf_counter()
    rows = []
    try:
        f_raw = generate_input(cfg, family, m, seed)
        if f_raw.is_zero():
            return ([(m, cfg.theta, cfg.alpha, family, seed, 0.0, "", "", "", "", "", "", "degenerate")],
                    [(m, family, seed, (time.perf_counter() - t0) * 1000.0)])
        f0 = normalize_l1(f_raw)
        tcfg = cfg.transform_config(m)
        lo_w, hi_w = cfg.window(m)
        hm = maximal_transform(f0, tcfg)
        if not hm.is_zero():
            assert hm.sites[0] >= lo_w and hm.sites[-1] < hi_w, "support reached the window boundary"
        l1 = lp_norm(f0, 1)
        for lam in cfg.default_lambda_grid(f0, m):
            pipe = cz_pipeline(f0, cfg, m, lam)
            split = four_term_split(pipe.purged, tcfg, lam, pipe.fam_q, pipe.fam_j)
            t1, t2, t3, t4 = split_term_maximal_sups(split, tcfg)
            g = gm_ratio(split, lam, f0) if not split.g_m.is_zero() else 0.0
            ratio = lam * level_set_size(hm, lam) / l1 if not hm.is_zero() else 0.0
            rows.append((m, cfg.theta, cfg.alpha, family, seed, lam, ratio, t1, t2, t3, t4, g, "ok"))
    except Exception as exc:  # per-cell failure is report content, not a crash
        rows.append((m, cfg.theta, cfg.alpha, family, seed, "", "", "", "", "", "", "", f"error:{exc}"))
    return rows, [(m, family, seed, (time.perf_counter() - t0) * 1000.0)]


def _config_kwargs(cfg: ExperimentConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(ExperimentConfig)}

def _run_cells(worker, cells, workers: int):
    if workers > 1 and len(cells) > 1:
        with multiprocessing.Pool(workers) as pool:
            return pool.map(worker, cells)
    return [worker(c) for c in cells]


def weak11_sweep(cfg: ExperimentConfig) -> SweepReport:
    """Run the full (m, family, seed, lambda) grid and collect ratio rows.

    Families come from the comma-separated cfg.input_family; seeds are
    cfg.seed .. cfg.seed + cfg.seeds - 1.  Rows are sorted canonically so the
    result is independent of worker count.
    """
    families = [s.strip() for s in cfg.input_family.split(",") if s.strip()]
    cells = [
        (_config_kwargs(cfg), m, family, seed)
        for m in cfg.m_list
        for family in families
        for seed in range(cfg.seed, cfg.seed + cfg.seeds)
    ]
    results = _run_cells(_sweep_cell, cells, cfg.workers)
    rows, timing = [], []
    for r, t in results:
        rows.extend(r)
        timing.extend(t)
    rows.sort(key=lambda row: (row[0], str(row[3]), row[4], float(row[5]) if row[5] != "" else -1.0))
    timing.sort(key=lambda row: (row[0], str(row[1]), row[2]))
    return SweepReport(rows=rows, timing_rows=timing, config=cfg)


# ---------------------------------------------------------------------------
# oscillation-error decay curve
# ---------------------------------------------------------------------------


def er_decay_curve(cfg: ExperimentConfig, m_list=None) -> list[tuple[int, float]]:
    """||ER||_1 / ||f0||_1 across top scales for a deterministic spike input.

    The input is a unit spike; lam scales like m^-(theta - epsilon), nudged
    off the exact dyadic height so the decomposition cube clears the purge at
    every m, leaving the window-to-scale ratio as the only moving part.
    """
    out = []
    for m in m_list or cfg.m_list:
        tcfg = cfg.transform_config(m)
        f0 = LatticeFunction.delta(0, 1.0)
        lam = float(m) ** (-(cfg.theta - cfg.epsilon)) / 1.5
        pipe = cz_pipeline(f0, cfg, m, lam)
        kept = LatticeFunction.zero()
        for q in pipe.fam_q:
            kept = kept + pipe.purged.restrict_interval(q.start, q.stop)
        good = {n: kept for n in tcfg.scales}
        rep = oscillation_error(good, pipe.fam_q, pipe.fam_j, tcfg, lp_norm(pipe.f0, 1))
        out.append((m, rep.ratio))
    return out


def gm_probe_curve(cfg: ExperimentConfig, families, seeds, lam_factors=(0.5, 0.125)) -> dict:
    """Max of ||G||_2^2/(lam*||f0||_1) per top scale, over families x seeds x lam.

    lam is placed at c * sup|f0| * m^-0.9: low enough that the height cutoff
    lam*n genuinely truncates at every scale, high enough that the cubes carry
    mass; the split runs on the full decomposition so the curve probes the
    averaged-high-part bound itself, not the purge geometry.
    """
    out = {}
    for m in cfg.m_list:
        tcfg = cfg.transform_config(m)
        best = 0.0
        for family in families:
            for seed in seeds:
                f0 = normalize_l1(generate_input(cfg, family, m, seed))
                linf = lp_norm(f0, math.inf)
                dec_cache = {}
                for c in lam_factors:
                    lam = c * linf * float(m) ** (-0.9)
                    dec = dec_cache.get(lam) or cz_decompose(f0, lam)
                    dec_cache[lam] = dec
                    split = four_term_split(f0, tcfg, lam, dec.cubes)
                    if not split.g_m.is_zero():
                        best = max(best, gm_ratio(split, lam, f0))
        out[m] = best
    return out


# ---------------------------------------------------------------------------
# randomized lemma suite
# ---------------------------------------------------------------------------


@dataclass
class LemmaSuiteReport:
    rows: list  # (name, instances, violations, info)

    HEADER = ("check", "instances", "violations", "info")

    @property
    def ok(self) -> bool:
        return all(v == 0 for _, _, v, _ in self.rows)

    def text_lines(self) -> list[str]:
        out = []
        for name, n, v, info in self.rows:
            status = "PASS" if v == 0 else "FAIL"
            suffix = f" [{info}]" if info else ""
            out.append(f"{status} {name}: {v} violations in {n} instances{suffix}")
        return out


def _random_sparse(rng, max_sites=64, span=4096, scale=1.0) -> LatticeFunction:
    count = int(rng.integers(1, max_sites + 1))
    sites = np.unique(rng.integers(0, span, size=count))
    values = rng.uniform(0.05, 1.0, size=len(sites)) * scale
    return LatticeFunction(sites, values)


def _check_cz_oracle(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        f = _random_sparse(rng)
        lam = float(rng.uniform(0.2, 3.0) * f.values.mean())
        d1 = cz_decompose(f, lam)
        d2 = cz_decompose_bruteforce(f, lam)
        if list(d1.cubes) != list(d2.cubes):
            bad += 1
            continue
        bad += len(cz_invariant_violations(d1))
    return n, bad, ""


def cz_invariant_violations(dec) -> list:
    """Exact-rational checks: averages in [lam, 2*lam], f <= lam off the union."""
    out = []
    sums = _ExactSums(dec.source)
    lam_m, lam_e = _to_mantissa(dec.lam)
    for q in dec.cubes:
        if sums.cmp_avg(q, lam_m, lam_e, mult=1) < 0:
            out.append(("avg-low", q))
        if sums.cmp_avg(q, lam_m, lam_e, mult=2) > 0:
            out.append(("avg-high", q))
    for x, v in zip(dec.source.sites, dec.source.values):
        if dec.cubes.find(int(x)) is None:
            vm, ve = _to_mantissa(float(v))
            if _cmp_scaled(vm, ve, lam_m, lam_e) > 0:
                out.append(("off-union", int(x)))
    return out


def _check_key_cz(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        f = _random_sparse(rng, max_sites=48, span=2048, scale=float(rng.uniform(0.5, 20.0)))
        lam = float(rng.uniform(0.05, 0.5) * float(np.max(f.values)))
        dec = cz_decompose(f, lam)
        nn = 1 << int(rng.integers(2, 9))
        a = 1 << int(rng.integers(0, 6))
        rep = check_cube_size_bounds(f, dec, lam, nn, a)
        bad += len(rep.violations)
    return n, bad, ""


def _check_stopping(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    tcfg = TransformConfig(m=64, theta=0.5, alpha=cfg.alpha)
    bad = 0
    fired = 0
    for _ in range(n):
        lam0 = float(rng.uniform(0.5, 2.0))
        good = {}
        for nn in tcfg.scales:
            g = _random_sparse(rng, max_sites=6, span=64, scale=lam0 * nn)
            if rng.random() < 0.5:
                # spike sized to push one convolution value past the 4*lam0 bar
                mu = tcfg.measure(nn)
                w = float(mu.weights[int(rng.integers(0, len(mu)))])
                g = g + LatticeFunction.delta(0, float(rng.uniform(4.5, 8.0)) * lam0 / w)
            good[nn] = g
        betas = {nn: float(rng.uniform(0.0, lam0)) for nn in tcfg.scales}
        rep = check_stopping_max(good, betas, lam0, tcfg)
        fired += rep.hypothesis_count
        bad += len(rep.violations)
    return n, bad, f"hypothesis fired at {fired} points"


def _check_menshov(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        d = int(rng.integers(1, 1025))
        kind = rng.random()
        if kind < 0.4:
            a = rng.normal(size=d)
        elif kind < 0.7:
            a = rng.choice([-1.0, 1.0], size=d)
        else:
            a = np.zeros(d)
            spikes = rng.integers(0, d, size=max(1, d // 8))
            a[spikes] = rng.normal(size=len(spikes)) * 10.0
        if not menshov_check(a).ok:
            bad += 1
    return n, bad, ""


def _check_four_term(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    tcfg = TransformConfig(m=256, theta=0.5, alpha=cfg.alpha)
    bad = 0
    worst = 0.0
    for _ in range(n):
        f0 = normalize_l1(_random_sparse(rng, max_sites=48, span=1024))
        lam = float(rng.uniform(0.2, 4.0)) / 256.0
        dec = cz_decompose(f0, lam)
        split = four_term_split(f0, tcfg, lam, dec.cubes)
        err = split.reconstruction_error(f0)
        worst = max(worst, err)
        if err > 1e-12 * (1.0 + lp_norm(f0, math.inf)):
            bad += 1
    return n, bad, f"worst reconstruction error {worst!r}"


def _check_beta_constancy(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    tcfg = TransformConfig(m=256, theta=0.5, alpha=cfg.alpha)
    bad = 0
    for _ in range(n):
        f0 = normalize_l1(_random_sparse(rng, max_sites=24, span=512))
        lam = float(rng.uniform(0.5, 2.0)) / 256.0
        dec = cz_decompose(f0, lam)
        good = {nn: f0 for nn in tcfg.scales}
        streams = averaged_convolutions(good, dec.cubes, tcfg)
        fam_j = IntervalFamily.tiling(-2048, 4096, 6)
        for nn in tcfg.scales:
            e = conditional_expectation(streams[nn], fam_j)
            for j in fam_j:
                vals = e.to_window(j.start, j.stop)
                if not (vals == vals[0]).all():
                    bad += 1
    return n, bad, ""


def _check_exceptional(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    fam_j = IntervalFamily.tiling(0, 1 << 12, 8)
    bad = 0
    for _ in range(n):
        lam = float(rng.uniform(0.1, 2.0))
        by_a, by_s = {}, {}
        for a in (1, 2, 4):
            totals = {j: float(rng.uniform(0, 2.0 * lam * a * a)) for j in fam_j}
            if rng.random() < 0.2:
                totals[fam_j[0]] = lam * a * a  # exact-threshold case stays included
            by_a[a] = totals
        for s in (0, 1, 2):
            by_s[s] = {j: float(rng.uniform(0, 2.0 * lam)) for j in fam_j}
        sets_ = exceptional_sets(by_a, by_s, lam, fam_j, cfg.epsilon)
        if not sets_.ok():
            bad += 1
            continue
        for a, fam in sets_.by_a.items():
            for j in fam:
                if by_a[a][j] < lam * a * a:
                    bad += 1
        starts = {j.start for j in fam_j}
        for fam in list(sets_.by_a.values()) + list(sets_.by_s.values()):
            if any(j.start not in starts for j in fam):
                bad += 1
    return n, bad, ""


def _check_kernel_probes(cfg, n, seed) -> tuple[int, int, str]:
    tcfg = TransformConfig(m=256, theta=0.5, alpha=cfg.alpha)
    scales = (16, 32, 64)
    bad = 0
    consts = []
    deltas = []
    cells = 0
    for n1 in scales:
        for n2 in scales:
            if n1 == n2:
                continue
            cells += 1
            j_len = 1 << int(cfg.alpha * math.log2(min(n1, n2)))
            j = (-(j_len // 2), j_len - j_len // 2)
            kern = kernel(n1, n2, j, tcfg)
            bad += kern.support_violation_count()
            consts.append(probe_size_bound(n1, n2, j, tcfg, kern=kern))
            d, _ = probe_holder(n1, n2, j, tcfg, direction=1, kern=kern)
            deltas.append(d)
            if not d > 0:
                bad += 1
    spread = max(consts) / min(consts) if min(consts) > 0 else math.inf
    return cells, bad, f"size-constant spread {spread!r}, min delta {min(deltas)!r}"


def _check_autocorrelation(cfg, n, seed) -> tuple[int, int, str]:
    ns = [1 << k for k in range(5, 11)]
    consts = [autocorrelation_offdiag_sup(nn, cfg.alpha) for nn in ns]
    spread = max(consts) / min(consts)
    return len(ns), int(not spread <= 8.0), f"spread {spread!r}"


def _check_maximal_oracle(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        m = 1 << int(rng.integers(6, 9))
        tcfg = TransformConfig(m=m, theta=cfg.theta, alpha=cfg.alpha)
        f = _random_sparse(rng, max_sites=12, span=max(64, m // 4))
        if maximal_transform(f, tcfg) != maximal_transform_bruteforce(f, tcfg):
            bad += 1
    return n, bad, ""


def _pipeline_instance(cfg, rng, m=256):
    """A random decomposition instance rich enough to exercise bad parts."""
    tcfg = TransformConfig(m=m, theta=cfg.theta, alpha=cfg.alpha)
    f0 = normalize_l1(_random_sparse(rng, max_sites=32, span=m))
    lam = float(rng.uniform(0.5, 4.0)) / m
    dec = cz_decompose(f0, lam)
    return tcfg, f0, lam, dec


def _active_band_divisor(f0, lam, n, rng) -> int | None:
    """A dyadic height divisor whose band actually meets the values of f0."""
    idxs = band_indices(f0, lam * n)
    if not idxs:
        return None
    return int(rng.choice(idxs))


def _localized_pieces(f0, dec, lam, alpha, a, i, scales):
    """good and summed bad parts per scale at fixed (a, i)."""
    good, bads = {}, {}
    for nn in scales:
        good[nn] = good_part_sum(f0, dec, a, nn, i, lam, alpha)
        acc = LatticeFunction.zero()
        for s in valid_shrink_range(nn, a, i):
            acc = acc + bad_part(f0, dec, BadIndex(a, nn, s, i), lam, alpha)
        bads[nn] = acc
    return good, bads


def _check_bad_stopping(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    fired = 0
    er_branch = 0
    for _ in range(n):
        m = 256
        tcfg = TransformConfig(m=m, theta=cfg.theta, alpha=cfg.alpha)
        f0 = normalize_l1(_random_sparse(rng, max_sites=16, span=m))
        # heights sized so the cubes land inside the shrink classes
        lam = float(rng.uniform(0.5, 4.0)) / m
        dec = cz_decompose(f0, lam)
        mid = tcfg.scales[len(tcfg.scales) // 2]
        a = _active_band_divisor(f0, lam, mid, rng)
        if a is None:
            continue
        pick = None
        for i in (1, 2):
            good, bads = _localized_pieces(f0, dec, lam, cfg.alpha, a, i, tcfg.scales)
            if any(not b.is_zero() for b in bads.values()):
                pick = (good, bads)
                break
        if pick is None:
            continue
        good, bads = pick
        terms = {nn: convolve(tcfg.measure(nn), b) for nn, b in bads.items() if not b.is_zero()}
        nonzero = [t for t in terms.values() if not t.is_zero()]
        if not nonzero:
            continue
        lo = min(int(t.sites[0]) for t in nonzero)
        hi = max(int(t.sites[-1]) for t in nonzero) + 1
        mat = np.zeros((len(tcfg.scales), hi - lo))
        for r, nn in enumerate(tcfg.scales):
            if nn in terms:
                mat[r] = terms[nn].to_window(lo, hi)
        all_max = np.abs(np.cumsum(mat, axis=0)).max(axis=0)
        x_star = lo + int(np.argmax(all_max))
        if all_max.max() == 0.0:
            continue
        exp_j = cfg.j_length_exponent(m=m)
        j = DyadicInterval.containing(exp_j, x_star)
        # budget placed so the hypothesis genuinely fires at the running peak
        lam0 = float(all_max.max()) / 4.5
        rep = check_bad_stopping_max(bads, good, dec.cubes, j, lam0, tcfg)
        fired += rep.hypothesis_count
        er_branch += rep.er_branch_count
        bad += len(rep.violations)
    return n, bad, f"hypothesis fired at {fired} points, oscillation branch {er_branch}"


def _check_square_function(cfg, n, seed) -> tuple[int, int, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    worst_ratio = 0.0
    for _ in range(n):
        tcfg, f0, lam, dec = _pipeline_instance(cfg, rng, m=64)
        mid = tcfg.scales[len(tcfg.scales) // 2]
        a = _active_band_divisor(f0, lam, mid, rng)
        if a is None:
            continue
        i = int(rng.integers(1, 3))
        parts = {}
        for nn in tcfg.scales:
            for s in valid_shrink_range(nn, a, i):
                b = bad_part(f0, dec, BadIndex(a, nn, s, i), lam, cfg.alpha)
                if not b.is_zero():
                    parts[(nn, s)] = b
        if not parts:
            continue
        # window no shorter than the top measure span, so the diagonal split
        # keeps an off-band shell at every scale; placed over the curve image
        j = DyadicInterval.containing(6, int(mid * 1.5))
        scales = tcfg.scales
        stops_a = [scales[0] // 2] + scales
        stops_b = sorted({scales[0] // 2, scales[len(scales) // 2], scales[-1]})
        sides_a = square_function_sides(j, parts, stops_a, tcfg, epsilon=cfg.epsilon)
        sides_b = square_function_sides(j, parts, stops_b, tcfg, epsilon=cfg.epsilon)
        if (sides_a.d1, sides_a.d2, sides_a.d3) != (sides_b.d1, sides_b.d2, sides_b.d3):
            bad += 1
        if math.isfinite(sides_a.ratio):
            worst_ratio = max(worst_ratio, sides_a.ratio)
    return n, bad, f"max lhs/rhs ratio {worst_ratio!r}"


_SUITE_CHECKS = (
    ("cz-oracle", _check_cz_oracle, 60),
    ("key-cz-size", _check_key_cz, 120),
    ("stopping-max", _check_stopping, 80),
    ("bad-stopping-max", _check_bad_stopping, 30),
    ("menshov", _check_menshov, 400),
    ("four-term-reconstruction", _check_four_term, 80),
    ("beta-constancy", _check_beta_constancy, 30),
    ("exceptional-sets", _check_exceptional, 60),
    ("square-function", _check_square_function, 20),
    ("kernel-probes", _check_kernel_probes, 1),
    ("autocorrelation", _check_autocorrelation, 1),
    ("maximal-oracle", _check_maximal_oracle, 25),
)


def _suite_cell(args):
    cfg_kwargs, name, base_seed, count = args
    cfg = ExperimentConfig(**cfg_kwargs)
    fn = dict((nm, f) for nm, f, _ in _SUITE_CHECKS)[name]
    instances, violations, info = fn(cfg, count, base_seed)
    return (name, instances, violations, info)


def lemma_suite(cfg: ExperimentConfig, counts: dict | None = None) -> LemmaSuiteReport:
    """Run every randomized executable check; zero violations expected.

    counts overrides the per-check instance numbers.  Each check derives its
    own seed from (cfg.seed, check index), so results do not depend on worker
    count or execution order.
    """
    cells = []
    for idx, (name, _, default_count) in enumerate(_SUITE_CHECKS):
        count = (counts or {}).get(name, default_count)
        seed = [cfg.seed, 7919 + idx]
        cells.append((_config_kwargs(cfg), name, seed, count))
    results = _run_cells(_suite_cell, cells, cfg.workers)
    order = {name: i for i, (name, _, _) in enumerate(_SUITE_CHECKS)}
    results.sort(key=lambda row: order[row[0]])
    return LemmaSuiteReport(rows=results)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, header, rows):
    """RFC-4180 CSV (CRLF line endings), floats via repr for byte stability."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_format_cell(v) for v in row])


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO(newline="")
    w = csv.writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow([_format_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def emit_sweep(report: SweepReport, out_dir: str) -> dict:
    """Write sweep.csv, sweep_timing.csv, summary.json and ratio_vs_m.dat.

    Results and timing are separate files: the result CSV is byte-identical
    across reruns and worker counts, timing is not reproducible by nature.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "results": os.path.join(out_dir, "sweep.csv"),
        "timing": os.path.join(out_dir, "sweep_timing.csv"),
        "summary": os.path.join(out_dir, "summary.json"),
        "dat": os.path.join(out_dir, "ratio_vs_m.dat"),
    }
    write_csv(paths["results"], SweepReport.RESULT_HEADER, report.rows)
    write_csv(paths["timing"], SweepReport.TIMING_HEADER, report.timing_rows)
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["dat"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.dat_lines()) + "\n")
    return paths


def emit_lemma_suite(report: LemmaSuiteReport, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "lemma_suite.csv")
    write_csv(path, LemmaSuiteReport.HEADER, report.rows)
    return path
