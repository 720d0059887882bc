"""Discrete rough Hilbert transform along fractional-power curves.

Sparse functions on Z, curve measures, truncated/maximal transforms,
Calderon-Zygmund machinery, stopping times, window kernels, square-function
reductions, and an experiment harness probing every asserted bound.
"""

from .lattice import (
    DyadicInterval,
    IntervalFamily,
    LatticeFunction,
    band,
    conditional_expectation,
    hl_maximal,
    lp_norm,
    truncate_split,
)
from .measures import (
    BumpFunction,
    PointMassMeasure,
    antisymmetric_part,
    autocorrelation_offdiag_sup,
    curve_measure,
    default_bump,
    reflect,
    window_bump,
)
from .operators import (
    TransformConfig,
    convolve,
    four_term_split,
    level_set_size,
    maximal_transform,
    maximal_transform_bruteforce,
    partial_sum,
    weak_l1_ratio,
)
from .czdecomp import (
    BadIndex,
    CZDecomposition,
    bad_part,
    check_cube_size_bounds,
    cube_family,
    cz_decompose,
    cz_decompose_bruteforce,
    good_part,
    good_part_sum,
    purge_small_cubes,
    scale_good_part,
    surviving_cubes,
)
from .stopping import (
    StoppingSequence,
    build_beta,
    check_bad_stopping_max,
    check_stopping_max,
    exceptional_sets,
    oscillation_error,
    stopping_times,
)
from .kernels import (
    BilinearKernel,
    averaged_kernel_holder,
    diagonal_split,
    kernel,
    probe_holder,
    probe_size_bound,
)
from .squarefn import dyadic_block_sums, menshov_check, square_function_sides
from .experiments import (
    ExperimentConfig,
    cz_pipeline,
    er_decay_curve,
    generate_input,
    lemma_suite,
    normalize_l1,
    read_function,
    weak11_sweep,
    write_function,
)

__version__ = "0.1.0"
