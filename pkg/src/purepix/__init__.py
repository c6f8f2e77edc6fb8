"""Pure-pixel search for hyperspectral unmixing via greedy self-dictionary
pursuit, with simultaneous model-order selection."""

from .greedy import (
    RankDeficiencyError,
    SelectionStep,
    SelectionTrace,
    SompConfig,
    correlation_scores,
    greedy_select,
    orthogonal_residual,
    projected_norm_scores,
    run_sd_somp,
    stopping_rule_1,
    stopping_rule_2,
)
from .harness import SceneSpec, SweepRow, UnmixResult, UnmixSettings, run_trial, sweep, trial_seed, unmix
from .metrics import detection, detection_probability, format_model_order, model_order_stats, mrsa
from .model import (
    AbundanceMatrix,
    AffineFit,
    EndmemberMatrix,
    IndexSet,
    MixingInstance,
    PixelMatrix,
    denoise_affine,
    embed_affine,
    fit_affine_set,
    generate_synthetic,
    load_matrix,
    nearest_pure_indices,
    project_affine,
    random_spectra,
    save_matrix,
    snr_to_sigma,
    synthetic_library,
)
from .noise import delta_from_epsilon, estimate_noise
from .oracle import TheoryDiagnostics, compute_d_s, diagnostics, recovery_error, solve_sdmmv_bruteforce
from .simplexls import SimplexLsSolution, kkt_residual, project_to_simplex, solve_simplex_ls, solve_simplex_ls_batch

__version__ = "0.1.0"
