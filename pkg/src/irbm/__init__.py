"""Infinite restricted Boltzmann machines with random-permutation training."""

from .model import (
    ModelParams,
    PenaltyConfig,
    ZPosterior,
    apply_permutation,
    cond_h_given_vz,
    cond_v_given_hz,
    cond_y_given_hz,
    cond_y_given_v,
    cond_y_given_vz,
    energy,
    free_energy,
    g_energy,
    marginal_h_prob,
    marginal_z_posterior,
    ordering_diagnostic,
    z_posterior,
    zero_model,
)
from .sampling import (
    FantasyChains,
    GibbsChainState,
    JointChainState,
    LabelChainState,
    PhaseSamples,
    gibbs_step_discriminative,
    gibbs_step_generative,
    gibbs_step_joint,
    run_cd,
    run_label_cd,
    run_pcd,
    sample_z_given_v,
)
from .training import (
    Gradients,
    OptimizerState,
    RegroupState,
    TrainConfig,
    Trainer,
    grad_discriminative_exact,
    grad_discriminative_sampled,
    grad_generative,
    hybrid_gradient,
    regroup_schedule_update,
    sample_permutation,
)
from .evaluation import (
    AisResult,
    EvalReport,
    InvarianceReport,
    ais_log_partition,
    check_order_invariance,
    classification_metrics,
    converted_rbm_loglik,
    effective_hidden_size,
    exact_cond_loglik,
    exact_generative_gradient,
    exact_log_partition,
    exact_loglik,
    permutation_averaged_condlik,
    permutation_averaged_loglik,
)
from .datasets import (
    Dataset,
    binarize_stochastic,
    load_mnist_idx,
    load_silhouettes,
    read_ibmp,
    synth_bars_and_stripes,
    synth_shifted_patterns,
    write_ibmp,
)

__version__ = "0.1.0"
