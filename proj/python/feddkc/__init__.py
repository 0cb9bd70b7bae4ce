"""Knowledge refinement and federated distillation simulator."""

from ._core import (
    FeddkcError,
    __version__,
    compare,
    cross_entropy,
    dirichlet_partition,
    generalized_kkr_refine,
    kkr_closed_form,
    kkr_refine,
    kkr_refine_probs,
    kl_divergence,
    peak_probability,
    refine,
    run,
    shannon_entropy,
    skr_refine,
    softmax,
    synth_blobs,
    validate_config,
)
