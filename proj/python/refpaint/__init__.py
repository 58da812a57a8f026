"""Python bindings for the refpaint inpainting library."""

from ._refpaint import (
    RefpaintError,
    Schedule,
    combine_guidance,
    copy_paste,
    cosine_distance,
    decompose,
    fit_pca,
    forward_sample,
    generate_mask,
    inpaint,
    procedural_corpus,
    run_cli,
)

__all__ = [
    "RefpaintError",
    "Schedule",
    "combine_guidance",
    "copy_paste",
    "cosine_distance",
    "decompose",
    "fit_pca",
    "forward_sample",
    "generate_mask",
    "inpaint",
    "procedural_corpus",
    "run_cli",
]
