"""Surround-view panorama stitching."""

from ._core import (
    Error,
    bucketize,
    cylindrical_project,
    default_config,
    estimate_pair,
    four_pt_to_matrix,
    load_run,
    psnr,
    render_ground_truth,
    ssim,
    stitch,
    stitch_dir,
    synth,
)

__all__ = [
    "Error",
    "bucketize",
    "cylindrical_project",
    "default_config",
    "estimate_pair",
    "four_pt_to_matrix",
    "load_run",
    "psnr",
    "render_ground_truth",
    "ssim",
    "stitch",
    "stitch_dir",
    "synth",
]
