"""Cellularity regression toolkit: PK metric, lossless rotation, tiny CNNs."""

from ._cellpk import (
    Model,
    average_pk,
    bootstrap_average_pk,
    fuse,
    kendall_tau_b,
    pk,
    presets,
    read_ppm,
    rotate_lossless,
    rotate_right_angle,
    sample_session_angles,
    synthesize_patch,
    t_test,
    write_ppm,
)

__all__ = [
    "Model",
    "average_pk",
    "bootstrap_average_pk",
    "fuse",
    "kendall_tau_b",
    "pk",
    "presets",
    "read_ppm",
    "rotate_lossless",
    "rotate_right_angle",
    "sample_session_angles",
    "synthesize_patch",
    "t_test",
    "write_ppm",
]
