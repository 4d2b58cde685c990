"""Grasp learning from single-view point clouds."""

from ._core import (
    DegenerateConditional,
    FormatError,
    HandModel,
    InvalidState,
    ModelStore,
    PointCloud,
    Scene,
    curvature_features,
    default_params,
    estimate_normals,
    eval_vmf_pair,
    geometric_success,
    load_ply,
    look_at,
    save_ply,
    select_contacts,
    set_thread_count,
    simulate_depth_view,
    thread_count,
    vmf_log_normalizer,
    write_synthetic_demos,
)

__all__ = [name for name in dir() if not name.startswith("_")]
