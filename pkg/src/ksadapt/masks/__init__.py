from .baseline import acs_lines, make_acs, make_equispaced, make_vdrs, round_half_up, vdrs_weights
from .rbicd import (
    LOSSES,
    MaskEvalRecord,
    TrainingSlice,
    alternate_optimize,
    derive_seed,
    evaluate_mask,
    image_loss,
    rb_icd_optimize,
    table1_preset,
    undersample,
    write_trace_csv,
)

__all__ = [
    "LOSSES",
    "MaskEvalRecord",
    "TrainingSlice",
    "acs_lines",
    "alternate_optimize",
    "derive_seed",
    "evaluate_mask",
    "image_loss",
    "make_acs",
    "make_equispaced",
    "make_vdrs",
    "rb_icd_optimize",
    "round_half_up",
    "table1_preset",
    "undersample",
    "vdrs_weights",
    "write_trace_csv",
]
