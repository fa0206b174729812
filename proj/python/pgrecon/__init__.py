"""Gap filling of gridded temperature stacks.

Arrays cross the boundary as (C, H, W) float32 with NaN marking missing observations; masks are
(C, H, W) bool.
"""

from ._core import (
    ConfigError,
    InitError,
    LoadError,
    Model,
    NumericError,
    PreconditionError,
    evaluate,
    fit,
    gen_scene,
    gradcheck,
    holdout_split,
    load_scene,
    read_tsk,
    resample_bilinear,
    save_scene,
    set_num_threads,
    write_tsk,
)

__all__ = [
    "ConfigError",
    "InitError",
    "LoadError",
    "Model",
    "NumericError",
    "PreconditionError",
    "evaluate",
    "fit",
    "gen_scene",
    "gradcheck",
    "holdout_split",
    "load_scene",
    "read_tsk",
    "resample_bilinear",
    "save_scene",
    "set_num_threads",
    "write_tsk",
]
