"""Lipschitz filters, multi-bump perturbations and torus-action sections on sampled grids."""

from ._lipfilter import (
    BumpLayout,
    FilterPlan,
    GridSpec,
    LipfilterError,
    SampledFunction,
    apply_filter,
    break_invariance,
    convex_feasibility,
    is_lipschitz,
    lipschitz_constant,
    load_lfn,
    local_modulus,
    make_layout,
    make_plan,
    mcshane_extend,
    multibump_decode,
    multibump_encode,
    property_ids,
    random_lipschitz,
    run_verify,
    save_lfn,
    section_audit,
    torus_shift,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
