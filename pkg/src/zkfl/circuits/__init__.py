from .gadgets import (
    Cmp,
    assert_abs_le,
    gadget_cmp,
    gadget_lookup,
    gadget_merkle_root,
    gadget_mod,
    gadget_num2bits,
    gadget_signmag,
    gadget_sponge,
)
from .protocol import (
    COST_CHECKS,
    WEIGHT_CHECKS,
    CostCircuitParams,
    CostPublics,
    WeightCircuitParams,
    WeightPublics,
    build_cost_circuit,
    build_weight_circuit,
    count_cost_constraints,
    count_weight_constraints,
    fixed_point_cost,
    gen_cost_witness,
    gen_weight_witness,
    weight_from_inverse,
)
from .r1cs import (
    LC,
    Circuit,
    ConstraintSystem,
    MalformedProofError,
    Verdict,
    Witness,
    WitnessError,
    cs_verify,
)

__all__ = [
    "Cmp",
    "assert_abs_le",
    "gadget_cmp",
    "gadget_lookup",
    "gadget_merkle_root",
    "gadget_mod",
    "gadget_num2bits",
    "gadget_signmag",
    "gadget_sponge",
    "COST_CHECKS",
    "WEIGHT_CHECKS",
    "CostCircuitParams",
    "CostPublics",
    "WeightCircuitParams",
    "WeightPublics",
    "build_cost_circuit",
    "build_weight_circuit",
    "count_cost_constraints",
    "count_weight_constraints",
    "fixed_point_cost",
    "gen_cost_witness",
    "gen_weight_witness",
    "weight_from_inverse",
    "LC",
    "Circuit",
    "ConstraintSystem",
    "MalformedProofError",
    "Verdict",
    "Witness",
    "WitnessError",
    "cs_verify",
]
