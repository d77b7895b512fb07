"""Size and power simulation: cross-room null pairs, copy injection, synthetic exams."""

from .copying import (
    copy_positions,
    cross_room_pair_count,
    inject_batch,
    inject_copy,
    sample_cross_room_pairs,
)
from .rng import stream
from .scenarios import (
    SCENARIOS,
    Scenario,
    build_scenario,
    generate_synthetic,
    get_scenario,
    list_scenarios,
    parse_synthetic_spec,
    random_nominal_model,
)
from .sim_loop import Simulator, as_table, calibrated_cut, holds_size, power_curve, size_bound, type1_rate

__all__ = [
    "SCENARIOS",
    "Scenario",
    "Simulator",
    "as_table",
    "build_scenario",
    "calibrated_cut",
    "copy_positions",
    "cross_room_pair_count",
    "generate_synthetic",
    "get_scenario",
    "holds_size",
    "inject_batch",
    "inject_copy",
    "list_scenarios",
    "parse_synthetic_spec",
    "power_curve",
    "random_nominal_model",
    "sample_cross_room_pairs",
    "size_bound",
    "stream",
    "type1_rate",
]
