"""Generalised robustness quantifiers with exact programs, PPT lower bounds and see-saw upper bounds."""
from .api import (controlled_blocks, rob_behaviour, rob_buscemi, rob_incompat_generalised,
                  rob_teleport_choi)
from .exact import behaviour_lp, rob_incompat_standard, rob_teleport_classical_inputs
from .results import RobustnessResult, Witness
from .witness import (assemblage_witness_to_choi, check_assemblage_witness, check_behaviour_witness,
                      check_buscemi_witness,
                      check_incompat_witness, check_teleport_witness, witness_lift)

__all__ = [
    "RobustnessResult", "Witness", "assemblage_witness_to_choi", "behaviour_lp", "check_assemblage_witness",
    "check_behaviour_witness", "check_buscemi_witness", "check_incompat_witness", "check_teleport_witness", "controlled_blocks",
    "rob_behaviour", "rob_buscemi", "rob_incompat_generalised", "rob_incompat_standard",
    "rob_teleport_choi", "rob_teleport_classical_inputs", "witness_lift",
]
