"""Observers as quantum subsystems: pre-measurement, catalytic measurement and Assumption Q."""
from .measurement import (
    ObserverRegister,
    OutcomeDistribution,
    born,
    catalytic_premeasure,
    collapse,
    joint_born,
    premeasure,
    sample,
)
from .scenarios import Protocol, Trace, run_cat, run_dog, run_pet, run_protocol
from .statevec import (
    Basis,
    Branch,
    StateVector,
    SystemLayout,
    apply_unitary,
    branch_decompose,
    fidelity,
    inner_product,
    make_product_state,
    norm,
)

__version__ = "0.1.0"
