"""Agent predictions under Assumption Q, with and without the catalytic condition.

``predict_q`` evolves the agent's believed state through the steps it knows
about and reads off the Born distribution.  ``predict_q_star`` refuses to
conclude anything when the agent itself is catalytically measured in the
prediction interval.

A measurement of the agent is catalytic when its basis mixes the agent's
record states.  For registers with more than two records this diagonality
test is one possible formalization, not the only one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measurement import OutcomeDistribution, born, project
from .scenarios import (
    CatalyticPremeasure,
    Collapse,
    Premeasure,
    Prepare,
    Protocol,
    ProtocolError,
    Report,
    prepared_state,
    run_steps,
)
from .statevec import Basis, StateVector

CATALYTIC_REASON = "catalytic measurement on agent in interval"
CERTAIN_TOL = 1e-10
DIAGONAL_TOL = 1e-6

AGREEMENT = "AGREEMENT"
DEVIATION = "DEVIATION"
CONTRADICTION = "CONTRADICTION"
ABSTAINED = "ABSTAINED"


class KnowledgeError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionTarget:
    subsystem: str
    basis: Basis
    time: int | None = None


@dataclass(frozen=True)
class KnowledgeModel:
    agent: str
    believed_state: StateVector
    known_future_steps: tuple = ()
    target: PredictionTarget | None = None
    # basis holding the agent's records; defaults to the computational basis
    record_basis: Basis | None = None
    rng_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "known_future_steps", tuple(self.known_future_steps))
        if self.target is None:
            raise KnowledgeError("knowledge model needs a prediction target")
        layout = self.believed_state.layout
        if self.agent not in layout:
            raise KnowledgeError(f"agent {self.agent!r} not in the believed layout")
        if self.target.subsystem not in layout:
            raise KnowledgeError(f"target {self.target.subsystem!r} not in the believed layout")
        if any(isinstance(s, Prepare) for s in self.known_future_steps):
            raise KnowledgeError("prepare steps cannot occur inside the prediction interval")


@dataclass(frozen=True)
class Prediction:
    target: PredictionTarget
    distribution: OutcomeDistribution | None
    certain_outcome: str | None
    valid: bool = True
    invalid_reason: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    status: str
    tv_distance: float | None
    certain_outcome: str | None = None
    # actual probability of the asserted certain outcome
    actual_probability: float | None = None
    reason: str | None = None
    actual: OutcomeDistribution | None = field(default=None, compare=False)


def _record_basis(k: KnowledgeModel) -> Basis:
    if k.record_basis is not None:
        return k.record_basis
    d = k.believed_state.layout.dim_of(k.agent)
    return Basis.computational(k.agent, [str(i) for i in range(d)])


def predict_q(k: KnowledgeModel) -> Prediction:
    """Unmodified rule: always claims a distribution, certain when it is."""
    rng = None if k.rng_seed is None else np.random.Generator(np.random.PCG64(k.rng_seed))
    if rng is None and any(isinstance(s, Collapse) for s in k.known_future_steps):
        raise KnowledgeError("known steps include a collapse; the knowledge model needs a seed")
    evolved = run_steps(k.believed_state, k.known_future_steps, rng)
    dist = born(evolved, k.target.subsystem, k.target.basis)
    return Prediction(k.target, dist, dist.certain(CERTAIN_TOL), True, None)


def is_catalytic(step, agent: str, record_basis: Basis | None = None, tol: float = DIAGONAL_TOL) -> bool:
    """True for a catalytic pre-measurement of ``agent`` whose basis mixes its records."""
    if not isinstance(step, CatalyticPremeasure) or step.agent != agent:
        return False
    if record_basis is None:
        return True
    overlaps = np.abs(record_basis.vectors.conj() @ step.basis.vectors.T) ** 2
    # each measured vector should sit on a single record state
    mixing = 1.0 - overlaps.max(axis=0)
    return bool(mixing.max() > tol)


def catalytic_interval_check(k: KnowledgeModel, actual_steps: Sequence, tol: float = DIAGONAL_TOL) -> bool:
    """True when no step in the interval catalytically measures the agent."""
    rec = _record_basis(k)
    return not any(is_catalytic(s, k.agent, rec, tol) for s in actual_steps)


def predict_q_star(k: KnowledgeModel, actual_steps: Sequence, tol: float = DIAGONAL_TOL) -> Prediction:
    if not catalytic_interval_check(k, actual_steps, tol):
        return Prediction(k.target, None, None, False, CATALYTIC_REASON)
    return predict_q(k)


def validate(p: Prediction, actual: OutcomeDistribution, tol: float = CERTAIN_TOL) -> ValidationReport:
    if p.distribution is not None and set(p.distribution.labels) != set(actual.labels):
        raise KnowledgeError(f"outcome labels differ: {p.distribution.labels} vs {actual.labels}")
    if not p.valid:
        return ValidationReport(ABSTAINED, None, reason=p.invalid_reason, actual=actual)
    tv = p.distribution.tv_distance(actual)
    if p.certain_outcome is not None:
        got = actual[p.certain_outcome]
        if got < 1 - tol:
            return ValidationReport(CONTRADICTION, tv, p.certain_outcome, got,
                                    f"asserted {p.certain_outcome!r} with certainty, actual probability {got:.12g}",
                                    actual=actual)
        return ValidationReport(AGREEMENT if tv <= tol else DEVIATION, tv, p.certain_outcome, got, actual=actual)
    return ValidationReport(AGREEMENT if tv <= tol else DEVIATION, tv, actual=actual)


# -- protocols as knowledge -------------------------------------------------

@dataclass(frozen=True)
class Assessment:
    knowledge: KnowledgeModel
    prediction: Prediction
    report: ValidationReport
    naive: bool


def _agent_record_basis(p: Protocol, agent: str) -> Basis | None:
    for s in p.history + p.steps:
        if isinstance(s, (Premeasure, CatalyticPremeasure)) and s.observer == agent:
            return s.register.basis
    for b in p.bases.values():
        if b.subsystem == agent:
            return b
    return None


def knowledge_from_protocol(p: Protocol, agent: str, rng_seed: int | None = None) -> KnowledgeModel:
    """The agent believes the prepared state and knows every later step.

    The target is the first (subsystem, basis) pair of the last report step.
    """
    if agent not in p.layout:
        raise KnowledgeError(f"unknown agent {agent!r}")
    reports = [s for s in p.steps if isinstance(s, Report)]
    if not reports:
        raise KnowledgeError("protocol has no report step naming a prediction target")
    last = reports[-1]
    body = [s for s in p.steps if not isinstance(s, (Prepare, Report))]
    target = PredictionTarget(last.subsystems[0], last.bases[0], len(p.steps))
    return KnowledgeModel(agent, prepared_state(p.layout, p.steps), tuple(body), target,
                          _agent_record_basis(p, agent), rng_seed)


def actual_distribution(p: Protocol, k: KnowledgeModel) -> OutcomeDistribution:
    """What really happens to the target, seen from the agent's record.

    The true past is ``p.history`` when present, else the prepared state.  If
    the agent's belief puts it in a definite record state, the final state is
    conditioned on the agent still holding that record.
    """
    rng = None if k.rng_seed is None else np.random.Generator(np.random.PCG64(k.rng_seed))
    if p.history:
        state = run_steps(prepared_state(p.layout, p.history),
                          [s for s in p.history if not isinstance(s, Prepare)], rng)
    else:
        state = k.believed_state
    state = run_steps(state, k.known_future_steps, rng)
    rec = _record_basis(k)
    label = born(k.believed_state, k.agent, rec).certain(CERTAIN_TOL)
    if label is not None:
        _, state = project(state, k.agent, rec, label)
    return born(state, k.target.subsystem, k.target.basis)


def assess(p: Protocol, agent: str, naive: bool = False, rng_seed: int | None = None) -> Assessment:
    if p.has_collapse and rng_seed is None:
        raise ProtocolError("protocol contains collapse steps; a seed is required")
    k = knowledge_from_protocol(p, agent, rng_seed)
    actual_steps = list(k.known_future_steps)
    pred = predict_q(k) if naive else predict_q_star(k, actual_steps)
    return Assessment(k, pred, validate(pred, actual_distribution(p, k)), naive)
