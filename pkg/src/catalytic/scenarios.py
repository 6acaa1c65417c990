"""Protocols, the step runner, and the three worked observer scenarios.

cat: A records the spin in z, then B measures A in the Cat basis {(U+D), (U-D)}.
dog: A's own deduction after seeing up, starting from (up, Ubar, B).
pet: A records the spin in z, then B measures the spin in the x basis.

Agents are two-level record registers whose ready state is their first label.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Mapping, Union

import numpy as np

from .measurement import (
    ObserverRegister,
    catalytic_premeasure,
    collapse,
    joint_born,
    premeasure,
)
from .statevec import Basis, LayoutError, StateVector, SystemLayout, make_product_state


class ProtocolError(ValueError):
    pass


def _fmt(z: complex) -> str:
    return f"({z.real!r},{z.imag!r})"


@dataclass(frozen=True)
class Prepare:
    subsystem: str
    vector: tuple[complex, ...]
    label: str | None = None

    kind = "prepare"

    def describe(self) -> str:
        what = self.label if self.label is not None else "[" + ", ".join(_fmt(z) for z in self.vector) + "]"
        return f"prepare {self.subsystem} {what}"


@dataclass(frozen=True)
class Premeasure:
    target: str
    basis: Basis
    register: ObserverRegister

    kind = "measure"

    @property
    def observer(self) -> str:
        return self.register.subsystem

    def describe(self) -> str:
        return f"measure {self.target} in {self.basis.name} record {self.observer} using {self.register.basis.name}"


@dataclass(frozen=True)
class CatalyticPremeasure:
    agent: str
    basis: Basis
    register: ObserverRegister

    kind = "catmeasure"

    @property
    def observer(self) -> str:
        return self.register.subsystem

    def describe(self) -> str:
        return f"catmeasure {self.agent} in {self.basis.name} record {self.observer} using {self.register.basis.name}"


@dataclass(frozen=True)
class Collapse:
    target: str
    basis: Basis

    kind = "collapse"

    def describe(self) -> str:
        return f"collapse {self.target} in {self.basis.name}"


@dataclass(frozen=True)
class Report:
    subsystems: tuple[str, ...]
    bases: tuple[Basis, ...]

    kind = "report"

    def describe(self) -> str:
        return f"report {' '.join(self.subsystems)} in {' '.join(b.name for b in self.bases)}"


Step = Union[Prepare, Premeasure, CatalyticPremeasure, Collapse, Report]


@dataclass(frozen=True)
class Protocol:
    """A layout, its named bases, and the steps to run.

    ``history`` is optional: steps that actually happened before the
    prepared state, unknown to the agents (see :mod:`catalytic.prediction`).
    It is ignored by :func:`run_protocol`.
    """

    layout: SystemLayout
    bases: Mapping[str, Basis] = field(default_factory=dict)
    steps: tuple = ()
    history: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bases", dict(self.bases))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "history", tuple(self.history))
        validate(self)

    @property
    def has_collapse(self) -> bool:
        return any(isinstance(s, Collapse) for s in self.steps)


@dataclass(frozen=True)
class ReportTable:
    subsystems: tuple[str, ...]
    bases: tuple[str, ...]
    probabilities: dict[tuple[str, ...], float]


@dataclass(frozen=True)
class TraceEntry:
    kind: str
    description: str
    state: StateVector
    reports: tuple[ReportTable, ...] = ()


@dataclass
class Trace:
    entries: list[TraceEntry] = field(default_factory=list)

    @property
    def final(self) -> StateVector:
        return self.entries[-1].state

    @property
    def kinds(self) -> list[str]:
        return [e.kind for e in self.entries]

    @property
    def reports(self) -> list[ReportTable]:
        return [r for e in self.entries for r in e.reports]

    def __len__(self) -> int:
        return len(self.entries)


def _check_basis_ref(p: Protocol, basis: Basis, on: str) -> None:
    if p.bases.get(basis.name) != basis:
        raise ProtocolError(f"basis {basis.name!r} is not registered with the protocol")
    if basis.subsystem != on:
        raise ProtocolError(f"basis {basis.name!r} is declared on {basis.subsystem!r}, used on {on!r}")
    if on not in p.layout:
        raise ProtocolError(f"undeclared subsystem {on!r}")
    if basis.dim != p.layout.dim_of(on):
        raise ProtocolError(f"basis {basis.name!r} has dimension {basis.dim}, {on!r} has {p.layout.dim_of(on)}")


def _check_step(p: Protocol, step) -> None:
    if isinstance(step, Prepare):
        if step.subsystem not in p.layout:
            raise ProtocolError(f"undeclared subsystem {step.subsystem!r}")
        if len(step.vector) != p.layout.dim_of(step.subsystem):
            raise ProtocolError(f"prepare vector for {step.subsystem!r} has wrong length")
        if not any(step.vector):
            raise ProtocolError(f"prepare vector for {step.subsystem!r} is zero")
    elif isinstance(step, (Premeasure, CatalyticPremeasure)):
        target = step.target if isinstance(step, Premeasure) else step.agent
        _check_basis_ref(p, step.basis, target)
        _check_basis_ref(p, step.register.basis, step.observer)
        if step.observer == target:
            raise ProtocolError(f"{target!r} cannot record its own measurement")
        if len(step.register.record_labels) != step.basis.dim:
            raise ProtocolError(f"register {step.register.basis.name!r} cannot hold {step.basis.dim} outcomes")
    elif isinstance(step, Collapse):
        _check_basis_ref(p, step.basis, step.target)
    elif isinstance(step, Report):
        if len(step.subsystems) != len(step.bases) or not step.subsystems:
            raise ProtocolError("report needs one basis per subsystem")
        if len(set(step.subsystems)) != len(step.subsystems):
            raise ProtocolError("report lists a subsystem twice")
        for s, b in zip(step.subsystems, step.bases):
            _check_basis_ref(p, b, s)
    else:
        raise ProtocolError(f"unknown step {step!r}")


def _check_prologue(steps) -> None:
    started = False
    for s in steps:
        if isinstance(s, Prepare):
            if started:
                raise ProtocolError("prepare steps must come before all other steps")
        else:
            started = True


def validate(p: Protocol) -> None:
    for name, b in p.bases.items():
        if name != b.name:
            raise ProtocolError(f"basis registered as {name!r} is named {b.name!r}")
        if b.subsystem not in p.layout:
            raise ProtocolError(f"basis {name!r} on undeclared subsystem {b.subsystem!r}")
    for seq in (p.history, p.steps):
        _check_prologue(seq)
        for s in seq:
            _check_step(p, s)
    if any(isinstance(s, Report) for s in p.history):
        raise ProtocolError("history cannot contain report steps")


def ground_factors(layout: SystemLayout) -> list[np.ndarray]:
    out = []
    for _, d in layout.subsystems:
        v = np.zeros(d, dtype=complex)
        v[0] = 1.0
        out.append(v)
    return out


def apply_step(state: StateVector, step, rng: np.random.Generator | None = None) -> tuple[StateVector, tuple[ReportTable, ...]]:
    """Advance ``state`` by one non-prepare step."""
    if isinstance(step, Premeasure):
        return premeasure(state, step.target, step.basis, step.register), ()
    if isinstance(step, CatalyticPremeasure):
        return catalytic_premeasure(state, step.agent, step.basis, step.register), ()
    if isinstance(step, Collapse):
        if rng is None:
            raise ProtocolError("collapse step requires a seed")
        _, post = collapse(state, step.target, step.basis, rng)
        return post, ()
    if isinstance(step, Report):
        table = joint_born(state, list(zip(step.subsystems, step.bases)))
        return state, (ReportTable(step.subsystems, tuple(b.name for b in step.bases), table),)
    raise ProtocolError(f"cannot apply {step!r} to an evolving state")


def run_steps(state: StateVector, steps, rng: np.random.Generator | None = None) -> StateVector:
    for s in steps:
        state, _ = apply_step(state, s, rng)
    return state


def prepared_state(layout: SystemLayout, steps) -> StateVector:
    """Product state from the leading prepare steps; others start in their first basis vector."""
    factors = ground_factors(layout)
    for s in steps:
        if not isinstance(s, Prepare):
            break
        factors[layout.index(s.subsystem)] = np.array(s.vector, dtype=complex)
    return make_product_state(layout, factors)


def run_protocol(p: Protocol, rng_seed: int | None = None) -> Trace:
    if p.has_collapse and rng_seed is None:
        raise ProtocolError("protocol contains collapse steps; a seed is required")
    rng = np.random.Generator(np.random.PCG64(rng_seed)) if rng_seed is not None else None
    layout = p.layout
    factors = ground_factors(layout)
    state = make_product_state(layout, factors)
    trace = Trace([TraceEntry("init", "init", state)])
    for step in p.steps:
        if isinstance(step, Prepare):
            factors[layout.index(step.subsystem)] = np.array(step.vector, dtype=complex)
            state = make_product_state(layout, factors)
            reports = ()
        else:
            state, reports = apply_step(state, step, rng)
        trace.entries.append(TraceEntry(step.kind, step.describe(), state, reports))
    return trace


# -- built-in scenarios ------------------------------------------------------

R2 = 1 / sqrt(2)

SPIN_LAYOUT = SystemLayout.of(("spin", 2), ("A", 2), ("B", 2))


def spin_bases() -> tuple[Basis, Basis]:
    z = Basis("z", "spin", ("up", "down"), np.eye(2))
    x = Basis("x", "spin", ("right", "left"), [[R2, R2], [R2, -R2]])
    return z, x


def agent_bases(up: str = "U", down: str = "D") -> tuple[Basis, Basis]:
    rec = Basis("rec", "A", (up, down), np.eye(2))
    cat = Basis("cat", "A", ("even", "odd"), [[R2, R2], [R2, -R2]])
    return rec, cat


def cat_protocol() -> Protocol:
    z, x = spin_bases()
    rec, cat = agent_bases()
    yn = Basis("yn", "B", ("Y", "N"), np.eye(2))
    steps = (
        Prepare("spin", (complex(R2), complex(R2)), "right"),
        Premeasure("spin", z, ObserverRegister.standard(rec)),
        CatalyticPremeasure("A", cat, ObserverRegister.standard(yn)),
        Report(("spin", "A", "B"), (z, rec, yn)),
    )
    return Protocol(SPIN_LAYOUT, {b.name: b for b in (z, x, rec, cat, yn)}, steps)


def dog_protocol() -> Protocol:
    z, x = spin_bases()
    rec, cat = agent_bases("Ubar", "Dbar")
    yn = Basis("yn", "B", ("Y", "N"), np.eye(2))
    history = (
        Prepare("spin", (complex(R2), complex(R2)), "right"),
        Premeasure("spin", z, ObserverRegister.standard(rec)),
    )
    steps = (
        Prepare("spin", (1 + 0j, 0j), "up"),
        Prepare("A", (1 + 0j, 0j), "Ubar"),
        CatalyticPremeasure("A", cat, ObserverRegister.standard(yn)),
        Report(("spin",), (z,)),
    )
    return Protocol(SPIN_LAYOUT, {b.name: b for b in (z, x, rec, cat, yn)}, steps, history)


def pet_protocol() -> Protocol:
    z, x = spin_bases()
    rec, cat = agent_bases()
    rl = Basis("rl", "B", ("R", "L"), np.eye(2))
    steps = (
        Prepare("spin", (complex(R2), complex(R2)), "right"),
        Premeasure("spin", z, ObserverRegister.standard(rec)),
        Premeasure("spin", x, ObserverRegister.standard(rl)),
        Report(("spin", "A", "B"), (z, rec, rl)),
    )
    return Protocol(SPIN_LAYOUT, {b.name: b for b in (z, x, rec, cat, rl)}, steps)


def _entry(step, state: StateVector, reports=()) -> TraceEntry:
    return TraceEntry(step.kind, step.describe(), state, tuple(reports))


def _report(step: Report, state: StateVector) -> ReportTable:
    return ReportTable(step.subsystems, tuple(b.name for b in step.bases),
                       joint_born(state, list(zip(step.subsystems, step.bases))))


def _run_fixed(p: Protocol) -> Trace:
    # Direct calls into the measurement layer, independent of run_protocol.
    steps = p.steps
    layout = p.layout
    state = make_product_state(layout, [[1, 0]] * len(layout))
    trace = Trace([TraceEntry("init", "init", state)])
    factors = {name: [1, 0] for name in layout.names}
    for step in steps:
        if isinstance(step, Prepare):
            factors[step.subsystem] = list(step.vector)
            state = make_product_state(layout, [factors[n] for n in layout.names])
            trace.entries.append(_entry(step, state))
        elif isinstance(step, Premeasure):
            state = premeasure(state, step.target, step.basis, step.register)
            trace.entries.append(_entry(step, state))
        elif isinstance(step, CatalyticPremeasure):
            state = catalytic_premeasure(state, step.agent, step.basis, step.register)
            trace.entries.append(_entry(step, state))
        elif isinstance(step, Report):
            trace.entries.append(_entry(step, state, [_report(step, state)]))
        else:
            raise LayoutError(f"scenario step {step!r} not supported")
    return trace


def run_cat() -> Trace:
    return _run_fixed(cat_protocol())


def run_dog() -> Trace:
    return _run_fixed(dog_protocol())


def run_pet() -> Trace:
    return _run_fixed(pet_protocol())


def with_second_look(p: Protocol, agent: str = "A", target: str = "spin", basis: str = "z") -> Protocol:
    """Append the agent's second measurement of ``target``, recorded in a fresh register.

    The fresh register is a new subsystem ``<agent>2`` with labels copied from the
    agent's record basis.
    """
    second = f"{agent}2"
    rec = next(s.register.basis for s in p.steps
               if isinstance(s, Premeasure) and s.observer == agent)
    layout = SystemLayout(p.layout.subsystems + ((second, rec.dim),))
    rec2 = Basis(f"{rec.name}2", second, rec.labels, rec.vectors)
    z = p.bases[basis]
    steps = [s for s in p.steps if not isinstance(s, Report)]
    steps.append(Premeasure(target, z, ObserverRegister.standard(rec2)))
    steps.append(Report((agent, second), (rec, rec2)))
    bases = dict(p.bases)
    bases[rec2.name] = rec2
    return Protocol(layout, bases, tuple(steps), p.history)


def flip_probabilities(trace: Trace) -> dict[str, float]:
    """P(second record != first record | first record), from the last report.

    The report must be over (agent, fresh register) with identical label sets.
    """
    table = trace.reports[-1].probabilities
    out = {}
    for first in dict.fromkeys(k[0] for k in table):
        row = {k[1]: p for k, p in table.items() if k[0] == first}
        total = sum(row.values())
        out[first] = float("nan") if total == 0 else 1 - row[first] / total
    return out
