"""Measurement as unitary pre-measurement (dilation) and as Born-rule collapse.

Pre-measurement entangles the basis states of a target with orthogonal record
states of an observer register; nothing collapses.  Collapse samples an outcome
with a seeded PCG64 generator (numpy's default bit generator), so a given seed
always reproduces the same outcome sequence.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .statevec import (
    NORM_TOL,
    Basis,
    LayoutError,
    StateError,
    StateVector,
    _check_basis,
)

READY_TOL = 1e-8


class ObserverNotReady(StateError):
    pass


@dataclass(frozen=True)
class ObserverRegister:
    """Record states of an observer subsystem, named by labels of ``basis``."""

    basis: Basis
    ready_label: str
    record_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "record_labels", tuple(self.record_labels))
        self.basis.index(self.ready_label)
        for lab in self.record_labels:
            self.basis.index(lab)
        if len(set(self.record_labels)) != len(self.record_labels):
            raise LayoutError("record labels must be distinct")

    @classmethod
    def standard(cls, basis: Basis, outcomes: int | None = None) -> "ObserverRegister":
        """Ready state is the first label; outcome k is recorded in the k-th label."""
        n = basis.dim if outcomes is None else outcomes
        if n > basis.dim:
            raise LayoutError(f"register {basis.name!r} has {basis.dim} states, {n} outcomes requested")
        return cls(basis, basis.labels[0], basis.labels[:n])

    @property
    def subsystem(self) -> str:
        return self.basis.subsystem


@dataclass(frozen=True)
class OutcomeDistribution:
    entries: Mapping[str, float]

    def __post_init__(self):
        total = sum(self.entries.values())
        if any(p < -NORM_TOL or p > 1 + NORM_TOL for p in self.entries.values()):
            raise StateError(f"probability out of range in {dict(self.entries)}")
        if abs(total - 1.0) > NORM_TOL:
            raise StateError(f"probabilities sum to {total!r}")

    def __getitem__(self, label: str) -> float:
        return self.entries[label]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def certain(self, tol: float = 1e-10) -> str | None:
        for label, p in self.entries.items():
            if p >= 1 - tol:
                return label
        return None

    def tv_distance(self, other: "OutcomeDistribution") -> float:
        keys = set(self.entries) | set(other.entries)
        return 0.5 * sum(abs(self.entries.get(k, 0.0) - other.entries.get(k, 0.0)) for k in keys)


def dilation_unitary(basis: Basis, register: ObserverRegister) -> np.ndarray:
    """Controlled permutation on (target, observer): |b_k>|ready> -> |b_k>|record_k>.

    For each outcome k the observer's register basis is permuted by the
    transposition (ready, record_k), so the map is unitary on the whole space.
    """
    if len(register.record_labels) != basis.dim:
        raise LayoutError(f"{basis.dim} outcomes but {len(register.record_labels)} record labels")
    reg = register.basis
    r = reg.vectors.T  # columns are register kets
    ready = reg.index(register.ready_label)
    dt, do = basis.dim, reg.dim
    u = np.zeros((dt * do, dt * do), dtype=complex)
    for k, rec_label in enumerate(register.record_labels):
        rec = reg.index(rec_label)
        perm = np.eye(do)
        perm[[ready, rec]] = perm[[rec, ready]]
        q = r @ perm @ r.conj().T
        proj = np.outer(basis.vectors[k], basis.vectors[k].conj())
        u += np.kron(proj, q)
    return u


def observer_ready(state: StateVector, register: ObserverRegister) -> float:
    """Population of the observer's ready state."""
    return born(state, register.subsystem, register.basis)[register.ready_label]


def _premeasure(state: StateVector, target: str, basis: Basis, register: ObserverRegister) -> StateVector:
    _check_basis(state, target, basis)
    _check_basis(state, register.subsystem, register.basis)
    if register.subsystem == target:
        raise LayoutError(f"{target!r} cannot record its own measurement")
    ready = observer_ready(state, register)
    if ready < 1 - READY_TOL:
        raise ObserverNotReady(
            f"observer {register.subsystem!r} is not in ready state {register.ready_label!r} (population {ready:.3g})"
        )
    if len(register.record_labels) != basis.dim:
        raise LayoutError(f"{basis.dim} outcomes but {len(register.record_labels)} record labels")
    # Same map as dilation_unitary, without building the dense matrix: the
    # transposition (ready, record_k) is the reflection I - w w^dag, w = r_ready - r_k.
    layout = state.layout
    t_ax, o_ax = layout.index(target), layout.index(register.subsystem)
    psi = np.moveaxis(state.tensor(), [t_ax, o_ax], [0, 1])
    shape = psi.shape
    coeffs = (basis.vectors.conj() @ psi.reshape(shape[0], -1)).reshape(shape[0], shape[1], -1)
    reg = register.basis
    r_ready = reg.vector(register.ready_label)
    for k, rec_label in enumerate(register.record_labels):
        if rec_label == register.ready_label:
            continue
        w = r_ready - reg.vector(rec_label)
        coeffs[k] -= np.outer(w, w.conj() @ coeffs[k])
    out = (basis.vectors.T @ coeffs.reshape(shape[0], -1)).reshape(shape)
    return StateVector(layout, np.moveaxis(out, [0, 1], [t_ax, o_ax]))


def premeasure(state: StateVector, target: str, basis: Basis, observer: ObserverRegister) -> StateVector:
    return _premeasure(state, target, basis, observer)


def catalytic_premeasure(state: StateVector, agent: str, cat_basis: Basis, observer: ObserverRegister) -> StateVector:
    """Pre-measure an agent in a basis that superposes its record states.

    Same unitary as :func:`premeasure`; kept separate so traces and predictions
    can tell the two apart.
    """
    return _premeasure(state, agent, cat_basis, observer)


def _rotated_probabilities(state: StateVector, targets: Sequence[tuple[str, Basis]]) -> np.ndarray:
    psi = state.tensor()
    axes = []
    for name, basis in targets:
        ax = _check_basis(state, name, basis)
        if ax in axes:
            raise LayoutError(f"subsystem {name!r} listed twice")
        axes.append(ax)
        psi = np.moveaxis(np.tensordot(basis.vectors.conj(), psi, axes=([1], [ax])), 0, ax)
    probs = np.abs(psi) ** 2
    rest = tuple(i for i in range(psi.ndim) if i not in axes)
    probs = probs.sum(axis=rest)
    # summed array keeps the kept axes in increasing order; reorder to the request
    order = np.argsort(np.argsort(axes))
    return np.transpose(probs, order) if probs.ndim > 1 else probs


def born(state: StateVector, target: str, basis: Basis) -> OutcomeDistribution:
    probs = _rotated_probabilities(state, [(target, basis)])
    probs = probs / probs.sum()
    return OutcomeDistribution(dict(zip(basis.labels, (float(p) for p in probs))))


def joint_born(state: StateVector, targets: Sequence[tuple[str, Basis]]) -> dict[tuple[str, ...], float]:
    """Joint outcome table over several subsystems, keys in row-major label order."""
    probs = _rotated_probabilities(state, targets)
    labels = [b.labels for _, b in targets]
    out = {}
    for idx in np.ndindex(*probs.shape):
        out[tuple(labels[i][j] for i, j in enumerate(idx))] = float(probs[idx])
    return out


def project(state: StateVector, target: str, basis: Basis, label: str) -> tuple[float, StateVector]:
    """Probability of ``label`` and the normalized post-measurement state."""
    axis = _check_basis(state, target, basis)
    v = basis.vector(label)
    psi = np.moveaxis(state.tensor(), axis, 0)
    coeff = np.tensordot(v.conj(), psi, axes=([0], [0]))
    weight = float(np.vdot(coeff, coeff).real)
    if weight <= 0:
        raise StateError(f"outcome {label!r} has probability zero")
    out = np.multiply.outer(v, coeff)
    return weight, StateVector.normalized(state.layout, np.moveaxis(out, 0, axis))


def conditional_born(
    state: StateVector, target: str, basis: Basis, given: tuple[str, Basis, str]
) -> OutcomeDistribution:
    """Distribution of ``target`` conditioned on ``given`` = (subsystem, basis, label)."""
    _, post = project(state, *given)
    return born(post, target, basis)


def _generator(rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(int(rng)))


def _pick(probs: np.ndarray, u):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)


def collapse(
    state: StateVector, target: str, basis: Basis, rng: int | np.random.Generator
) -> tuple[str, StateVector]:
    """Sample one outcome; an int seeds a fresh PCG64 generator.

    Draws exactly one uniform from the generator, so sharing a generator
    across calls gives the same sequence as :func:`sample`.
    """
    dist = born(state, target, basis)
    probs = np.array([dist[l] for l in basis.labels])
    k = int(_pick(probs, _generator(rng).random()))
    label = basis.labels[k]
    _, post = project(state, target, basis, label)
    return label, post


def sample(
    state: StateVector, target: str, basis: Basis, shots: int, rng: int | np.random.Generator
) -> list[str]:
    dist = born(state, target, basis)
    probs = np.array([dist[l] for l in basis.labels])
    picks = _pick(probs, _generator(rng).random(shots))
    return [basis.labels[k] for k in picks]
