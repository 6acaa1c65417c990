"""Dense tensor-product Hilbert spaces.

Amplitudes are indexed row-major over the layout's subsystem order: the last
subsystem varies fastest.  Every value here is immutable; operations return
new objects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
# branches lighter than this have no meaningful residual direction
ZERO_WEIGHT = 1e-24


class LayoutError(ValueError):
    pass


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class SystemLayout:
    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(n), int(d)) for n, d in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        names = [n for n, _ in subs]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate subsystem names in {names}")
        for name, dim in subs:
            if dim < 2:
                raise LayoutError(f"subsystem {name!r} has dimension {dim} < 2")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "SystemLayout":
        return cls(tuple(pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.subsystems else 1

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"unknown subsystem {name!r}") from None

    def dim_of(self, name: str) -> int:
        return self.subsystems[self.index(name)][1]

    def without(self, name: str) -> "SystemLayout":
        i = self.index(name)
        return SystemLayout(self.subsystems[:i] + self.subsystems[i + 1:])

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.subsystems)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes over a layout.  Use :meth:`normalized` to build from raw data."""

    layout: SystemLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dim:
            raise StateError(f"expected {self.layout.dim} amplitudes, got {amps.size}")
        n = np.linalg.norm(amps)
        if abs(n - 1.0) > NORM_TOL:
            raise StateError(f"state norm {n!r} differs from 1")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, layout: SystemLayout, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = np.linalg.norm(amps)
        if n == 0:
            raise StateError("cannot normalize the zero vector")
        return cls(layout, amps / n)

    @classmethod
    def basis_state(cls, layout: SystemLayout, indices: Sequence[int]) -> "StateVector":
        amps = np.zeros(layout.dim, dtype=complex)
        amps[np.ravel_multi_index(tuple(indices), layout.dims)] = 1.0
        return cls(layout, amps)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def amplitude(self, indices: Sequence[int]) -> complex:
        return complex(self.tensor()[tuple(indices)])

    def __repr__(self) -> str:
        return f"StateVector({list(self.layout.subsystems)}, {np.array2string(self.amplitudes, precision=4)})"


@dataclass(frozen=True, eq=False)
class Basis:
    """Labelled orthonormal basis of one subsystem.  Rows of ``vectors`` are the basis kets."""

    name: str
    subsystem: str
    labels: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=complex)
        labels = tuple(self.labels)
        if vecs.ndim != 2 or vecs.shape[0] != vecs.shape[1]:
            raise LayoutError(f"basis {self.name!r}: need a square array of vectors, got shape {vecs.shape}")
        if len(labels) != vecs.shape[0]:
            raise LayoutError(f"basis {self.name!r}: {len(labels)} labels for {vecs.shape[0]} vectors")
        if len(set(labels)) != len(labels):
            raise LayoutError(f"basis {self.name!r}: duplicate labels")
        if np.any(vecs.imag):
            gram = vecs.conj() @ vecs.T
        else:
            # .real is a strided view; BLAS needs a contiguous copy
            re = np.ascontiguousarray(vecs.real)
            gram = re @ re.T
        if not np.allclose(gram, np.eye(len(labels)), atol=NORM_TOL, rtol=0):
            raise LayoutError(f"basis {self.name!r} is not orthonormal")
        vecs.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def computational(cls, subsystem: str, labels: Sequence[str], name: str | None = None) -> "Basis":
        return cls(name or f"{subsystem}_std", subsystem, tuple(labels), np.eye(len(labels)))

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"basis {self.name!r} has no label {label!r}") from None

    def vector(self, label: str) -> np.ndarray:
        return self.vectors[self.index(label)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Basis):
            return NotImplemented
        return (
            self.name == other.name
            and self.subsystem == other.subsystem
            and self.labels == other.labels
            and np.array_equal(self.vectors, other.vectors)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Branch:
    label: str
    weight: float
    residual: StateVector
    # False when weight is zero and ``residual`` is an arbitrary placeholder
    defined: bool = True


def make_product_state(layout: SystemLayout, factors: Sequence) -> StateVector:
    if len(factors) != len(layout):
        raise LayoutError(f"{len(factors)} factors for {len(layout)} subsystems")
    amps = np.ones(1, dtype=complex)
    for (name, dim), f in zip(layout.subsystems, factors):
        f = np.asarray(f, dtype=complex).reshape(-1)
        if f.size != dim:
            raise LayoutError(f"factor for {name!r} has length {f.size}, expected {dim}")
        if not np.any(f):
            raise StateError(f"factor for {name!r} is zero")
        amps = np.kron(amps, f)
    return StateVector.normalized(layout, amps)


def _check_basis(state: StateVector, subsystem: str, basis: Basis) -> int:
    axis = state.layout.index(subsystem)
    if basis.subsystem != subsystem:
        raise LayoutError(f"basis {basis.name!r} belongs to {basis.subsystem!r}, not {subsystem!r}")
    if basis.dim != state.layout.dims[axis]:
        raise LayoutError(f"basis {basis.name!r} has dimension {basis.dim}, subsystem {subsystem!r} has {state.layout.dims[axis]}")
    return axis


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=tol, rtol=0))


def apply_unitary(state: StateVector, targets: Sequence[str], matrix) -> StateVector:
    """Apply ``matrix`` to the joint space of ``targets`` (in the given order)."""
    layout = state.layout
    axes = [layout.index(t) for t in targets]
    if len(set(axes)) != len(axes):
        raise LayoutError(f"repeated target in {list(targets)}")
    m = np.asarray(matrix, dtype=complex)
    tdim = int(np.prod([layout.dims[a] for a in axes]))
    if m.shape != (tdim, tdim):
        raise LayoutError(f"matrix shape {m.shape} does not match target dimension {tdim}")
    if not is_unitary(m):
        raise StateError("matrix is not unitary")
    psi = np.moveaxis(state.tensor(), axes, range(len(axes)))
    psi = (m @ psi.reshape(tdim, -1)).reshape(psi.shape)
    # the constructor re-checks the norm
    return StateVector(layout, np.moveaxis(psi, range(len(axes)), axes))


def apply_diagonal(state: StateVector, target: str, phases) -> StateVector:
    """Multiply amplitudes by unit-modulus ``phases`` along one subsystem."""
    axis = state.layout.index(target)
    ph = np.asarray(phases, dtype=complex).reshape(-1)
    if ph.size != state.layout.dims[axis]:
        raise LayoutError(f"{ph.size} phases for subsystem {target!r} of dimension {state.layout.dims[axis]}")
    if not np.allclose(np.abs(ph), 1.0, atol=UNITARY_TOL, rtol=0):
        raise StateError("diagonal entries must have unit modulus")
    shape = [1] * len(state.layout)
    shape[axis] = ph.size
    return StateVector(state.layout, state.tensor() * ph.reshape(shape))


def branch_decompose(state: StateVector, subsystem: str, basis: Basis) -> list[Branch]:
    axis = _check_basis(state, subsystem, basis)
    rest_layout = state.layout.without(subsystem)
    psi = np.moveaxis(state.tensor(), axis, 0).reshape(basis.dim, -1)
    coeffs = basis.vectors.conj() @ psi
    branches = []
    for label, c in zip(basis.labels, coeffs):
        w = float(np.vdot(c, c).real)
        if w <= ZERO_WEIGHT:
            placeholder = np.zeros(rest_layout.dim, dtype=complex)
            placeholder[0] = 1.0
            branches.append(Branch(label, 0.0, StateVector(rest_layout, placeholder), defined=False))
        else:
            branches.append(Branch(label, w, StateVector.normalized(rest_layout, c)))
    return branches


def _same_layout(a: StateVector, b: StateVector) -> None:
    if a.layout != b.layout:
        raise LayoutError("states live on different layouts")


def inner_product(a: StateVector, b: StateVector) -> complex:
    _same_layout(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def norm(state: StateVector) -> float:
    return float(np.linalg.norm(state.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    return min(1.0, abs(inner_product(a, b)) ** 2)


def states_close(a: StateVector, b: StateVector, atol: float = 1e-12) -> bool:
    return a.layout == b.layout and bool(np.allclose(a.amplitudes, b.amplitudes, atol=atol, rtol=0))


def embed(layout: SystemLayout, factors: Iterable[tuple[str, np.ndarray]]) -> np.ndarray:
    """Dense full-space operator: Kronecker product with identity on unnamed subsystems."""
    ops = dict(factors)
    full = np.ones((1, 1), dtype=complex)
    for name, dim in layout.subsystems:
        full = np.kron(full, ops.get(name, np.eye(dim)))
    return full
