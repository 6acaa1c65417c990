"""How hard is it to measure an observer in a Cat basis?

* the exchange operator swapping an n-qubit agent's all-zeros and all-ones records,
* a von Neumann needle coupled to it through the needle momentum, h = lam * p * Pi,
* the oscillator parity operator exp[i pi/2 (a x^2 + p^2/a - 1)] (hbar = 1) and
  its truncated Taylor series,
* a Monte-Carlo look at how per-qubit dephasing scrambles Cat-basis records.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .measurement import ObserverRegister, joint_born, premeasure
from .statevec import Basis, StateVector, SystemLayout, apply_diagonal, make_product_state


class FeasibilityError(ValueError):
    pass


@dataclass(frozen=True)
class MacroAgent:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise FeasibilityError("agent needs at least one qubit")

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def macro_U(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    @property
    def macro_D(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[-1] = 1.0
        return v

    def cat(self, sign: int = +1) -> np.ndarray:
        return (self.macro_U + sign * self.macro_D) / np.sqrt(2)


def exchange_permutation(agent: MacroAgent) -> np.ndarray:
    """Index map of the all-qubit bit flip: i -> i XOR (2^n - 1)."""
    return np.arange(agent.dim) ^ (agent.dim - 1)


def exchange_operator(agent: MacroAgent) -> np.ndarray:
    """Pi = X^{(x) n}.  Off span{U, D} this is our chosen extension."""
    pi = np.zeros((agent.dim, agent.dim))
    pi[exchange_permutation(agent), np.arange(agent.dim)] = 1.0
    return pi


# -- von Neumann needle -------------------------------------------------------

@dataclass(frozen=True)
class NeedleModel:
    lattice_size: int = 64
    spacing: float = 1.0
    coupling: float = 1.0
    duration: float = 0.0

    def __post_init__(self):
        L = self.lattice_size
        if L < 8 or L & (L - 1):
            raise FeasibilityError(f"lattice size must be a power of two >= 8, got {L}")
        if self.spacing <= 0:
            raise FeasibilityError("spacing must be positive")

    @property
    def displacement(self) -> float:
        return self.coupling * self.duration

    @property
    def shift_sites(self) -> float:
        return self.displacement / self.spacing


def needle_wavenumbers(needle: NeedleModel) -> np.ndarray:
    """Eigenvalues of the lattice momentum, in numpy FFT order."""
    return 2 * np.pi * np.fft.fftfreq(needle.lattice_size, d=needle.spacing)


def needle_momentum(needle: NeedleModel) -> np.ndarray:
    """Dense periodic-lattice momentum, diagonal in the discrete Fourier basis."""
    L = needle.lattice_size
    f = np.fft.fft(np.eye(L), axis=0) / np.sqrt(L)
    return f.conj().T @ np.diag(needle_wavenumbers(needle)) @ f


def needle_layout(agent: MacroAgent, needle: NeedleModel) -> SystemLayout:
    return SystemLayout(tuple((f"q{i}", 2) for i in range(agent.n)) + (("needle", needle.lattice_size),))


def needle_state(agent: MacroAgent, needle: NeedleModel, agent_vector, site: int = 0) -> StateVector:
    pos = np.zeros(needle.lattice_size, dtype=complex)
    pos[site % needle.lattice_size] = 1.0
    layout = needle_layout(agent, needle)
    return StateVector.normalized(layout, np.kron(np.asarray(agent_vector, dtype=complex), pos))


def needle_hamiltonian(needle: NeedleModel, agent: MacroAgent) -> np.ndarray:
    """h = lam * Pi (x) p on agent (x) needle; dense, for reference only."""
    return needle.coupling * np.kron(exchange_operator(agent), needle_momentum(needle))


def needle_evolution(needle: NeedleModel, agent: MacroAgent, joint_state: StateVector,
                     exact_translation: bool = True) -> StateVector:
    """exp(-i t lam p Pi) via the Pi = +-1 eigenspaces.

    The +1 part of the needle moves by +lam*t, the -1 part by -lam*t, with
    periodic wraparound.  ``exact_translation`` requires an integer site shift
    and uses a plain roll; otherwise the Fourier phases are applied.
    """
    L = needle.lattice_size
    if joint_state.layout.dim != agent.dim * L or joint_state.layout.dims[-1] != L:
        raise FeasibilityError("joint layout must be the agent qubits followed by the needle lattice")
    psi = joint_state.amplitudes.reshape(agent.dim, L)
    flipped = psi[exchange_permutation(agent)]
    plus, minus = (psi + flipped) / 2, (psi - flipped) / 2
    s = needle.shift_sites
    if exact_translation:
        if abs(s - round(s)) > 1e-12:
            raise FeasibilityError(f"lam*t = {needle.displacement} is not a whole number of sites")
        j = int(round(s))
        out = np.roll(plus, j, axis=1) + np.roll(minus, -j, axis=1)
    else:
        phase = np.exp(-1j * needle_wavenumbers(needle) * needle.displacement)
        out = (np.fft.ifft(np.fft.fft(plus, axis=1) * phase, axis=1)
               + np.fft.ifft(np.fft.fft(minus, axis=1) * phase.conj(), axis=1))
    return StateVector(joint_state.layout, out.reshape(-1))


def needle_distribution(state: StateVector) -> np.ndarray:
    """Probability of each needle site, summed over the agent."""
    L = state.layout.dims[-1]
    return (np.abs(state.amplitudes.reshape(-1, L)) ** 2).sum(axis=0)


# -- parity operator ----------------------------------------------------------

@dataclass(frozen=True)
class ParityModel:
    N: int = 16
    a: float = 1.0

    def __post_init__(self):
        if self.N < 8:
            raise FeasibilityError(f"truncation N must be >= 8, got {self.N}")
        if self.a <= 0:
            raise FeasibilityError("a must be positive")

    @property
    def half(self) -> int:
        return self.N // 2


def lowering(N: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, N)), 1).astype(complex)


def position(model: ParityModel) -> np.ndarray:
    """x in the number basis of the oscillator with mass a and unit frequency."""
    b = lowering(model.N)
    return (b + b.conj().T) / np.sqrt(2 * model.a)


def momentum(model: ParityModel) -> np.ndarray:
    b = lowering(model.N)
    return 1j * np.sqrt(model.a / 2) * (b.conj().T - b)


def parity_generator(model: ParityModel) -> np.ndarray:
    """a x^2 + p^2/a - 1, truncated.  Equals 2n except at the top level."""
    x, p = position(model), momentum(model)
    g = model.a * x @ x + p @ p / model.a - np.eye(model.N)
    return (g + g.conj().T) / 2


def parity_matrix(model: ParityModel) -> np.ndarray:
    w, v = np.linalg.eigh(parity_generator(model))
    return (v * np.exp(1j * np.pi / 2 * w)) @ v.conj().T


def _low(m: np.ndarray, h: int) -> np.ndarray:
    return m[:h, :h]


def parity_anticommutators(model: ParityModel) -> tuple[float, float]:
    """Largest |element| of {P, x} and {P, p} on the lower half-block."""
    P, x, p = parity_matrix(model), position(model), momentum(model)
    h = model.half
    return (float(np.abs(_low(P @ x + x @ P, h)).max()),
            float(np.abs(_low(P @ p + p @ P, h)).max()))


@dataclass(frozen=True)
class TaylorTruncation:
    order: int
    matrix: np.ndarray
    unitarity_defect: float
    distance_to_exact: float


def parity_taylor_truncation(model: ParityModel, k: int) -> TaylorTruncation:
    """sum_{j<=k} (i pi/2)^j G^j / j!, with defects measured on the lower half-block (spectral norm)."""
    if k < 0:
        raise FeasibilityError("order must be non-negative")
    g = parity_generator(model)
    step = 1j * np.pi / 2 * g
    term = np.eye(model.N, dtype=complex)
    total = term.copy()
    for j in range(1, k + 1):
        term = term @ step / j
        total = total + term
    h = model.half
    low = _low(total, h)
    defect = float(np.linalg.norm(low.conj().T @ low - np.eye(h), 2))
    distance = float(np.linalg.norm(low - _low(parity_matrix(model), h), 2))
    return TaylorTruncation(k, total, defect, distance)


def taylor_sweep(model: ParityModel, orders) -> list[TaylorTruncation]:
    return [parity_taylor_truncation(model, k) for k in orders]


def taylor_term_bound(model: ParityModel, k: int) -> float:
    """Size of the first omitted term on the lower half-block: theta^(k+1)/(k+1)!."""
    theta = np.pi / 2 * 2 * (model.half - 1)
    return float(theta ** (k + 1) / factorial(k + 1))


# -- dephasing of Cat records ------------------------------------------------

BLOCK = 4096


@dataclass(frozen=True)
class DephasingReport:
    n: int
    p: float
    trials: int
    seed: int
    # marginal of the Cat-basis outcome, from the sampled trials
    cat_outcomes: dict
    coherence: float
    coherence_exact: float
    distortion: float
    distortion_exact: float
    # standard error of ``coherence``
    sigma: float


@lru_cache(maxsize=16)
def _macro_register(n: int) -> tuple[Basis, Basis]:
    agent = MacroAgent(n)
    d = agent.dim
    labels = ["U"] + [f"c{i}" for i in range(1, d - 1)] + ["D"]
    rec = Basis("rec", "A", labels, np.eye(d))
    vecs = np.eye(d, dtype=complex)
    vecs[0] = agent.cat(+1)
    vecs[-1] = agent.cat(-1)
    cat_labels = ["even"] + labels[1:-1] + ["odd"]
    return rec, Basis("cat", "A", cat_labels, vecs)


def phase_flip_signs(agent: MacroAgent, qubits) -> np.ndarray:
    """Diagonal of Z on each listed qubit (qubit 0 is the most significant bit)."""
    idx = np.arange(agent.dim)
    sign = np.ones(agent.dim)
    for q in qubits:
        sign *= np.where((idx >> (agent.n - 1 - q)) & 1, -1.0, 1.0)
    return sign


def dephased_table(n: int, flipped_qubits=()) -> dict:
    """Joint (Cat outcome, spin x) table after A records the spin and the given qubits phase-flip."""
    agent = MacroAgent(n)
    rec, cat = _macro_register(n)
    layout = SystemLayout.of(("spin", 2), ("A", agent.dim))
    z = Basis("z", "spin", ("up", "down"), np.eye(2))
    x = Basis("x", "spin", ("right", "left"), np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    state = make_product_state(layout, [[1, 1], agent.macro_U])
    state = premeasure(state, "spin", z, ObserverRegister(rec, "U", ("U", "D")))
    state = apply_diagonal(state, "A", phase_flip_signs(agent, flipped_qubits))
    return joint_born(state, [("A", cat), ("spin", x)])


def cat_measurement_dephasing(n: int, p: float, trials: int = 100_000, seed: int = 0) -> DephasingReport:
    """Spin right -> agent records it in macro_U/macro_D -> each qubit phase-flips
    with probability p -> the agent is read in the Cat basis alongside the spin
    in x.  Without noise the Cat outcome (even/odd) matches the spin (right/left)
    exactly; ``distortion`` is the total-variation distance of the sampled joint
    statistics from that noiseless baseline.

    Trials run in blocks of 4096, block b seeded by SeedSequence([seed, b]), so
    the result does not depend on the order blocks are evaluated in.
    """
    if not 1 <= n <= 12:
        raise FeasibilityError(f"n must be in 1..12, got {n}")
    if not 0 <= p <= 0.5:
        raise FeasibilityError(f"p must be in [0, 1/2], got {p}")
    if trials < 1:
        raise FeasibilityError("need at least one trial")
    # on span{U, D} a set of Z flips only flips the sign of D, so the parity decides
    tables = [dephased_table(n), dephased_table(n, [0])]
    keys = list(tables[0])
    cdfs = [np.cumsum([t[k] for k in keys]) for t in tables]
    counts = np.zeros(len(keys), dtype=np.int64)
    for b in range(-(-trials // BLOCK)):
        m = min(BLOCK, trials - b * BLOCK)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, b])))
        parity = (rng.random((m, n)) < p).sum(axis=1) % 2
        u = rng.random(m)
        for par in (0, 1):
            sel = u[parity == par]
            cdf = cdfs[par].copy()
            cdf[-1] = 1.0
            picks = np.minimum(np.searchsorted(cdf, sel, side="right"), len(keys) - 1)
            counts += np.bincount(picks, minlength=len(keys))
    freq = {k: c / trials for k, c in zip(keys, counts)}
    baseline = tables[0]
    agree = freq[("even", "right")] + freq[("odd", "left")]
    disagree = freq[("even", "left")] + freq[("odd", "right")]
    distortion = 0.5 * sum(abs(freq[k] - baseline[k]) for k in keys)
    c_exact = (1 - 2 * p) ** n
    marg: dict = {}
    for (c, _), f in freq.items():
        if c in ("even", "odd") or f > 0:
            marg[c] = marg.get(c, 0.0) + f
    return DephasingReport(
        n=n, p=p, trials=trials, seed=seed,
        cat_outcomes=marg,
        coherence=float(agree - disagree),
        coherence_exact=float(c_exact),
        distortion=float(distortion),
        distortion_exact=float((1 - c_exact) / 2),
        sigma=float(2 * np.sqrt(disagree * (1 - disagree) / trials)),
    )
