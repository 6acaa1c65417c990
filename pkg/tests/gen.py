"""Random protocol generator shared by the property tests."""
import numpy as np

from catalytic.measurement import ObserverRegister
from catalytic.scenarios import (
    CatalyticPremeasure,
    Collapse,
    Premeasure,
    Prepare,
    Protocol,
    Report,
)
from catalytic.statevec import Basis, SystemLayout

from conftest import random_unitary, random_vector


def random_protocol(rng, spare=None, collapse=True, history=False, reports=True):
    """3-4 subsystems of dimension 2 or 3, random bases, fresh observers.

    ``spare`` names a subsystem that is never catalytically measured.
    """
    n = int(rng.integers(3, 5))
    names = [f"s{i}" for i in range(n)]
    dims = [int(rng.integers(2, 4)) for _ in names]
    layout = SystemLayout(tuple(zip(names, dims)))
    bases = {}
    std, rnd = {}, {}
    for name, d in zip(names, dims):
        std[name] = Basis(f"{name}std", name, tuple(f"{name}k{i}" for i in range(d)), np.eye(d))
        rnd[name] = Basis(f"{name}rot", name, tuple(f"{name}r{i}" for i in range(d)), random_unitary(rng, d).T)
        bases[std[name].name] = std[name]
        bases[rnd[name].name] = rnd[name]

    def prepares(pool):
        out = []
        for name in pool:
            if rng.random() < 0.5:
                if rng.random() < 0.5:
                    b = rnd[name]
                    lab = b.labels[int(rng.integers(b.dim))]
                    out.append(Prepare(name, tuple(complex(z) for z in b.vector(lab)), lab))
                else:
                    v = random_vector(rng, layout.dim_of(name))
                    out.append(Prepare(name, tuple(complex(z) for z in v)))
        return out

    prepared = prepares(names)
    used = {p.subsystem for p in prepared}
    steps = list(prepared)
    for _ in range(int(rng.integers(0, 5))):
        kind = rng.choice(["measure", "catmeasure", "collapse"] if collapse else ["measure", "catmeasure"])
        target = names[int(rng.integers(n))]
        basis = rnd[target] if rng.random() < 0.7 else std[target]
        if kind == "collapse":
            steps.append(Collapse(target, basis))
            used.add(target)
            continue
        if kind == "catmeasure" and target == spare:
            continue
        observers = [o for o in names if o not in used and o != target and layout.dim_of(o) >= layout.dim_of(target)]
        if not observers:
            continue
        obs = observers[int(rng.integers(len(observers)))]
        reg = ObserverRegister.standard(std[obs], layout.dim_of(target))
        cls = Premeasure if kind == "measure" else CatalyticPremeasure
        steps.append(cls(target, basis, reg))
        used.update((target, obs))
    if reports:
        k = int(rng.integers(1, n + 1))
        chosen = list(rng.permutation(names)[:k])
        steps.append(Report(tuple(chosen), tuple(rnd[c] if rng.random() < 0.5 else std[c] for c in chosen)))
    hist = []
    if history:
        hist = prepares(names)
        if rng.random() < 0.5:
            t, o = names[0], names[-1]
            if layout.dim_of(o) >= layout.dim_of(t):
                hist.append(Premeasure(t, std[t], ObserverRegister.standard(std[o], layout.dim_of(t))))
    return Protocol(layout, bases, tuple(steps), tuple(hist))
