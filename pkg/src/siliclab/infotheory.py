"""Executable finite-distribution information theory.

Entropy, KL divergence, mutual information, independence checks,
predictor-vs-baseline certificates and distinguishability witnesses,
all over explicit outcome->mass tables.  Logarithms are base 2
throughout, so every information quantity is in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

MASS_TOL = 1e-9

Label = Hashable


class DistributionError(ValueError):
    """Raised for inputs that are not valid finite distributions."""


def _safe_term(p: float) -> float:
    # 0*log(0) = 0 convention
    if p <= 0.0:
        return 0.0
    return -p * math.log2(p)


@dataclass(frozen=True)
class FiniteDistribution:
    """A probability distribution over an ordered finite set of labels."""

    outcomes: tuple[Label, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        if len(self.outcomes) != len(self.masses):
            raise DistributionError("outcomes and masses length mismatch")
        if len(self.outcomes) == 0:
            raise DistributionError("empty distribution")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise DistributionError("outcome labels must be unique")
        for m in self.masses:
            if not math.isfinite(m) or m < 0.0:
                raise DistributionError(f"invalid mass {m!r}")
        total = math.fsum(self.masses)
        if abs(total - 1.0) > MASS_TOL:
            raise DistributionError(f"masses sum to {total}, not 1")

    @classmethod
    def from_pairs(cls, pairs: Mapping[Label, float] | Sequence[tuple[Label, float]]) -> "FiniteDistribution":
        items = list(pairs.items()) if isinstance(pairs, Mapping) else list(pairs)
        return cls(tuple(o for o, _ in items), tuple(float(m) for _, m in items))

    def mass(self, outcome: Label) -> float:
        try:
            return self.masses[self.outcomes.index(outcome)]
        except ValueError:
            return 0.0

    @property
    def support(self) -> tuple[Label, ...]:
        return tuple(o for o, m in zip(self.outcomes, self.masses) if m > 0.0)

    def items(self):
        return zip(self.outcomes, self.masses)

    def to_text(self) -> str:
        """Serialize as one ``label<TAB>mass`` pair per line (>=12 significant digits)."""
        return "".join(f"{o}\t{m:.15g}\n" for o, m in self.items())

    @classmethod
    def from_text(cls, text: str) -> "FiniteDistribution":
        pairs = []
        for line in text.splitlines():
            if not line.strip():
                continue
            label, mass = line.split("\t")
            pairs.append((label, float(mass)))
        return cls.from_pairs(pairs)


@dataclass(frozen=True)
class JointRun:
    """A joint distribution over (state-label, observable-label) pairs."""

    dist: FiniteDistribution

    def __post_init__(self):
        for o in self.dist.outcomes:
            if not (isinstance(o, tuple) and len(o) == 2):
                raise DistributionError(f"joint outcome {o!r} is not a pair")

    @classmethod
    def from_pairs(cls, pairs) -> "JointRun":
        return cls(FiniteDistribution.from_pairs(pairs))

    @property
    def left_labels(self) -> tuple[Label, ...]:
        seen = []
        for (x, _), _m in self.dist.items():
            if x not in seen:
                seen.append(x)
        return tuple(seen)

    @property
    def right_labels(self) -> tuple[Label, ...]:
        seen = []
        for (_, y), _m in self.dist.items():
            if y not in seen:
                seen.append(y)
        return tuple(seen)

    def swap(self) -> "JointRun":
        return JointRun.from_pairs([((y, x), m) for (x, y), m in self.dist.items()])


@dataclass(frozen=True)
class Predictor:
    """A total mapping from state-labels to predicted observable-labels."""

    mapping: Mapping[Label, Label]

    def __call__(self, x: Label) -> Label:
        return self.mapping[x]


@dataclass(frozen=True)
class NonIndependenceCertificate:
    """Witness that a joint run is not a product of its marginals."""

    accuracy: float
    baseline: float
    gap: float
    cell: tuple[Label, Label]
    cell_deviation: float
    deviation_bound: float


def entropy(dist: FiniteDistribution) -> float:
    """Shannon entropy in bits."""
    return math.fsum(_safe_term(m) for m in dist.masses)


def _check_same_universe(p: FiniteDistribution, q: FiniteDistribution):
    if p.outcomes != q.outcomes:
        raise DistributionError("distributions live on different outcome universes")


def kl_divergence(p: FiniteDistribution, q: FiniteDistribution) -> float:
    """D(P || Q) in bits; +inf when P puts mass where Q has none."""
    _check_same_universe(p, q)
    total = 0.0
    for pm, qm in zip(p.masses, q.masses):
        if pm <= 0.0:
            continue
        if qm <= 0.0:
            return math.inf
        total += pm * math.log2(pm / qm)
    return total


def marginals(joint: JointRun) -> tuple[FiniteDistribution, FiniteDistribution]:
    left: dict[Label, float] = {}
    right: dict[Label, float] = {}
    for (x, y), m in joint.dist.items():
        left[x] = left.get(x, 0.0) + m
        right[y] = right.get(y, 0.0) + m
    return FiniteDistribution.from_pairs(left), FiniteDistribution.from_pairs(right)


def product_of_marginals(joint: JointRun) -> JointRun:
    px, py = marginals(joint)
    pairs = [((x, y), mx * my) for x, mx in px.items() for y, my in py.items()]
    return JointRun.from_pairs(pairs)


def mutual_info(joint: JointRun) -> float:
    """I(X; Y) = KL(P || P_X x P_Y) in bits."""
    prod = product_of_marginals(joint)
    prod_mass = {o: m for o, m in prod.dist.items()}
    total = 0.0
    for o, m in joint.dist.items():
        if m <= 0.0:
            continue
        total += m * math.log2(m / prod_mass[o])
    return max(total, 0.0)


def leakage(joint: JointRun) -> float:
    """Leakage of a (state, observable) run: its mutual information."""
    return mutual_info(joint)


def is_independent(joint: JointRun, tol: float) -> bool:
    if tol <= 0:
        raise DistributionError("tolerance must be positive")
    prod = product_of_marginals(joint)
    prod_mass = {o: m for o, m in prod.dist.items()}
    joint_mass = {o: m for o, m in joint.dist.items()}
    gap = max(abs(joint_mass.get(o, 0.0) - prod_mass.get(o, 0.0))
              for o in set(joint_mass) | set(prod_mass))
    return gap <= tol


def max_mass(dist: FiniteDistribution) -> float:
    """Mass of the most likely outcome: the best constant predictor's accuracy."""
    return max(dist.masses)


def predictor_accuracy(joint: JointRun, g: Predictor) -> float:
    left, _ = marginals(joint)
    for x in left.support:
        if x not in g.mapping:
            raise DistributionError(f"predictor undefined on state {x!r}")
    return math.fsum(m for (x, y), m in joint.dist.items() if g.mapping.get(x) == y)


def map_predictor(joint: JointRun) -> Predictor:
    """Per-state argmax predictor, ties broken by outcome ordering."""
    best: dict[Label, tuple[float, int]] = {}
    choice: dict[Label, Label] = {}
    for idx, ((x, y), m) in enumerate(joint.dist.items()):
        if x not in best or m > best[x][0]:
            best[x] = (m, idx)
            choice[x] = y
    return Predictor(choice)


def nonindependence_certificate(joint: JointRun, g: Predictor) -> Optional[NonIndependenceCertificate]:
    """Certificate that the run is non-independent, when g beats the baseline.

    When accuracy(P, g) > maxMass(P_Y), some joint cell must deviate from the
    product of marginals by at least gap/|support(X)|; the certificate carries
    the maximally deviating cell.
    """
    _, right = marginals(joint)
    acc = predictor_accuracy(joint, g)
    base = max_mass(right)
    gap = acc - base
    if gap <= 1e-9:  # numeric ties are not evidence
        return None
    left, _ = marginals(joint)
    bound = gap / len(left.support)
    prod = product_of_marginals(joint)
    prod_mass = {o: m for o, m in prod.dist.items()}
    joint_mass = {o: m for o, m in joint.dist.items()}
    cell, dev = max(
        ((o, abs(joint_mass.get(o, 0.0) - prod_mass.get(o, 0.0)))
         for o in set(joint_mass) | set(prod_mass)),
        key=lambda t: t[1],
    )
    return NonIndependenceCertificate(
        accuracy=acc, baseline=base, gap=gap,
        cell=cell, cell_deviation=dev, deviation_bound=bound,
    )


def distinguishability_witness(p1: FiniteDistribution, p2: FiniteDistribution,
                               tol: float) -> Optional[tuple[Label, float]]:
    """Outcome with the largest mass gap, when that gap exceeds tol."""
    _check_same_universe(p1, p2)
    best_o, best_gap = None, -1.0
    for o, m1, m2 in zip(p1.outcomes, p1.masses, p2.masses):
        gap = abs(m1 - m2)
        if gap > best_gap:
            best_o, best_gap = o, gap
    if best_gap > tol:
        return best_o, best_gap
    return None


def empirical_distribution(samples: Sequence[Label]) -> FiniteDistribution:
    if len(samples) == 0:
        raise DistributionError("empty sample set")
    counts: dict[Label, int] = {}
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
    n = len(samples)
    return FiniteDistribution.from_pairs({o: c / n for o, c in counts.items()})
