"""Numerical property suite for the information-theory core.

Each check replays one of the proved inequalities on seeded random
distributions and reports the worst observed violation, so a regression
in the arithmetic shows up as a concrete counterexample.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .infotheory import (
    FiniteDistribution,
    JointRun,
    Predictor,
    kl_divergence,
    marginals,
    max_mass,
    mutual_info,
    predictor_accuracy,
    product_of_marginals,
)

KL_TOL = 1e-12
MI_PRODUCT_TOL = 1e-9
MI_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed ^ 0x53454C4654455354))


def random_joint(rng: np.random.Generator, max_side: int = 6) -> JointRun:
    nx = int(rng.integers(2, max_side + 1))
    ny = int(rng.integers(2, max_side + 1))
    weights = rng.random((nx, ny)) + 1e-6
    weights /= weights.sum()
    return JointRun.from_pairs(
        [((f"x{i}", f"y{j}"), float(weights[i, j]))
         for i in range(nx) for j in range(ny)])


def random_distribution(rng: np.random.Generator, n: int) -> FiniteDistribution:
    weights = rng.random(n) + 1e-6
    weights /= weights.sum()
    return FiniteDistribution.from_pairs(
        [(f"o{i}", float(w)) for i, w in enumerate(weights)])


def check_kl_nonnegative(seed: int, n_joints: int) -> CheckResult:
    rng = _rng(seed)
    worst = 0.0
    for _ in range(n_joints):
        n = int(rng.integers(2, 7))
        p, q = random_distribution(rng, n), random_distribution(rng, n)
        worst = min(worst, kl_divergence(p, q))
    return CheckResult("kl_nonnegative", worst >= -KL_TOL,
                       f"min KL over {n_joints} pairs = {worst:.3g}")


def check_mi_of_product_vanishes(seed: int, n_joints: int) -> CheckResult:
    rng = _rng(seed + 1)
    worst = 0.0
    for _ in range(n_joints):
        joint = random_joint(rng)
        worst = max(worst, abs(mutual_info(product_of_marginals(joint))))
    return CheckResult("mi_of_product_vanishes", worst <= MI_PRODUCT_TOL,
                       f"max |MI(product)| over {n_joints} joints = {worst:.3g}")


def check_mi_symmetry(seed: int, n_joints: int) -> CheckResult:
    rng = _rng(seed + 2)
    worst = 0.0
    for _ in range(n_joints):
        joint = random_joint(rng)
        worst = max(worst, abs(mutual_info(joint) - mutual_info(joint.swap())))
    return CheckResult("mi_symmetry", worst <= MI_SYMMETRY_TOL,
                       f"max |MI(J) - MI(J^T)| over {n_joints} joints = {worst:.3g}")


def check_no_free_prediction(seed: int, n_joints: int = 50) -> CheckResult:
    """Every predictor on a product joint is capped by the max marginal mass."""
    rng = _rng(seed + 3)
    worst = 0.0
    for _ in range(n_joints):
        nx = int(rng.integers(2, 5))
        ny = int(rng.integers(2, 4))
        weights = rng.random((nx, ny)) + 1e-6
        weights /= weights.sum()
        product = product_of_marginals(JointRun.from_pairs(
            [((f"x{i}", f"y{j}"), float(weights[i, j]))
             for i in range(nx) for j in range(ny)]))
        xs, ys = product.left_labels, product.right_labels
        cap = max_mass(marginals(product)[1])
        for choice in itertools.product(ys, repeat=len(xs)):
            g = Predictor(dict(zip(xs, choice)))
            worst = max(worst, predictor_accuracy(product, g) - cap)
    return CheckResult("no_free_prediction", worst <= MI_PRODUCT_TOL,
                       f"max accuracy excess over {n_joints} product joints = {worst:.3g}")


def run_selftest(seed: int = 0, n_joints: int = 1000) -> list[CheckResult]:
    if n_joints < 1:
        raise ValueError("n_joints must be >= 1")
    return [
        check_kl_nonnegative(seed, n_joints),
        check_mi_of_product_vanishes(seed, n_joints),
        check_mi_symmetry(seed, n_joints),
        check_no_free_prediction(seed),
    ]


SELFTEST_HEADER = "check,passed,detail"


def selftest_to_csv(results: Sequence[CheckResult]) -> str:
    lines = [SELFTEST_HEADER]
    for r in results:
        lines.append(f"{r.name},{str(r.passed).lower()},{r.detail}")
    return "\n".join(lines) + "\n"
