"""Shared fixtures and random generators for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from adsim.dsl.ast import And, Comparison, Membership, Not, Or, Policy, Rule
from adsim.model import Pathway, PathwayKind

ROOT = Path(__file__).resolve().parents[1]
DOCS = ROOT / "docs"
SCENARIOS = DOCS / "scenarios"


@pytest.fixture(scope="session")
def docs_dir() -> Path:
    return DOCS


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    return SCENARIOS


# ---------------------------------------------------------------------------
# Random expression / policy generators (shared by round-trip and evaluator
# property tests). Paths and literals are kept type-correct so the same
# expressions also work against the batch evaluator and the schema validator.
# ---------------------------------------------------------------------------

NUM_PATHS = (("ai", "confidence"), ("ai", "score"))
ENUM_PATHS = {
    ("qc", "status"): ("pass", "out_of_focus", "folded"),
    ("ai", "class"): (
        "normal",
        "neoplastic_urgent",
        "neoplastic_non_urgent",
        "non_neoplastic_urgent",
        "non_neoplastic_non_urgent",
    ),
    ("context", "endoscopy"): ("normal", "abnormal"),
    ("case", "site"): ("colon",),
}
BOOL_PATHS = (("context", "transplant_history"),)
TAG_PATHS = {("context", "clinical_suspicion"): ("spirochetosis", "ibd", "infection")}

_NUM_OPS = ("==", "!=", "<", "<=", ">", ">=")


def random_leaf(rng: np.random.Generator):
    kind = rng.integers(4)
    if kind == 0:
        path = NUM_PATHS[rng.integers(len(NUM_PATHS))]
        value = float(np.round(rng.random(), 3))
        return Comparison(path, _NUM_OPS[rng.integers(len(_NUM_OPS))], value)
    if kind == 1:
        path, values = list(ENUM_PATHS.items())[rng.integers(len(ENUM_PATHS))]
        if rng.random() < 0.3:
            k = int(rng.integers(1, len(values) + 1))
            picked = tuple(sorted(rng.choice(len(values), size=k, replace=False)))
            return Membership(path, tuple(values[i] for i in picked))
        op = "==" if rng.random() < 0.5 else "!="
        return Comparison(path, op, values[rng.integers(len(values))])
    if kind == 2:
        path = BOOL_PATHS[rng.integers(len(BOOL_PATHS))]
        op = "==" if rng.random() < 0.5 else "!="
        return Comparison(path, op, bool(rng.random() < 0.5))
    path, tags = list(TAG_PATHS.items())[rng.integers(len(TAG_PATHS))]
    k = int(rng.integers(1, len(tags) + 1))
    picked = tuple(sorted(rng.choice(len(tags), size=k, replace=False)))
    return Membership(path, tuple(tags[i] for i in picked))


def random_expr(rng: np.random.Generator, depth: int = 3):
    if depth == 0 or rng.random() < 0.35:
        return random_leaf(rng)
    roll = rng.random()
    if roll < 0.2:
        return Not(random_expr(rng, depth - 1))
    if roll < 0.6:
        return And(random_expr(rng, depth - 1), random_expr(rng, depth - 1))
    return Or(random_expr(rng, depth - 1), random_expr(rng, depth - 1))


def random_pathway(rng: np.random.Generator) -> Pathway:
    roll = rng.integers(4)
    if roll == 0:
        return Pathway(PathwayKind.AI_ONLY)
    if roll == 1:
        return Pathway(PathwayKind.CLINICIAN_ONLY)
    if roll == 2:
        return Pathway(PathwayKind.CLINICIAN_AND_AI)
    return Pathway(
        PathwayKind.CLINICIAN_AND_AI, "urgent" if rng.random() < 0.5 else "routine"
    )


def random_policy(rng: np.random.Generator) -> Policy:
    n_rules = int(rng.integers(0, 6))
    rules = tuple(
        Rule(f"rule_{i}", random_expr(rng), random_pathway(rng)) for i in range(n_rules)
    )
    return Policy(name=f"p{rng.integers(10**6)}", default_pathway=random_pathway(rng), rules=rules)
