"""Built-in example problems.

These four scalar equations are registered in code (not as config files)
so the test suite and the CLI share a single source of truth for the
formulas.  ``ex1``-``ex3`` are well-behaved branch portraits; ``ex4`` has
a notoriously ragged set of starting points and exercises the tracer's
graceful-failure path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .problem import ProblemSpec, problem_from_dict


@dataclass(frozen=True)
class ExampleDef:
    blurb: str
    problem: dict
    seeds: tuple[float, ...]
    lam_max: float
    box: tuple[float, float, float, float]  # p_min, p_max, v_min, v_max
    grid: int = 15
    smax: float = 50.0


EXAMPLES: dict[str, ExampleDef] = {
    "ex1": ExampleDef(
        blurb="[v'^3 + v']' = arctan(x) + lam*(sin(2 pi t) - 1), T = 1",
        problem=dict(
            form="autonomous-plus-perturbation",
            phi="v^3 + v",
            g="arctan(x)",
            f="sin(2*pi*t) - 1",
            period=1.0,
        ),
        seeds=(0.0,),
        lam_max=1.45,
        box=(-3.0, 3.0, -3.0, 3.0),
    ),
    "ex2": ExampleDef(
        blurb="[v'^3 + 2v']' = x^2 - x + lam*(2x^2 - sin t), T = 2 pi",
        problem=dict(
            form="autonomous-plus-perturbation",
            phi="v^3 + 2*v",
            g="x^2 - x",
            f="2*x^2 - sin(t)",
            period=2.0 * math.pi,
        ),
        seeds=(0.0, 1.0),
        lam_max=1.5,
        box=(-0.5, 1.5, -1.0, 1.0),
    ),
    "ex3": ExampleDef(
        blurb="[lam v'^3 + v']' = (x^2-1)/(x^2+1) + lam*(x^2 sin(2 pi t) + 1 - x), T = 1",
        problem=dict(
            form="autonomous-plus-perturbation",
            phi="lam*v^3 + v",
            g="(x^2 - 1)/(x^2 + 1)",
            f="x^2*sin(2*pi*t) + 1 - x",
            period=1.0,
        ),
        seeds=(-1.0, 1.0),
        lam_max=2.0,
        box=(-2.5, 2.5, -2.0, 2.0),
    ),
    "ex4": ExampleDef(
        blurb="[v'^3/3 + 2v']' = x^2 - x + lam*(sin(2 pi t) - x^2), T = 1 (ragged)",
        problem=dict(
            form="autonomous-plus-perturbation",
            phi="v^3/3 + 2*v",
            g="x^2 - x",
            f="sin(2*pi*t) - x^2",
            period=1.0,
        ),
        seeds=(0.0, 1.0),
        lam_max=1.2,
        box=(-1.5, 1.5, -1.0, 1.0),
        smax=30.0,
    ),
}


def example_ids() -> list[str]:
    return sorted(EXAMPLES)


def get_example(eid: str) -> ProblemSpec:
    try:
        d = EXAMPLES[eid]
    except KeyError:
        raise KeyError(f"unknown example {eid!r}; known: {', '.join(example_ids())}")
    return problem_from_dict(d.problem)


def get_defaults(eid: str) -> ExampleDef:
    return EXAMPLES[eid]
