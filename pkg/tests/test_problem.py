import math
import random

import pytest

from phibranch import problem
from phibranch.examples import get_example
from phibranch.problem import (
    Box,
    ConfigError,
    FormError,
    IntervalUnion,
    PsiInversionError,
    average_wind,
    gamma,
    hadamard_h,
    phi0_inverse,
    problem_from_dict,
    psi,
)


@pytest.fixture(scope="module")
def ex1():
    return get_example("ex1")


@pytest.fixture(scope="module")
def ex2():
    return get_example("ex2")


@pytest.fixture(scope="module")
def ex3():
    return get_example("ex3")


# --- domains -----------------------------------------------------------------


def test_interval_union_contains_and_components():
    dom = IntervalUnion(((-math.inf, math.inf),), excluded=(0.0, 1.0))
    assert dom.contains(0.5) and not dom.contains(0.0) and not dom.contains(1.0)
    assert dom.components() == [(-math.inf, 0.0), (0.0, 1.0), (1.0, math.inf)]
    assert dom.contains(dom.sample_point())


def test_empty_interval_rejected():
    with pytest.raises(ConfigError):
        IntervalUnion(((2.0, 1.0),))


def test_box_contains():
    box = Box((-1.0, -1.0), (1.0, 1.0))
    assert box.contains((0.0, 0.5)) and not box.contains((0.0, 1.5))


# --- partial inverse -----------------------------------------------------------


def test_psi_exact_cubic_root(ex1):
    # v^3 + v = 10 at v = 2
    q = psi(ex1, 0.7, 0.3, 10.0)
    assert abs(q - 2.0) <= 1e-9


def test_psi_identity_at_lam_zero(ex3):
    for u in (-3.0, 0.0, 0.25, 7.0):
        assert abs(psi(ex3, 0.0, 0.1, u) - u) <= 1e-10 * (1 + abs(u))


def test_psi_ex3_at_lam_one(ex3):
    assert abs(psi(ex3, 1.0, 0.0, 2.0) - 1.0) <= 1e-9


def test_phi0_inverse_values(ex1, ex2, ex3):
    assert abs(phi0_inverse(ex2, 3.0) - 1.0) <= 1e-9  # v^3 + 2v = 3
    assert abs(phi0_inverse(ex1, -2.0) + 1.0) <= 1e-9
    for spec in (ex1, ex2, ex3):
        assert abs(phi0_inverse(spec, 0.0)) <= 1e-10


def test_inversion_identity_randomized(ex3):
    rng = random.Random(20260810)
    for _ in range(1000):
        lam = rng.uniform(0.0, 2.0)
        x = rng.uniform(-3.0, 3.0)
        u = rng.uniform(-20.0, 20.0)
        q = psi(ex3, lam, x, u)
        assert abs(ex3.eval_phi(lam, x, q) - u) <= 1e-10 * (1.0 + abs(u))


def test_psi_position_independent_at_lam_zero(ex2):
    rng = random.Random(7)
    for _ in range(50):
        u = rng.uniform(-10.0, 10.0)
        q1 = psi(ex2, 0.0, rng.uniform(-5, 5), u)
        q2 = psi(ex2, 0.0, rng.uniform(-5, 5), u)
        assert abs(q1 - q2) <= 1e-10


def test_analytic_psi_used_when_given():
    spec = problem_from_dict(
        dict(
            form="lambda-perturbed",
            phi="v^3 + v",
            psi="u - u",  # deliberately wrong inverse: must be trusted verbatim
            f="sin(2*pi*t)",
            period=1.0,
        )
    )
    assert psi(spec, 0.3, 0.0, 5.0) == 0.0


def test_bracket_expansion_failure():
    # bounded phi = arctan(v) is not onto: u = 2 has no preimage
    spec = problem_from_dict(
        dict(form="lambda-perturbed", phi="arctan(v)", f="0", period=1.0)
    )
    with pytest.raises(PsiInversionError):
        psi(spec, 0.0, 0.0, 2.0)


# --- Hadamard term ---------------------------------------------------------------


def test_hadamard_vanishes_when_phi_lam_free(ex1):
    for lam, u in ((0.5, 3.0), (1.0, -2.0), (2.0, 0.7)):
        assert abs(hadamard_h(ex1, lam, 0.3, u)) <= 1e-9


def test_hadamard_ex3_exact_value(ex3):
    # psi(1, ., 2) = 1 and phi0^{-1}(2) = 2
    assert abs(hadamard_h(ex3, 1.0, 0.0, 2.0) + 1.0) <= 1e-8


def test_hadamard_small_lam_limit(ex3):
    h3 = hadamard_h(ex3, 1e-3, 0.0, 1.0)
    h4 = hadamard_h(ex3, 1e-4, 0.0, 1.0)
    assert abs(h3 - h4) < 1e-2


def test_hadamard_consistency_identity(ex3):
    rng = random.Random(99)
    for _ in range(100):
        lam = rng.uniform(1e-6, 2.0)
        x = rng.uniform(-2, 2)
        u = rng.uniform(-5, 5)
        lhs = phi0_inverse(ex3, u) + lam * hadamard_h(ex3, lam, x, u)
        assert abs(lhs - psi(ex3, lam, x, u)) <= 1e-12 * (1 + abs(u))


def test_hadamard_requires_positive_lam(ex3):
    with pytest.raises(ValueError):
        hadamard_h(ex3, 0.0, 0.0, 1.0)


# --- average wind and gamma -------------------------------------------------------


def test_wind_ex1_is_minus_one(ex1):
    for p in (-2.0, 0.0, 3.5):
        assert abs(average_wind(ex1, p) + 1.0) <= 1e-9


def test_wind_ex2_quadratic(ex2):
    for p in (0.0, 0.5, -1.2):
        assert abs(average_wind(ex2, p) - 2.0 * p * p) <= 1e-8 * (1 + 2 * p * p)


def test_wind_zero_forcing():
    spec = problem_from_dict(
        dict(form="lambda-perturbed", phi="v", f="0", period=2.0)
    )
    assert average_wind(spec, 1.23) == 0.0


def test_wind_constant_forcing_matches_value():
    spec = problem_from_dict(
        dict(form="lambda-perturbed", phi="v", f="x^2 - 4", period=3.0)
    )
    p = 1.5
    assert abs(average_wind(spec, p) - (p * p - 4.0)) <= 1e-10


def test_gamma_values(ex1, ex2, ex3):
    assert gamma(ex1, 0.0) == 0.0
    assert abs(gamma(ex1, 1.0) - math.atan(1.0)) <= 1e-15
    assert gamma(ex2, 0.0) == 0.0 and gamma(ex2, 1.0) == 0.0
    assert abs(gamma(ex2, 0.5) + 0.25) <= 1e-15
    assert gamma(ex3, 1.0) == 0.0 and gamma(ex3, -1.0) == 0.0


def test_gamma_rejected_on_lambda_perturbed_form():
    spec = problem_from_dict(
        dict(form="lambda-perturbed", phi="v", f="sin(t)", period=2 * math.pi)
    )
    with pytest.raises(FormError):
        gamma(spec, 0.0)


# --- config loading ----------------------------------------------------------------


def test_config_roundtrip_toml(tmp_path):
    path = tmp_path / "prob.toml"
    path.write_text(
        "\n".join(
            [
                'form = "autonomous-plus-perturbation"',
                'phi = "v^3 + v"',
                'g = "arctan(x)"',
                'f = "sin(2*pi*t) - 1"',
                "period = 1.0",
                "n = 1",
                'domain = [["-inf", "inf"]]',
                "excluded = [0.5]",
            ]
        )
    )
    spec = problem.load_problem(path)
    assert spec.period == 1.0
    assert not spec.domain.contains(0.5)
    assert abs(psi(spec, 0.0, 0.0, 10.0) - 2.0) <= 1e-9


@pytest.mark.parametrize(
    "patch",
    [
        {"form": "nonsense"},
        {"period": -1.0},
        {"phi": "v^3 +"},
        {"f": "sin(w*t)"},  # unknown variable w
        {"g": None},  # autonomous form without g
    ],
)
def test_config_errors(patch):
    cfg = dict(
        form="autonomous-plus-perturbation",
        phi="v^3 + v",
        g="arctan(x)",
        f="sin(2*pi*t) - 1",
        period=1.0,
    )
    cfg.update(patch)
    cfg = {k: v for k, v in cfg.items() if v is not None}
    with pytest.raises(ConfigError):
        problem_from_dict(cfg)


def test_lambda_form_must_not_carry_g():
    with pytest.raises(ConfigError):
        problem_from_dict(
            dict(form="lambda-perturbed", phi="v", g="x", f="0", period=1.0)
        )


def test_phi_x_independence_at_lam_zero(ex3):
    rng = random.Random(3)
    for _ in range(200):
        v = rng.uniform(-5, 5)
        a = ex3.eval_phi(0.0, rng.uniform(-4, 4), v)
        b = ex3.eval_phi(0.0, rng.uniform(-4, 4), v)
        assert abs(a - b) <= 1e-12 * (1.0 + abs(a))
