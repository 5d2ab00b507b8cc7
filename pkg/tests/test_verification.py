import json

import numpy as np

from nonholo.brackets import ThreeFormSpec, random_three_form
from nonholo.systems import chaplygin as chap
from nonholo.systems import revolution as rev
from nonholo.verification import (
    Report,
    verify_dynamics_equivalence,
    verify_invertibility,
    verify_rank2_jacobi,
    verify_theorem_main,
)

SCHEMA = {"check", "system", "n_samples", "seed", "max_residual", "threshold", "pass", "expected_fail"}


def test_report_schema_and_outcome_logic():
    r = Report("x", "s", 3, 0, 0.5, 1e-3, False, expected_fail=True)
    assert set(r.to_dict()) == SCHEMA
    assert r.ok
    json.dumps(r.to_dict())
    assert not Report("x", "s", 3, 0, 0.5, 1e-3, False).ok
    assert not Report("x", "s", 3, 0, 0.0, 1e-3, True, expected_fail=True).ok


def test_casimir_check_and_zero_lambda_control(chaplygin):
    good = verify_theorem_main(chaplygin, n_samples=50, seed=3)
    assert good.passed and good.max_residual < 1e-10
    bad = verify_theorem_main(chaplygin, n_samples=50, seed=3, lam=ThreeFormSpec.zero(3))
    assert not bad.passed and bad.max_residual > 1e-2


def test_reports_are_deterministic(chaplygin):
    a = verify_theorem_main(chaplygin, n_samples=20, seed=9, lam=ThreeFormSpec.zero(3))
    b = verify_theorem_main(chaplygin, n_samples=20, seed=9, lam=ThreeFormSpec.zero(3))
    assert a == b


def test_dynamics_and_invertibility_for_any_lambda(chaplygin, ellipsoid):
    lam = random_three_form(3, 5, np.random.default_rng(4), scale=3.0)
    assert verify_dynamics_equivalence(chaplygin, lam, 50, 1).passed
    assert verify_invertibility(chaplygin, lam, 20, 1).passed
    eq = ellipsoid["equivariant"]
    assert verify_dynamics_equivalence(eq, rev.lambda_closed_form(ellipsoid["profile"], ellipsoid["params"], eq),
                                       50, 1).passed
    zero = verify_invertibility(chaplygin, ThreeFormSpec.zero(3), 5, 1)
    assert zero.passed and zero.max_residual == 0.0


def test_casimir_check_on_revolution_frames(ellipsoid):
    assert verify_theorem_main(ellipsoid["adapted"], n_samples=50, seed=2).passed
    eq = ellipsoid["equivariant"]
    lam = rev.lambda_closed_form(ellipsoid["profile"], ellipsoid["params"], eq)
    assert verify_theorem_main(eq, n_samples=50, seed=2, lam=lam).passed


def test_rank2_jacobi_dichotomy():
    def sampler(rng):
        g = rng.normal(size=3)
        return np.concatenate([rng.normal(size=3), g / np.linalg.norm(g)])

    generic = chap.ChaplyginParams(I1=2.0, I3=1.0)
    homogeneous = chap.ChaplyginParams(I1=1.0, I3=1.0)
    fails = verify_rank2_jacobi(lambda x: chap.reduced_bracket_MG(generic, x[:3], x[3:]), sampler, 20,
                                expected_fail=True)
    assert not fails.passed and fails.ok
    holds = verify_rank2_jacobi(lambda x: chap.reduced_bracket_MG(homogeneous, x[:3], x[3:]), sampler, 20)
    assert holds.passed and holds.ok
