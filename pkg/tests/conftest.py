import numpy as np
import pytest

from nonholo.systems import chaplygin as chap
from nonholo.systems import revolution as rev


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def chaplygin_params():
    return chap.ChaplyginParams(I1=2.0, I3=1.0, m=1.0, R=1.0)


@pytest.fixture(scope="session")
def chaplygin(chaplygin_params):
    return chap.build_chaplygin(chaplygin_params)


@pytest.fixture(scope="session")
def ellipsoid():
    """Ellipsoid with gravity; the adapted frame exists for this mass."""
    profile = rev.ShapeProfile("ellipsoid", a=1.0, c=0.6)
    params = rev.RevolutionParams(I1=1.3, I3=2.1, m=0.7, potential="gravity")
    sols = rev.solve_gauge_ode(profile, params)
    return {
        "profile": profile,
        "params": params,
        "solutions": sols,
        "equivariant": rev.build_equivariant(profile, params, sols),
        "adapted": rev.build_revolution(profile, params, sols),
    }


@pytest.fixture(scope="session")
def offset_sphere():
    profile = rev.ShapeProfile("offset-sphere", R=1.0, offset=0.3)
    params = rev.RevolutionParams(I1=2.0, I3=1.0, m=1.0)
    sols = rev.solve_gauge_ode(profile, params)
    return {
        "profile": profile,
        "params": params,
        "solutions": sols,
        "equivariant": rev.build_equivariant(profile, params, sols),
        "adapted": rev.build_revolution(profile, params, sols),
    }


def random_state(system, rng, scale=1.0):
    from nonholo.brackets import PhaseState

    return PhaseState(system.sample_point(rng), scale * rng.normal(size=system.r))
