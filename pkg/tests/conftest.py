import numpy as np
import pytest

import prodform as pf


@pytest.fixture
def two_state():
    """0 -> 1 at rate e^r, 1 -> 0 at rate 1; pi_1(r) = e^r / (1 + e^r)."""
    return pf.ProductFormModel(
        space=pf.StateSpace((0, 1)),
        transitions=(
            pf.TransitionTemplate(0, 1, 1.0, (1.0,)),
            pf.TransitionTemplate(1, 0, 1.0, (0.0,)),
        ),
        A=[[0.0], [1.0]],
        b=[0.0, 0.0],
    )


@pytest.fixture
def bd2():
    return pf.build_birth_death(2, [1.0, 1.0])


@pytest.fixture
def bd3():
    return pf.build_birth_death(3, [1.0, 2.0, 0.5])


@pytest.fixture
def jackson22():
    return pf.build_jackson(2, 2, [[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def jackson23():
    return pf.build_jackson(2, 3, [[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def csma_single():
    return pf.build_csma([2, 5, 3], scheme="single_param")


@pytest.fixture
def csma_per_class():
    return pf.build_csma([2, 5, 3], scheme="per_class")


@pytest.fixture
def example_models(bd3, jackson23, csma_per_class):
    """The three reference networks at representative sizes."""
    return {"birth_death": bd3, "jackson": jackson23, "csma": csma_per_class}


def random_params(model, rng, scale=3.0):
    return rng.uniform(-scale, scale, model.num_params)
