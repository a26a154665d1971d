import numpy as np
import pytest

from ikk import arm, capture


@pytest.fixture(scope="session")
def default_model():
    return arm.default_arm()


@pytest.fixture(scope="session")
def session42(default_model):
    """Synthetic calibration session with the canonical seed, shared across tests."""
    return capture.synthesize_calibration(default_model, seed=42, n_points=10)


@pytest.fixture(scope="session")
def bases42(default_model, session42):
    from ikk import identify

    return identify.identify_session(session42, identify.IdentifyConfig())


@pytest.fixture(scope="session")
def volume42(bases42):
    from ikk import interp

    return interp.build_volume(bases42)
