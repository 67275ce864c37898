import pytest
import sys
import os

# Ensure src is in path so we can import cvqkd
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))


@pytest.fixture
def calibrated_snr():
    """Linear SNR that gives a 1% error rate on an unattacked line."""
    from src.cvqkd.infotheory import snr_for_ber

    return snr_for_ber(0.01)


@pytest.fixture
def config_13db():
    """The bundled 1%-calibrated coherent config."""
    from src.cvqkd.config import load_config

    return load_config("coherent-13db")


@pytest.fixture
def squeezed_config():
    """The bundled 10 dB squeezed config."""
    from src.cvqkd.config import load_config

    return load_config("squeezed-10db")
