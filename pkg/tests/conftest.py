import pytest

from pccorrupt import NetworkState, TrainConfig, train

from synthdata import labelled_clouds


@pytest.fixture(scope="session")
def small_model():
    """A quickly trained 2-class (sphere vs box) classifier with narrow layers.

    Shared by the attack/adaptation tests, which only need *some* trained
    state, not an accurate one.
    """
    data = labelled_clouds(12, 48, seed=7, n_classes=2)
    state = NetworkState.create(2, seed=1, point_dims=(8, 16, 32), head_dim=16)
    config = TrainConfig(epochs=10, batch_size=8, lr=3e-3, seed=3)
    best, history = train(state, data, config)
    return best, data


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line acceptance verdicts after the normal test summary."""
    try:
        from test_acceptance import RESULTS
    except Exception:
        return
    if RESULTS:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in RESULTS:
            terminalreporter.write_line(line)
