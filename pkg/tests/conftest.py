import pytest

from loopfdi.graph import build_signature_matrix, load_default_graph
from loopfdi.plant import FaultScenario
from loopfdi.service import run_pipeline

GOLDEN_SEED = 42
GOLDEN_ONSET = 500.0
GOLDEN_BIAS = 10.0
GOLDEN_DURATION = 900.0


@pytest.fixture(scope="session")
def graph():
    return load_default_graph()


@pytest.fixture(scope="session")
def matrix(graph):
    return build_signature_matrix(graph)


@pytest.fixture(scope="session")
def golden_scenario():
    return FaultScenario("F6", GOLDEN_ONSET, GOLDEN_BIAS)


@pytest.fixture(scope="session")
def golden_snapshots(graph, golden_scenario):
    """One golden run shared by the suite (fresh pipelines elsewhere as needed)."""
    return run_pipeline(graph, [golden_scenario], GOLDEN_DURATION, seed=GOLDEN_SEED)
