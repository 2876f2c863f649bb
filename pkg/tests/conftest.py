import pytest

from rod.graph import build_csr


@pytest.fixture
def toy_graph():
    # two triangles joined by one bridge edge
    return build_csr([(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)], 6)
