import numpy as np
import pytest

from ergodyn.markov import StochasticMatrix, build_markov_map

# three-state chain: each state stays with probability 1/2 or moves on cyclically
TR_MATR = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


@pytest.fixture
def tr_matrix():
    return StochasticMatrix(TR_MATR)


@pytest.fixture
def tr_model(tr_matrix):
    return build_markov_map(tr_matrix)
