# tests/conftest.py
import os

os.environ['TABDECOMP_ENV'] = 'testing'

import numpy as np
import pytest
from click.testing import CliRunner

from extensions import configure_logging
from models.graph import make_graph
from models.schema import ContingencyTable, Dataset, VariableSchema
from services.data_service import dataset_from_counts, tabulate


def binary_schema(p):
    return VariableSchema(names=tuple(f"X{v + 1}" for v in range(p)), levels=(2,) * p)


def table_from_counts(levels, counts, variables=None):
    schema = VariableSchema(names=tuple(f"X{v + 1}" for v in range(len(levels))), levels=tuple(levels))
    variables = tuple(range(len(levels))) if variables is None else tuple(variables)
    return ContingencyTable(schema=schema, variables=variables, counts=np.asarray(counts))


@pytest.fixture(autouse=True)
def quiet_logging():
    configure_logging('WARNING')
    yield


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def table_2x2():
    return table_from_counts((2, 2), [30, 10, 15, 45])


@pytest.fixture
def three_binary_data():
    """Every one of the 8 cells observed, with a clear 1-2 and 2-3 dependence"""
    counts = np.array([40, 10, 20, 30, 15, 25, 5, 55])
    return dataset_from_counts(binary_schema(3), counts)


@pytest.fixture
def chain_graph():
    return make_graph(range(4), [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def random_rows():
    def build(p, n, levels=2, seed=0):
        rng = np.random.default_rng(seed)
        schema = VariableSchema(names=tuple(f"X{v + 1}" for v in range(p)), levels=(levels,) * p)
        return Dataset(schema=schema, rows=rng.integers(0, levels, size=(n, p)))
    return build


@pytest.fixture
def full_table():
    def build(data):
        return tabulate(data, range(data.schema.p))
    return build
