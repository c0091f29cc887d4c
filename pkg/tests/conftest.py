import numpy as np
import pytest

from rrl.data import load_dataset
from rrl.datasets import write_tictactoe, write_wine


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("datasets")
    write_tictactoe(d)
    write_wine(d)
    return d


@pytest.fixture(scope="session")
def tictactoe_paths(data_dir):
    return data_dir / "tic-tac-toe.csv", data_dir / "tic-tac-toe.schema"


@pytest.fixture(scope="session")
def wine_paths(data_dir):
    return data_dir / "wine.csv", data_dir / "wine.schema"


@pytest.fixture(scope="session")
def tictactoe(tictactoe_paths):
    return load_dataset(*tictactoe_paths)


@pytest.fixture(scope="session")
def wine(wine_paths):
    return load_dataset(*wine_paths)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_csv(tmp_path, header, rows, schema_lines, name="d"):
    data = tmp_path / f"{name}.csv"
    schema = tmp_path / f"{name}.schema"
    data.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    schema.write_text("\n".join(schema_lines) + "\n")
    return data, schema
