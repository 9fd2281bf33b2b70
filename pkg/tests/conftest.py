import json
import os

import pytest

from tvblock import psl
from tvblock.blocklists import build_list

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
CORPUS_DIR = os.path.join(DATA_DIR, "corpus")
PSL_PATH = os.path.join(DATA_DIR, "public_suffix_list.dat")
PSL_VECTORS_PATH = os.path.join(DATA_DIR, "psl_test_vectors.txt")
CORPUS_CONFIG = os.path.join(DATA_DIR, "corpus_config.json")


@pytest.fixture(scope="session")
def rules():
    return psl.load_psl_file(PSL_PATH)


@pytest.fixture(scope="session")
def corpus_config():
    with open(CORPUS_CONFIG, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def fixture_lists(corpus_config):
    built = []
    for name, paths in corpus_config["lists"].items():
        built.append(build_list(name, [os.path.join(DATA_DIR, p) for p in paths]))
    return built
