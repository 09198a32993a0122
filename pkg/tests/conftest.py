import json
import sys

import numpy as np
import pytest

from vifidel.embeddings import EmbeddingTable
from vifidel.textproc import StopwordSet

TOY_VECTORS = {
    "dog": (1.0, 0.0, 0.0),
    "puppy": (0.9, 0.1, 0.0),
    "cat": (0.0, 1.0, 0.0),
    "kitten": (0.1, 0.9, 0.0),
    "toys": (0.5, 0.5, 0.2),
    "plays": (0.3, 0.3, 0.3),
    "truck": (0.0, 0.0, 1.0),
    "field": (0.2, 0.0, 0.8),
    "dining": (1.0, 0.0, 1.0),
    "table": (0.0, 1.0, 1.0),
    "beach": (-1.0, -1.0, 0.0),
    "sitting": (0.2, 0.2, 0.2),
}


TOY_TABLE = EmbeddingTable.from_dict(TOY_VECTORS)


@pytest.fixture
def toy_table():
    return TOY_TABLE


@pytest.fixture
def stop():
    return StopwordSet(["a", "the", "with", "on", "of", "top", "is", "in", "small"])


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return str(path)


def synthetic_table(n_words=10, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    return EmbeddingTable(words, rng.normal(size=(n_words, dim)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
