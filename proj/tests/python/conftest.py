import os
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(scope="session")
def model_dir():
    return Path(os.environ.get("FACEGATE_MODEL_DIR", ROOT / "models"))


@pytest.fixture(scope="session")
def corpus_dir():
    return Path(os.environ.get("FACEGATE_DATA_DIR", ROOT / "data")) / "corpus"


@pytest.fixture(scope="session")
def cascade(model_dir):
    import facegate

    return facegate.load_cascade(path=model_dir / "haarcascade_frontalface_default.xml")


@pytest.fixture(scope="session")
def face12():
    """Small synthetic cascade the bundled corpus (and its encodings.jsonl) was built with."""
    import facegate

    data = Path(os.environ.get("FACEGATE_DATA_DIR", ROOT / "data"))
    return facegate.Cascade.load(str(data / "fixtures" / "face12.xml"))
