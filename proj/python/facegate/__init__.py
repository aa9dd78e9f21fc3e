"""Python bindings for the facegate face detection / matching library.

Images are numpy ``uint8`` arrays: ``(height, width)`` for grayscale and
``(height, width, 3)`` for RGB.
"""

from pathlib import Path

from ._facegate import (  # noqa: F401
    EMBEDDER_ID,
    ENCODING_DIMS,
    Cascade,
    DataError,
    Error,
    GatePass,
    NoFaceError,
    ParseError,
    PersonStore,
    default_schedule,
    detect,
    detect_enhanced,
    distance,
    embed,
    encode,
    evaluate,
    format_pct2,
    match,
    metrics,
    read_image,
    similarity_pct,
    to_grayscale,
    total_score,
    write_image,
)

_MODEL_DIR = Path(__file__).resolve().parent / "models"


def model_dir():
    """Directory holding the bundled frontal-face cascades (installed wheels only)."""
    return _MODEL_DIR


def load_cascade(variant="default", path=None):
    """Load a cascade by bundled variant name, or from an explicit XML path."""
    if path is not None:
        return Cascade.load(str(path))
    candidate = _MODEL_DIR / f"haarcascade_frontalface_{variant}.xml"
    if not candidate.exists():
        raise FileNotFoundError(f"no bundled cascade '{variant}' in {_MODEL_DIR}")
    return Cascade.load(str(candidate))


__version__ = "0.1.0"
