# svann-interpretation/utility/storage.py

import os
import tempfile
from contextlib import contextmanager
from typing import IO, Iterator, Type, TypeVar

import pandas as pd
from pydantic import BaseModel, ValidationError

from config import settings
from utility.exceptions import DataError
from utility.logging import setup_logger

logger = setup_logger(__name__)

M = TypeVar("M", bound=BaseModel)


@contextmanager
def atomic_write(path: str, mode: str = "wb") -> Iterator[IO]:
    """
    Opens a temp file next to `path` and renames it into place on success.
    Readers never observe a half-written output.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    handle = os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": ""}))
    try:
        yield handle
        handle.close()
        os.replace(tmp_path, path)
    except Exception as e:
        logger.error(f"Write to {path} failed: {e}")
        handle.close()
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def frame_to_csv_text(frame: pd.DataFrame) -> str:
    """RFC-4180 rendering: header row, CRLF records, minimal quoting."""
    return frame.to_csv(index=False, lineterminator="\r\n", float_format=settings.CSV_FLOAT_FORMAT)


def write_csv(frame: pd.DataFrame, path: str) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(frame_to_csv_text(frame))
    logger.info(f"Wrote {len(frame)} rows to {path}")


def write_text(text: str, path: str) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(text)


def write_json(model: BaseModel, path: str) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(model.model_dump_json(indent=2))


def load_model_json(path: str, model_cls: Type[M]) -> M:
    """Loads and validates a JSON document; schema violations are data errors."""
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    try:
        return model_cls.model_validate_json(raw)
    except ValidationError as e:
        logger.warning(f"Invalid {model_cls.__name__} document {path}: {e.error_count()} errors")
        raise DataError(f"{path}: invalid {model_cls.__name__}: {e}")
