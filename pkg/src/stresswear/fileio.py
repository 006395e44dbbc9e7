"""Atomic text writes shared by every module that emits files."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

from .errors import IoError


def write_text_atomic(path, text: str) -> Path:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
