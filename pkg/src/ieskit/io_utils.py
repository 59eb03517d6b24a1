"""Small file helpers shared by the report and CSV writers."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path


def fnum(value) -> str:
    """Full-precision decimal form of a scalar that round-trips exactly."""
    return repr(float(value))


def atomic_write_text(path, text: str) -> Path:
    """Write text to ``path`` atomically (temp file in the same directory,
    then rename), so partially written outputs are never observed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path
