# fraclab/core/io.py
"""Atomic artifact writers with byte-stable number formatting."""

import contextlib
import csv
import io
import json
import os
import sys
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np


def _fsync_directory(directory: Path) -> None:
    """Best-effort fsync of the directory holding a freshly renamed artifact."""
    if not str(sys.platform).startswith(("darwin", "linux")):
        return

    flags = os.O_RDONLY | getattr(os, "O_DIRECTORY", 0)
    try:
        dir_fd = os.open(str(directory), flags)
    except OSError:
        return
    try:
        os.fsync(dir_fd)
    except OSError:
        pass
    finally:
        os.close(dir_fd)


def atomic_write_text(path: Path | str, content: str, perms: int | None = None) -> Path:
    """
    Write ``content`` to ``path`` so readers never observe a partial file:
    temp file in the destination directory, fsync, optional chmod, then ``os.replace``.
    """
    final_path = Path(path)
    final_path.parent.mkdir(parents=True, exist_ok=True)

    fd, temp_name = tempfile.mkstemp(
        dir=str(final_path.parent), prefix=f".{final_path.name}.", suffix=".tmp", text=True
    )
    temp_path = Path(temp_name)
    try:
        try:
            handle = os.fdopen(fd, "w", encoding="utf-8", newline="")
        except Exception:
            os.close(fd)
            raise
        with handle:
            handle.write(content)
            handle.flush()
            os.fsync(handle.fileno())
        if perms is not None:
            os.chmod(temp_path, perms)  # noqa: PTH101
        os.replace(temp_path, final_path)  # noqa: PTH105
        _fsync_directory(final_path.parent)
    except Exception:
        with contextlib.suppress(OSError):
            temp_path.unlink()
        raise
    return final_path


def format_number(value: Any) -> str:
    """Shortest round-trip representation; identical inputs give identical bytes."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if number == 0.0:
            return "0"
        return repr(number)
    return str(value)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) for v in row])
    return atomic_write_text(path, buffer.getvalue())


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path: Path | str, data: Any) -> Path:
    return atomic_write_text(path, dumps_json(data))
