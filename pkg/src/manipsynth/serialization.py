"""Artifact I/O: atomic file writes and content hashing."""

from __future__ import annotations

import hashlib
import os
import tempfile

from .errors import DependencyError


def write_atomic(path, data):
    """Write bytes or text via a temp file + rename so readers never see
    partial artifacts."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_text(path, stage=None) -> str:
    if not os.path.exists(path):
        where = f" (produce it with the {stage!r} stage)" if stage else ""
        raise DependencyError(f"missing upstream artifact {path}{where}")
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def require_file(path, stage):
    if not os.path.exists(path):
        raise DependencyError(f"missing upstream artifact {path} (produce it with the {stage!r} stage)")
    return path
