"""Small shared utilities: atomic file writes, digests, phase timing."""

import hashlib
import os
import tempfile
import time
from contextlib import contextmanager, nullcontext

import numpy as np


def _umask():
    # mkstemp files are 0600; restore normal umask-driven permissions
    current = os.umask(0)
    os.umask(current)
    return current


def atomic_write_bytes(path, data):
    """Write bytes to `path` via a temp file and rename, so readers never
    observe a partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_of_arrays(*arrays):
    """32-byte digest over the raw bytes of the given arrays, in order.

    Arrays are made contiguous first so the digest depends on values and
    dtype, not on memory layout.
    """
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.digest()


class PhaseClock:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.seconds = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + (
                time.perf_counter() - t0
            )

    def get(self, name):
        return self.seconds.get(name, 0.0)


def maybe_phase(clock, name):
    """Phase context manager that degrades to a no-op when clock is None."""
    if clock is None:
        return nullcontext()
    return clock.phase(name)
