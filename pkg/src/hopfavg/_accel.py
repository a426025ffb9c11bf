"""Optional numba acceleration for the hot simulation loops.

Every kernel in :mod:`hopfavg._kernels` has two implementations: a compiled
per-path loop (numba) and a vectorised pure-numpy loop over a batch of paths.
The compiled path is used when numba imports and ``HOPFAVG_DISABLE_NUMBA`` is
not set to a truthy value.  Callers may also force a backend per call.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


HAVE_NUMBA = numba is not None
NUMBA_ENABLED = HAVE_NUMBA and not _env_flag("HOPFAVG_DISABLE_NUMBA")


def njit(func=None, *, inline=False):
    """Compile ``func`` with numba when available, else return it unchanged.

    ``inline=True`` inlines the function into its numba callers, which keeps
    array reference counting out of hot loops.
    """
    if func is None:
        return lambda f: njit(f, inline=inline)
    if not HAVE_NUMBA:
        return func
    opts = {"inline": "always"} if inline else {}
    return numba.njit(cache=True, nogil=True, **opts)(func)


def resolve_backend(backend=None):
    """Map ``None | "numba" | "numpy"`` to a concrete backend name."""
    if backend is None:
        return "numba" if NUMBA_ENABLED else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def default_threads():
    """Worker count from ``HOPFAVG_THREADS`` (default 1)."""
    raw = os.environ.get("HOPFAVG_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError("HOPFAVG_THREADS must be a positive integer")
    return n
