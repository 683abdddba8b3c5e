"""Numba acceleration shim.

Hot kernels ship in two flavours: a scalar-loop version compiled with
``@njit`` and a vectorized pure-numpy twin.  ``NONUNION_NUMBA=0`` (or an
unimportable numba) selects the numpy path.  The flag is read once at import
but kept in a module global so tests and the benchmark can flip it at runtime
via :func:`set_numba_enabled`.
"""

import os

__all__ = ["njit", "numba_enabled", "set_numba_enabled", "NUMBA_AVAILABLE"]


def _env_flag(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        """No-op stand-in so @njit-decorated functions stay plain Python."""

        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


_enabled = NUMBA_AVAILABLE and _env_flag("NONUNION_NUMBA", True)


def numba_enabled() -> bool:
    return _enabled


def set_numba_enabled(value: bool) -> None:
    global _enabled
    _enabled = bool(value) and NUMBA_AVAILABLE
