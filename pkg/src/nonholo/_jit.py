"""Optional numba compilation; every jitted function also runs as plain Python."""

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None

HAVE_NUMBA = _njit is not None


def jit(fn):
    """Compile ``fn`` in nopython mode with on-disk caching when numba is present."""
    if _njit is None:
        return fn
    return _njit(cache=True, nogil=True)(fn)

