"""Select the Gram-kernel implementation at import time.

The compiled ``_gram`` extension is used when it was built; otherwise the
numpy version in ``_gram_py`` takes over. :func:`use` switches explicitly,
which the tests and the benchmark rely on.
"""

from . import _gram_py

try:
    from . import _gram as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = _compiled if _compiled is not None else _gram_py


def available():
    """Names of the importable backends."""
    return ("compiled", "python") if _compiled is not None else ("python",)


def name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use(backend):
    """Activate ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    previous = name()
    if backend == "python":
        _active = _gram_py
    elif backend == "compiled":
        if _compiled is None:
            raise ImportError("compiled core is not available; reinstall with a C compiler")
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return previous


def gram(x1, x2, inv_scales, kind, variance=1.0):
    return _active.gram(x1, x2, inv_scales, kind, float(variance))


def scaled_sqdist(x1, x2, inv_scales):
    return _active.scaled_sqdist(x1, x2, inv_scales)
