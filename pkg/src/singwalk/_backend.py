"""Backend selection for the hot path-simulation kernels.

Two interchangeable kernel implementations exist:

* ``singwalk.stochastic._impl_numba`` -- scalar loops compiled with
  ``numba.njit`` (fast, used by default when numba imports cleanly),
* ``singwalk.stochastic._impl_numpy`` -- vectorised pure-numpy fallback.

The environment variable ``SINGWALK_BACKEND`` picks one explicitly:

* ``SINGWALK_BACKEND=numba``  -- require the jitted kernels (raise if
  numba is unavailable),
* ``SINGWALK_BACKEND=numpy``  -- force the pure-numpy fallback,
* unset/empty                 -- numba when importable, numpy otherwise.

Both backends are deterministic given a seed, but they consume random
numbers in different orders, so estimates agree statistically rather
than bit-for-bit across backends.  Within one backend, repeated runs
with the same seed are bit-identical.
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def backend_name() -> str:
    """Resolve the active kernel backend ("numba" or "numpy")."""
    choice = os.environ.get("SINGWALK_BACKEND", "").strip().lower()
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError(
                "SINGWALK_BACKEND=numba but numba is not importable; "
                "install numba or set SINGWALK_BACKEND=numpy"
            )
        return "numba"
    if choice == "numpy":
        return "numpy"
    if choice:
        raise RuntimeError(
            f"unknown SINGWALK_BACKEND={choice!r}; expected 'numba' or 'numpy'"
        )
    return "numba" if HAS_NUMBA else "numpy"


def use_numba() -> bool:
    return backend_name() == "numba"
