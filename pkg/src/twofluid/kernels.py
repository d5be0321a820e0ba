"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting the environment
variable ``TWOFLUID_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("TWOFLUID_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def closure_newton(*args, **kwargs):
    return _impl.closure_newton(*args, **kwargs)


def quartic_roots(coeffs):
    return _impl.quartic_roots(coeffs)


def apply_modes(*args):
    return _impl.apply_modes(*args)
