"""Tree-kernel backend selection.

The compiled kernel is used when the extension imports; otherwise the numpy
reference kernel is used. Both build identical trees.
"""

from __future__ import annotations

from contextlib import contextmanager

from . import _kernel_py

try:
    from . import _kernel_c
except ImportError:  # extension not built
    _kernel_c = None

_KERNELS = {"python": _kernel_py}
if _kernel_c is not None:
    _KERNELS["compiled"] = _kernel_c

_active = "compiled" if _kernel_c is not None else "python"


def available_backends() -> list[str]:
    return sorted(_KERNELS)


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _KERNELS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = name


@contextmanager
def use_backend(name: str):
    prev = get_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def build_tree(*args, **kwargs):
    return _KERNELS[_active].build_tree(*args, **kwargs)
