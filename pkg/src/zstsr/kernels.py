"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``ZSTSR_KERNELS=python`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ZSTSR_KERNELS", "").lower() not in ("python", "py", "numpy"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

pad_replicate = _impl.pad_replicate
unpad_replicate_adjoint = _impl.unpad_replicate_adjoint
conv3d_forward = _impl.conv3d_forward
conv3d_backward = _impl.conv3d_backward
resample_axis = _impl.resample_axis
ssd_topk = _impl.ssd_topk


def backend_module(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "python":
        return _pykernels
    from . import _ckernels
    return _ckernels


def available_backends():
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def use(name):
    """Switch every kernel to backend ``name``; returns the previous backend name."""
    global BACKEND, pad_replicate, unpad_replicate_adjoint, conv3d_forward
    global conv3d_backward, resample_axis, ssd_topk
    impl = backend_module(name)
    prev = BACKEND
    BACKEND = name
    pad_replicate = impl.pad_replicate
    unpad_replicate_adjoint = impl.unpad_replicate_adjoint
    conv3d_forward = impl.conv3d_forward
    conv3d_backward = impl.conv3d_backward
    resample_axis = impl.resample_axis
    ssd_topk = impl.ssd_topk
    return prev
