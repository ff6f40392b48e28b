"""Backend selection for the statevector kernels.

The compiled extension is used when it was built; otherwise, or when
``RBMDUCC_KERNELS=python`` is set, the numpy versions are used.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RBMDUCC_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

rotate_pairs = _impl.rotate_pairs
generator_overlap = _impl.generator_overlap
pauli_rotation = _impl.pauli_rotation


def backend(name: str):
    """Return the kernel module for ``name`` (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _pykernels
    from . import _ckernels

    return _ckernels
