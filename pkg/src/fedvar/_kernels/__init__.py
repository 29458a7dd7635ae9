"""Loss/gradient kernel backends.

The hot inner loop of every experiment is the per-minibatch loss/gradient
evaluation.  Two interchangeable backends implement it:

* ``cython`` — compiled extension (``_ckernels``), built at install time;
* ``python`` — pure NumPy (``pykernels``), always available.

Selection happens once at import: the compiled backend is preferred when
present.  Override with the environment variable ``FEDVAR_KERNELS`` set to
``auto`` (default), ``cython``, or ``python``.  The two backends agree to
floating-point roundoff but are not bit-identical; reproducibility
guarantees hold per backend.
"""

from __future__ import annotations

import os

from . import pykernels

_choice = os.environ.get("FEDVAR_KERNELS", "auto").lower()
if _choice not in ("auto", "cython", "python"):
    raise ValueError(
        f"FEDVAR_KERNELS must be 'auto', 'cython' or 'python', got {_choice!r}"
    )

backend_name = "python"
_impl = pykernels
if _choice in ("auto", "cython"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        backend_name = "cython"
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "FEDVAR_KERNELS=cython but the compiled kernel extension is "
                "not available; reinstall with a C compiler or set "
                "FEDVAR_KERNELS=python"
            ) from None

softmax_xent = _impl.softmax_xent
mlp_tanh_xent = _impl.mlp_tanh_xent


def available_backends() -> dict[str, object]:
    """Importable backend modules keyed by name (for tests and benchmarks)."""
    found: dict[str, object] = {"python": pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
