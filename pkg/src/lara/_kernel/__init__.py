"""Kernel selection: compiled extension when available, else pure Python.

Set LARA_PURE=1 in the environment to force the pure kernel. Both expose
the same functions and produce byte-identical results.
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("LARA_PURE"):
    _impl = pure
else:
    try:
        from . import _fastcore as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

BACKEND: str = _impl.BACKEND

bf_indices = _impl.bf_indices
bf_set = _impl.bf_set
bf_test = _impl.bf_test
merkle_leaf_hashes = _impl.merkle_leaf_hashes
merkle_fold = _impl.merkle_fold


def backends() -> dict[str, object]:
    """All importable kernel implementations, keyed by backend name."""
    impls: dict[str, object] = {pure.BACKEND: pure}
    try:
        from . import _fastcore

        impls[_fastcore.BACKEND] = _fastcore
    except ImportError:
        pass
    return impls
