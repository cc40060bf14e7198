"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``CLHA_KERNELS=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CLHA_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

context_rows = _impl.context_rows
token_logprobs = _impl.token_logprobs
accumulate_grad = _impl.accumulate_grad
next_token_probs = _impl.next_token_probs
