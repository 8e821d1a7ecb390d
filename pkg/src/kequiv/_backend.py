"""Select the compiled kernels when importable, else the numpy fallback.

Set ``KEQUIV_BACKEND=python`` to force the fallback, or ``compiled`` to make
a missing extension an import error.
"""

import os

_choice = os.environ.get("KEQUIV_BACKEND", "auto").lower()

if _choice not in {"auto", "compiled", "python"}:
    raise ImportError(f"KEQUIV_BACKEND must be auto, compiled or python, got {_choice!r}")

if _choice == "python":
    from kequiv import _pykernels as kernels
else:
    try:
        from kequiv import _core as kernels
    except ImportError:
        if _choice == "compiled":
            raise
        from kequiv import _pykernels as kernels

NAME = "compiled" if kernels.__name__.endswith("_core") else "python"

gram = kernels.gram
stein_gram = kernels.stein_gram
stein_matmat = kernels.stein_matmat
gram_matmat = kernels.gram_matmat
gram_row_col_sums = kernels.gram_row_col_sums
