"""Kernel selection: the compiled core when importable, else the Python twin.

Set ``GRAFO_BACKEND=python`` to force the fallback.
"""
import os

from . import _pycore

core = _pycore
name = "python"

if os.environ.get("GRAFO_BACKEND", "").lower() != "python":
    try:
        from . import _core as core  # noqa: F811
        name = "cython"
    except ImportError:
        pass
