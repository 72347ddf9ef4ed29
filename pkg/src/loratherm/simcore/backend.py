"""Engine selection: compiled extension when available, else pure Python.

The environment variable ``LORATHERM_ENGINE`` (or an explicit name)
forces a choice: ``compiled``, ``python``, or ``auto``.
"""

from __future__ import annotations

import os
from types import ModuleType

from ..errors import ConfigError
from . import engine_py

ENGINE_ENV_VAR = "LORATHERM_ENGINE"

try:
    from . import _engine as _compiled
except ImportError:
    _compiled = None


def available_engines() -> dict[str, ModuleType]:
    engines = {"python": engine_py}
    if _compiled is not None:
        engines["compiled"] = _compiled
    return engines


def get_engine(name: str | None = None) -> ModuleType:
    requested = name if name is not None else os.environ.get(ENGINE_ENV_VAR)
    if requested in (None, "", "auto"):
        return _compiled if _compiled is not None else engine_py
    if requested == "python":
        return engine_py
    if requested == "compiled":
        if _compiled is None:
            raise ConfigError("compiled engine requested but the extension is not built", "engine")
        return _compiled
    raise ConfigError(f"unknown engine {requested!r} (choose python, compiled, or auto)", "engine")
