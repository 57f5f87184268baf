import importlib
import sys
from types import ModuleType

__version__ = "0.3.0"

_module_names = [
    "errors",
    "nearfield",
    "bloch",
    "sample",
    "spectro",
    "config",
    "storage",
    "pipeline",
    "plotting",
]

for _name in _module_names:
    try:
        _mod: ModuleType = importlib.import_module(f".{_name}", package=__name__)
        sys.modules[f"{__name__}.{_name}"] = _mod
    except ModuleNotFoundError:
        # plotting is optional when matplotlib is missing
        pass

__all__ = _module_names + ["__version__"]
