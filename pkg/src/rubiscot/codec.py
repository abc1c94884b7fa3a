"""Loss-free conversion between frozen dataclasses and JSON-native values.

Only the shapes used by this package are supported: dataclasses, enums,
``tuple[X, ...]``, ``list[X]``, ``dict[K, V]`` with string or enum keys,
``X | None`` and JSON scalars.
"""

from __future__ import annotations

import dataclasses
import enum
import types
import typing
from functools import lru_cache
from typing import Any, Union, get_args, get_origin


def to_data(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        hook = getattr(obj, "__to_data__", None)
        if hook is not None:
            return hook()
        return {f.name: to_data(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_data(v) for v in obj]
    if isinstance(obj, dict):
        return {(k.value if isinstance(k, enum.Enum) else k): to_data(v) for k, v in obj.items()}
    return obj


@lru_cache(maxsize=None)
def _hints(cls: type) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def from_data(tp: Any, data: Any) -> Any:
    origin = get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in get_args(tp) if a is not type(None)]
        if data is None:
            return None
        if len(args) != 1:
            raise TypeError(f"ambiguous union {tp}")
        return from_data(args[0], data)
    if origin is tuple:
        (item, *_rest) = get_args(tp)
        return tuple(from_data(item, v) for v in data)
    if origin is list:
        (item,) = get_args(tp)
        return [from_data(item, v) for v in data]
    if origin is dict:
        key_tp, val_tp = get_args(tp)
        return {from_data(key_tp, k): from_data(val_tp, v) for k, v in data.items()}
    if tp is Any:
        return data
    if isinstance(tp, type) and dataclasses.is_dataclass(tp):
        hook = getattr(tp, "__from_data__", None)
        if hook is not None:
            return hook(data)
        hints = _hints(tp)
        kwargs = {
            f.name: from_data(hints[f.name], data[f.name])
            for f in dataclasses.fields(tp)
            if f.init and f.name in data
        }
        return tp(**kwargs)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(data)
    if tp is float:
        return float(data)
    return data
