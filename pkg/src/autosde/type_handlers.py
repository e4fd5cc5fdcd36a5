"""
Type serialization and deserialization handlers for autosde artifacts.

JSON cannot represent numpy arrays, tuples, enums or the package's frozen
dataclasses. Each handler here converts one such type into a tagged dict
(``{"__type__": ..., "__data__": ...}``) and back, so artifacts written by one
stage load as the same objects in the next.

Floats are left to ``json``, which writes the shortest repr that round-trips,
so every parameter survives a save/load cycle bit-exactly.

Author: F. Herbrand
License: MIT
"""

import importlib
from dataclasses import fields, is_dataclass
from enum import Enum
from typing import Any, Dict, List

import numpy as np

from .errors import ArtifactError

TYPE_MARKER = "__type__"
DATA_MARKER = "__data__"

# Only classes from these modules are re-imported while loading artifacts.
TRUSTED_MODULE_PREFIX = "autosde."


def _import_class(qualified: str) -> type:
    module_name, class_name = qualified.rsplit(".", 1)
    if not module_name.startswith(TRUSTED_MODULE_PREFIX):
        raise ArtifactError(f"Refusing to import {qualified!r} from an artifact")
    try:
        module = importlib.import_module(module_name)
        return getattr(module, class_name)
    except (ImportError, AttributeError) as e:
        raise ArtifactError(f"Cannot resolve artifact type {qualified!r}: {e}") from e


def _qualified_name(obj: Any) -> str:
    return f"{obj.__class__.__module__}.{obj.__class__.__qualname__}"


class TypeHandler:
    """Base class for type serialization handlers."""

    def can_handle(self, obj: Any) -> bool:
        """Check if this handler can process the given object."""
        raise NotImplementedError("Subclasses must implement can_handle()")

    def serialize(self, obj: Any) -> Any:
        """Convert object to JSON-compatible representation."""
        raise NotImplementedError("Subclasses must implement serialize()")

    def can_deserialize(self, data: Any) -> bool:
        """Check if this handler can deserialize the given data."""
        raise NotImplementedError("Subclasses must implement can_deserialize()")

    def deserialize(self, data: Any) -> Any:
        """Convert JSON-compatible data back to original object."""
        raise NotImplementedError("Subclasses must implement deserialize()")


class NdarrayHandler(TypeHandler):
    """Handler for numpy arrays: dtype, shape and nested-list data."""

    def can_handle(self, obj: Any) -> bool:
        return isinstance(obj, np.ndarray)

    def serialize(self, obj: np.ndarray) -> Dict[str, Any]:
        return {
            TYPE_MARKER: "ndarray",
            "dtype": obj.dtype.str,
            "shape": list(obj.shape),
            DATA_MARKER: obj.tolist(),
        }

    def can_deserialize(self, data: Any) -> bool:
        return (
            isinstance(data, dict)
            and data.get(TYPE_MARKER) == "ndarray"
            and "dtype" in data
            and "shape" in data
            and DATA_MARKER in data
        )

    def deserialize(self, data: Dict[str, Any]) -> np.ndarray:
        try:
            array = np.array(data[DATA_MARKER], dtype=np.dtype(data["dtype"]))
            return array.reshape(tuple(data["shape"]))
        except (TypeError, ValueError) as e:
            raise ArtifactError(f"Malformed ndarray entry: {e}") from e


class TupleHandler(TypeHandler):
    """Handler for tuples, which JSON would otherwise turn into lists."""

    def can_handle(self, obj: Any) -> bool:
        return isinstance(obj, tuple)

    def serialize(self, obj: tuple) -> Dict[str, Any]:
        return {TYPE_MARKER: "tuple", DATA_MARKER: [serialize_object(item) for item in obj]}

    def can_deserialize(self, data: Any) -> bool:
        return isinstance(data, dict) and data.get(TYPE_MARKER) == "tuple" and DATA_MARKER in data

    def deserialize(self, data: Dict[str, Any]) -> tuple:
        return tuple(deserialize_object(item) for item in data[DATA_MARKER])


class EnumHandler(TypeHandler):
    """Handler for Enum members of the package (basis kinds and similar)."""

    def can_handle(self, obj: Any) -> bool:
        return isinstance(obj, Enum)

    def serialize(self, obj: Enum) -> Dict[str, Any]:
        return {TYPE_MARKER: "enum", "__class__": _qualified_name(obj), DATA_MARKER: obj.value}

    def can_deserialize(self, data: Any) -> bool:
        return (
            isinstance(data, dict)
            and data.get(TYPE_MARKER) == "enum"
            and "__class__" in data
            and DATA_MARKER in data
        )

    def deserialize(self, data: Dict[str, Any]) -> Enum:
        return _import_class(data["__class__"])(data[DATA_MARKER])


class DataclassHandler(TypeHandler):
    """
    Handler for dataclass instances.

    Fields are serialized one by one rather than through ``asdict`` so that
    nested dataclasses keep their type.
    """

    def can_handle(self, obj: Any) -> bool:
        return is_dataclass(obj) and not isinstance(obj, type)

    def serialize(self, obj: Any) -> Dict[str, Any]:
        for f in fields(obj):
            if callable(getattr(obj, f.name)) and not isinstance(getattr(obj, f.name), (Enum, type)):
                raise ArtifactError(
                    f"{type(obj).__name__}.{f.name} is a function and cannot be written to JSON"
                )
        return {
            TYPE_MARKER: "dataclass",
            "__class__": _qualified_name(obj),
            DATA_MARKER: {f.name: serialize_object(getattr(obj, f.name)) for f in fields(obj)},
        }

    def can_deserialize(self, data: Any) -> bool:
        return (
            isinstance(data, dict)
            and data.get(TYPE_MARKER) == "dataclass"
            and "__class__" in data
            and DATA_MARKER in data
        )

    def deserialize(self, data: Dict[str, Any]) -> Any:
        cls = _import_class(data["__class__"])
        values = deserialize_object(data[DATA_MARKER])
        try:
            return cls(**values)
        except (TypeError, ValueError) as e:
            raise ArtifactError(f"Cannot rebuild {cls.__name__} from artifact: {e}") from e


# Registry of type handlers; arrays first, they are the bulk of every artifact.
_TYPE_HANDLERS: List[TypeHandler] = [
    NdarrayHandler(),
    TupleHandler(),
    EnumHandler(),
    DataclassHandler(),
]


def register_type_handler(handler: TypeHandler, priority: int = 0) -> None:
    """Register a custom type handler."""
    if priority > 0:
        _TYPE_HANDLERS.insert(0, handler)
    else:
        _TYPE_HANDLERS.append(handler)


def serialize_object(obj: Any) -> Any:
    """
    Serialize an object to JSON-compatible form using registered handlers.

    numpy scalars become Python scalars before the basic-type check, since
    ``np.float64`` is also a ``float``.
    """
    if isinstance(obj, np.generic):
        return obj.item()

    if obj is None or isinstance(obj, (str, int, float, bool)):
        return obj

    for handler in _TYPE_HANDLERS:
        if handler.can_handle(obj):
            return handler.serialize(obj)

    if isinstance(obj, dict):
        return {str(key): serialize_object(value) for key, value in obj.items()}
    if isinstance(obj, list):
        return [serialize_object(item) for item in obj]

    raise ArtifactError(f"Cannot serialize object of type {type(obj).__name__}")


def deserialize_object(data: Any) -> Any:
    """Inverse of ``serialize_object``."""
    if data is None or isinstance(data, (str, int, float, bool)):
        return data

    if isinstance(data, dict):
        for handler in _TYPE_HANDLERS:
            if handler.can_deserialize(data):
                return handler.deserialize(data)
        return {key: deserialize_object(value) for key, value in data.items()}
    if isinstance(data, list):
        return [deserialize_object(item) for item in data]
    return data
