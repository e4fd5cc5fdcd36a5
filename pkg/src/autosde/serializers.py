"""
JSON serialization functions for autosde artifacts.

Thin wrappers around ``json`` that route every value through the type
handler registry, plus file helpers that turn I/O and parse failures into
``ArtifactError``.

Key Functions:
    - artifact_dumps(): JSON text with type preservation
    - artifact_loads(): Restore objects from artifact JSON text
    - write_json(): Write an artifact file
    - read_json(): Read an artifact file

Author: F. Herbrand
License: MIT
"""

import json
from pathlib import Path
from typing import Any, Union

from . import type_handlers
from .errors import ArtifactError


class ArtifactJSONEncoder(json.JSONEncoder):
    """
    JSON encoder that knows the autosde types.

    ``json`` calls ``default`` only for objects it cannot encode natively, so
    tuples are pre-converted in ``artifact_dumps`` rather than here.
    """

    def default(self, obj: Any) -> Any:
        serialized = type_handlers.serialize_object(obj)
        if serialized is obj:
            return super().default(obj)
        return serialized


def artifact_dumps(obj: Any, **kwargs) -> str:
    """
    Serialize ``obj`` to JSON with type preservation.

    Examples
    --------
    >>> artifact_dumps((1, 2))
    '{"__type__": "tuple", "__data__": [1, 2]}'
    """
    kwargs.setdefault("cls", ArtifactJSONEncoder)
    return json.dumps(type_handlers.serialize_object(obj), **kwargs)


def artifact_loads(s: str, **kwargs) -> Any:
    """
    Restore objects from JSON produced by ``artifact_dumps``.

    Raises
    ------
    ArtifactError
        If the text is not valid JSON (for instance a truncated file)
    """
    try:
        data = json.loads(s, **kwargs)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Invalid artifact JSON: {e}") from e
    return type_handlers.deserialize_object(data)


def write_json(path: Union[str, Path], obj: Any) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(artifact_dumps(obj, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"Cannot write {path}: {e}") from e
    return path


def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"Cannot read {path}: {e}") from e
    try:
        return artifact_loads(text)
    except ArtifactError as e:
        raise ArtifactError(f"{path}: {e}") from e
