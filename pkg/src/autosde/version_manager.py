"""
Artifact schema version management for autosde.

Every JSON artifact records the kind of object it holds and the schema
version it was written with. This module knows which versions each kind
supports and refuses to load anything outside that range, so an old reader
never silently misinterprets a newer file.

Key Functions:
    - get_supported_schemas(): Version table per artifact kind
    - current_schema_version(): Version written by this build
    - is_schema_version_supported(): Check one version with a reason
    - validate_schema_version(): Raise on unsupported versions

Author: F. Herbrand
License: MIT
"""

import json
import warnings
from pathlib import Path
from typing import Any, Dict, Tuple

from packaging import version

from .errors import SchemaVersionError

# Default supported schemas (embedded fallback)
DEFAULT_SUPPORTED_SCHEMAS: Dict[str, Any] = {
    "schemas": {
        kind: {"current": "1", "min_supported": "1"}
        for kind in (
            "ensemble",
            "estimated_sde",
            "model",
            "run_manifest",
            "manifold",
            "reduced_system",
            "comparison_report",
        )
    },
    "known_issues": {},
    "update_source": "embedded",
}


def _load_supported_schemas() -> Dict[str, Any]:
    """
    Load the schema table from ``supported_schema_versions.json`` or return defaults.
    """
    try:
        config_path = Path(__file__).parent / "supported_schema_versions.json"
        if config_path.exists():
            with open(config_path, "r", encoding="utf-8") as f:
                return json.load(f)
    except Exception as e:
        warnings.warn(
            f"Failed to load supported_schema_versions.json: {e}. Using embedded defaults.",
            UserWarning,
            stacklevel=3,
        )
    return json.loads(json.dumps(DEFAULT_SUPPORTED_SCHEMAS))


def get_supported_schemas() -> Dict[str, Any]:
    """
    Get the supported schema versions per artifact kind.

    Examples
    --------
    >>> from autosde import version_manager as vm
    >>> vm.get_supported_schemas()["schemas"]["model"]["current"]
    '1'
    """
    return _load_supported_schemas()


def current_schema_version(kind: str) -> str:
    """Schema version this build writes for ``kind``."""
    schemas = get_supported_schemas()["schemas"]
    if kind not in schemas:
        raise KeyError(f"Unknown artifact kind {kind!r}")
    return schemas[kind]["current"]


def is_schema_version_supported(kind: str, found: str) -> Tuple[bool, str]:
    """
    Check whether an artifact of ``kind`` written with version ``found`` can be read.

    Returns
    -------
    tuple of (bool, str)
        (is_supported, reason)
    """
    info = get_supported_schemas()["schemas"].get(kind)
    if info is None:
        return False, f"Unknown artifact kind {kind!r}"
    try:
        v_found = version.parse(str(found))
        v_min = version.parse(info["min_supported"])
        v_max = version.parse(info["current"])
    except version.InvalidVersion as e:
        return False, f"Failed to parse version {found!r}: {e}"

    if v_found < v_min:
        return False, f"Version {found} is below minimum supported {info['min_supported']}"
    if v_found > v_max:
        return False, f"Version {found} is newer than supported {info['current']}"
    issue = get_supported_schemas().get("known_issues", {}).get(f"{kind}:{found}")
    if issue:
        return True, f"Supported with known issues: {issue}"
    return True, "Supported version"


def validate_schema_version(kind: str, found: Any) -> None:
    """
    Raise unless ``found`` is a supported schema version for ``kind``.

    Raises
    ------
    SchemaVersionError
        Naming the expected and found versions
    """
    supported, reason = is_schema_version_supported(kind, str(found))
    if not supported:
        try:
            expected = current_schema_version(kind)
        except KeyError:
            expected = "none"
        raise SchemaVersionError(kind, expected, str(found))
    if "known issues" in reason:
        warnings.warn(f"{kind} schema {found}: {reason}", UserWarning, stacklevel=2)


def print_version_info() -> None:
    """Print the schema table for debugging."""
    info = get_supported_schemas()
    print("🔍 Artifact Schema Versions")
    print("=" * 40)
    for kind, entry in sorted(info["schemas"].items()):
        print(f"   {kind:<18} current {entry['current']}  (min {entry['min_supported']})")
    print(f"   source: {info.get('update_source', 'unknown')}")
