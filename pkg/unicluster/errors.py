"""
Library error type.

Every engine failure is a ClusteringError with a short machine-readable
code (e.g. "forest-violation", "not grounded"). The CLI prints the code
and exits with status 2.
"""

from typing import Any, Dict


class ClusteringError(Exception):
    """A violated definition, a malformed input, or an impossible request."""

    def __init__(self, code: str, message: str = "", **detail: Any):
        self.code = code
        self.message = message or code
        self.detail: Dict[str, Any] = detail
        super().__init__(f"{code}: {self.message}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "code": self.code,
            "message": self.message,
            "detail": {k: str(v) for k, v in sorted(self.detail.items())},
        }
