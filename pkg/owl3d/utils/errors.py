"""
Exceptions raised by the toolkit. Callers at the edges (CLI, HTTP routes)
translate these into exit codes or HTTP responses.
"""
from typing import Optional


class Owl3dError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class FormatError(Owl3dError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path:
            location += f"{path}"
        if line is not None:
            location += f" line {line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)


class SchemaError(FormatError):
    def __init__(self, message: str, json_path: str, path: Optional[str] = None, line: Optional[int] = None):
        self.json_path = json_path
        super().__init__(f"{json_path}: {message}", path=path, line=line)


class CalibrationError(Owl3dError):
    pass


class InvalidInputError(Owl3dError):
    pass


def format_json_path(loc) -> str:
    """Render a pydantic error location such as ('objects', 0, 'box') as objects[0].box"""
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out or "$"


def schema_error_from_validation(exc, path: Optional[str] = None, line: Optional[int] = None) -> SchemaError:
    """Convert the first error of a pydantic ValidationError into a SchemaError."""
    first = exc.errors()[0]
    return SchemaError(first.get("msg", "invalid value"), format_json_path(first.get("loc", ())), path=path, line=line)
