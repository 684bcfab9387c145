"""Small helpers for strict JSON parsing with positional errors."""
import json

from .errors import ParseError


def loads(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", position=e.pos) from None


def expect(obj, cls, path):
    names = {dict: "object", list: "array", str: "string", bool: "boolean"}
    if cls is float:
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise ParseError("expected number", position=path)
        return float(obj)
    if cls is int:
        if isinstance(obj, bool) or not isinstance(obj, int):
            raise ParseError("expected integer", position=path)
        return obj
    if not isinstance(obj, cls):
        raise ParseError(f"expected {names.get(cls, cls.__name__)}", position=path)
    return obj


def get(obj, key, cls, path):
    expect(obj, dict, path)
    if key not in obj:
        raise ParseError(f"missing field {key!r}", position=path)
    return expect(obj[key], cls, f"{path}.{key}")
