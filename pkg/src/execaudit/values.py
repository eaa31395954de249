"""Scalar values shared by the interpreter, the objects and the file formats.

Scalars are int64, bool and str.  ``ABSENT`` (Python ``None``) is what a read
of a never-written register or key returns.  Python treats ``True == 1``, so
anything that compares program values goes through :func:`canon`.
"""

from __future__ import annotations

import base64
import re
from typing import Any, Union

Scalar = Union[int, bool, str, None]

ABSENT = None

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

_SAFE_TOKEN = re.compile(r"^[A-Za-z0-9_.:/\-]+$")


def is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def is_scalar(v: Any) -> bool:
    if v is None or isinstance(v, (bool, str)):
        return True
    return is_int(v) and INT64_MIN <= v <= INT64_MAX


def wrap_int64(v: int) -> int:
    return (v - INT64_MIN) % 2**64 + INT64_MIN


def canon(v: Any) -> Any:
    """Hashable, type-tagged form of a value (recursing into tuples/lists)."""
    if v is None:
        return ("n",)
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, int):
        return ("i", v)
    if isinstance(v, str):
        return ("s", v)
    if isinstance(v, bytes):
        return ("y", v)
    if isinstance(v, (tuple, list)):
        return ("t",) + tuple(canon(x) for x in v)
    key = getattr(v, "canon_key", None)
    if key is not None:
        return key()
    raise TypeError(f"no canonical form for {type(v).__name__}")


def same(a: Any, b: Any) -> bool:
    try:
        return canon(a) == canon(b)
    except TypeError:
        return False


def render(v: Scalar) -> str:
    """Text a value contributes to a response body."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def encode(v: Scalar) -> str:
    """Single-token typed encoding used in trace and report files."""
    if v is None:
        return "n"
    if isinstance(v, bool):
        return "b:1" if v else "b:0"
    if isinstance(v, int):
        return f"i:{v}"
    if isinstance(v, str):
        return "s:" + base64.b64encode(v.encode("utf-8")).decode("ascii")
    raise TypeError(f"cannot encode {v!r}")


def decode(tok: str) -> Scalar:
    if tok == "n":
        return None
    tag, sep, body = tok.partition(":")
    if not sep:
        raise ValueError(f"bad value token {tok!r}")
    if tag == "i":
        v = int(body)
        if not INT64_MIN <= v <= INT64_MAX:
            raise ValueError(f"int out of range: {tok!r}")
        return v
    if tag == "b":
        if body not in ("0", "1"):
            raise ValueError(f"bad bool token {tok!r}")
        return body == "1"
    if tag == "s":
        return base64.b64decode(body.encode("ascii"), validate=True).decode("utf-8")
    raise ValueError(f"bad value token {tok!r}")


def encode_name(s: str) -> str:
    """Names (rids, object ids, handlers) stay readable unless unsafe."""
    if _SAFE_TOKEN.match(s):
        return s
    return "~" + base64.urlsafe_b64encode(s.encode("utf-8")).decode("ascii").rstrip("=")


def decode_name(tok: str) -> str:
    if tok.startswith("~"):
        body = tok[1:]
        return base64.urlsafe_b64decode(body + "=" * (-len(body) % 4)).decode("utf-8")
    if not tok or not _SAFE_TOKEN.match(tok):
        raise ValueError(f"bad name token {tok!r}")
    return tok
