#  Copyright (c) 2026. SensorCloud Protocol contributors. All rights reserved.
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#  https://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.

"""Wire rendering, canonical form and the binary-to-text encodings the protocol mandates.

Two renderings of the same document exist. The *wire* rendering keeps member order exactly as
stored (the layouts prescribe an order). The *canonical* rendering sorts members and is the only
form that is ever hashed or signed.
"""

import base64
import codecs
import hashlib
import json
import re
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

from cryptography.exceptions import UnsupportedAlgorithm
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec

from .errors import InvalidEncoding, InvalidPem, MalformedJson

JsonDocument = Dict[str, Any]

_BASE64URL = re.compile(r"[A-Za-z0-9_-]*")
_NUMBER_CHARS = frozenset("0123456789+-.eE")
_NON_FINITE = frozenset(("NaN", "Infinity", "-Infinity"))
MAX_DEPTH = 32


def encode_wire(doc: JsonDocument) -> str:
    """Render a document as compact JSON, members in stored order."""
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def parse_wire(text: Union[str, bytes]) -> JsonDocument:
    """Parse wire text into a document, preserving member order.

    Only the JSON subset used by the protocol is accepted: objects, arrays, strings, booleans and
    non-negative integers, nested at most ``MAX_DEPTH`` levels. Floats (including ``NaN`` and
    ``Infinity``), nulls, negative numbers, duplicate member names, a byte-order mark and invalid
    UTF-8 are all reported as :class:`MalformedJson` with the byte offset.
    """
    if isinstance(text, (bytes, bytearray)):
        raw = bytes(text)
        if raw.startswith(codecs.BOM_UTF8):
            raise MalformedJson("byte-order mark is not allowed", offset=0)
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as err:
            raise MalformedJson("invalid UTF-8", offset=err.start) from err
    if text.startswith("\ufeff"):
        raise MalformedJson("byte-order mark is not allowed", offset=0)

    try:
        # non-finite literals decode to their names and are rejected by the subset check
        doc = json.loads(text, parse_constant=str)
    except json.JSONDecodeError as err:
        raise MalformedJson(err.msg, offset=_byte_offset(text, err.pos)) from err
    except RecursionError as err:
        raise MalformedJson(f"nesting deeper than {MAX_DEPTH} levels", offset=None) from err
    except ValueError as err:
        # surrogate escapes that do not form valid code points
        raise MalformedJson(str(err), offset=None) from err

    _check_protocol_subset(text)
    if not isinstance(doc, dict):
        raise MalformedJson("top-level value must be an object", offset=0)
    return doc


def canonicalize(doc: Any) -> bytes:
    """Canonical bytes: members sorted by name, no insignificant whitespace, UTF-8.

    Sorting by code point is the same as sorting by UTF-8 bytes.
    """
    return json.dumps(
        doc, ensure_ascii=False, sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode("utf-8")


def signature_input(doc: JsonDocument) -> bytes:
    """The exact bytes handed to ES256: base64url(SHA-256(canonical form with an empty sig)).

    Any existing ``sig`` member is replaced by ``{}`` first, so signer and verifier agree.
    """
    payload = dict(doc)
    payload["sig"] = {}
    digest = hashlib.sha256(canonicalize(payload)).digest()
    return base64url_encode(digest).encode("ascii")


def base64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(bytes(data)).rstrip(b"=").decode("ascii")


def base64url_decode(text: str) -> bytes:
    """Strict unpadded base64url: no padding, no whitespace, no stray trailing bits."""
    if not isinstance(text, str) or _BASE64URL.fullmatch(text) is None:
        raise InvalidEncoding("illegal character in base64url text")
    if len(text) % 4 == 1:
        raise InvalidEncoding(f"impossible base64url length {len(text)}")
    data = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    if base64url_encode(data) != text:
        raise InvalidEncoding("non-canonical base64url trailing bits")
    return data


def pem_encode_public_key(key: ec.EllipticCurvePublicKey) -> str:
    return key.public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
    ).decode("ascii")


def pem_decode_public_key(text: str) -> ec.EllipticCurvePublicKey:
    try:
        key = serialization.load_pem_public_key(text.encode("ascii"))
    except (ValueError, TypeError, UnicodeEncodeError, UnsupportedAlgorithm) as err:
        raise InvalidPem(f"cannot load PEM public key: {err}") from err
    if not isinstance(key, ec.EllipticCurvePublicKey):
        raise InvalidPem("PEM does not hold an elliptic-curve public key")
    if not isinstance(key.curve, ec.SECP256R1):
        raise InvalidPem(f"expected curve P-256, got {key.curve.name}")
    return key


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8", errors="surrogatepass"))


def _string_end(text: str, start: int) -> int:
    i = start + 1
    while text[i] != '"':
        i += 2 if text[i] == "\\" else 1
    return i + 1


def _next_significant(text: str, i: int) -> Optional[str]:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return text[i] if i < len(text) else None


def _tokens(text: str) -> Iterator[Tuple[int, str]]:
    """Yield (char offset, token) for structural characters, strings and bare words.

    Only called on text json.loads already accepted, so no error handling is needed here.
    """
    i = 0
    while i < len(text):
        c = text[i]
        if c == '"':
            j = _string_end(text, i)
            yield i, text[i:j]
            i = j
        elif c in "{}[]:,":
            yield i, c
            i += 1
        elif c in " \t\r\n":
            i += 1
        else:
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] in _NUMBER_CHARS):
                j += 1
            yield i, text[i:j]
            i = j


def _check_protocol_subset(text: str) -> None:
    # None marks an array level, a set tracks the member names of an object level
    stack: List[Optional[set]] = []
    for pos, token in _tokens(text):
        if token in ("{", "["):
            if len(stack) == MAX_DEPTH:
                raise MalformedJson(
                    f"nesting deeper than {MAX_DEPTH} levels", offset=_byte_offset(text, pos)
                )
            stack.append(set() if token == "{" else None)
        elif token in ("}", "]"):
            stack.pop()
        elif token.startswith('"'):
            names = stack[-1] if stack else None
            if names is not None and _next_significant(text, pos + len(token)) == ":":
                name = json.loads(token)
                if name in names:
                    raise MalformedJson(
                        f"duplicate member name {name!r}", offset=_byte_offset(text, pos)
                    )
                names.add(name)
        elif token in _NON_FINITE:
            raise MalformedJson(
                f"{token} is not used by the protocol", offset=_byte_offset(text, pos)
            )
        elif token == "null":
            raise MalformedJson("null is not used by the protocol", offset=_byte_offset(text, pos))
        elif token[0] == "-":
            raise MalformedJson(
                "negative numbers are not used by the protocol", offset=_byte_offset(text, pos)
            )
        elif token[0].isdigit() and any(c in token for c in ".eE"):
            raise MalformedJson(
                "floating point numbers are not used by the protocol",
                offset=_byte_offset(text, pos),
            )
