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

"""Checks every MUST clause of the message layouts and reports violations instead of raising."""

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Union

from .codec import JsonDocument, base64url_decode, pem_decode_public_key
from .errors import InvalidEncoding, InvalidPem
from .messages import (
    PROTOCOL_VERSION,
    Message,
    MessageType,
    TransmissionHeader,
    parse_wire_int,
    reading_key,
)

LAYOUTS: Dict[MessageType, tuple] = {
    MessageType.SENSOR_DATA: ("typ", "gw", "bn", "bt", "e"),
    MessageType.SENSOR_DATA_REQUEST: ("typ", "gw", "srv", "lim", "off", "bt", "bn", "e"),
    MessageType.CONFIGURATION: ("typ", "gw", "bn", "js"),
    MessageType.ACTUATOR_COMMAND: ("typ", "gw", "srv", "bn", "seq", "fn", "e"),
    MessageType.ACTUATOR_RESPONSE: ("typ", "gw", "srv", "bn", "seq", "fn", "e"),
    MessageType.DATA_KEY_UPLOAD: ("typ", "gw", "srv", "bt", "bn", "e"),
    MessageType.DATA_KEY_DOWNLOAD: ("typ", "gw", "srv", "kid"),
    MessageType.PUBLIC_KEY_REQUEST: ("typ", "id"),
    MessageType.PUBLIC_KEY_RESPONSE: ("typ", "key"),
}
READING_LAYOUT = ("n", "t", "sv")
ENVELOPE_MEMBERS = ("unprotected", "iv", "ciphertext", "tag")
IV_BYTES = 12
TAG_BYTES = 16


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def as_dict(self) -> Dict[str, str]:
        return {"field": self.field, "rule": self.rule}


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)
    warnings: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> Set[str]:
        return {v.rule for v in self.violations}

    def as_dict(self) -> Dict[str, Any]:
        return {
            "valid": self.ok,
            "violations": [v.as_dict() for v in self.violations],
            "warnings": [w.as_dict() for w in self.warnings],
        }


def encrypted_names(obj: Dict[str, Any]) -> Set[str]:
    """Names of the members an ``ev`` array in this scope stands in for."""
    names = set()
    ev = obj.get("ev")
    if isinstance(ev, list):
        for element in ev:
            unprotected = element.get("unprotected") if isinstance(element, dict) else None
            if isinstance(unprotected, dict) and isinstance(unprotected.get("typ"), str):
                names.add(unprotected["typ"])
    return names


def validate(msg: Union[Message, TransmissionHeader, JsonDocument]) -> ValidationReport:
    """Validate a header or a single message; an empty violation list means valid."""
    if isinstance(msg, (Message, TransmissionHeader)):
        msg = msg.to_document()
    checker = _Checker()
    if not isinstance(msg, dict):
        checker.violation("", "must be an object")
    elif "pl" in msg or "ver" in msg:
        checker.header(msg)
    else:
        checker.message(msg, "")
    return checker.report


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name


class _Checker:
    def __init__(self):
        self.report = ValidationReport()

    def violation(self, field_name: str, rule: str):
        self.report.violations.append(Violation(field_name, rule))

    def warning(self, field_name: str, rule: str):
        self.report.warnings.append(Violation(field_name, rule))

    # generic member checks

    def member(self, obj: dict, name: str, path: str, kind: str, required: bool = True) -> Any:
        where = _join(path, name)
        if name not in obj:
            if required and name not in encrypted_names(obj):
                self.violation(where, "missing required member")
            return None
        value = obj[name]
        if kind == "number":
            return self.number(value, where)
        expected = {"string": str, "array": list, "object": dict}[kind]
        if not isinstance(value, expected) or isinstance(value, bool):
            self.violation(where, f"must be a{'n' if kind[0] in 'ao' else ''} {kind}")
            return None
        return value

    def number(self, value: Any, where: str) -> Optional[int]:
        if isinstance(value, int) and not isinstance(value, bool):
            self.warning(where, "number not quoted")
        try:
            return parse_wire_int(value)
        except ValueError:
            self.violation(where, "must be a non-negative integer")
            return None

    def ids(self, obj: dict, names: Iterable[str], path: str):
        for name in names:
            value = self.member(obj, name, path, "string")
            if value == "":
                self.violation(_join(path, name), "must not be empty")

    def order(self, obj: dict, layout: tuple, path: str):
        positions = [layout.index(name) for name in obj if name in layout]
        if positions != sorted(positions):
            self.violation(path or "$", "member order")

    def unknown(self, obj: dict, allowed: Iterable[str], path: str):
        for name in obj:
            if name not in allowed:
                self.warning(_join(path, name), "unknown member")

    # header and dispatch

    def header(self, doc: dict):
        ver = self.member(doc, "ver", "", "number")
        if ver is not None and ver != PROTOCOL_VERSION:
            self.violation("ver", "unsupported version")
        seq = self.member(doc, "seq", "", "number")
        if seq is not None and seq != 0:
            self.violation("seq", "sequence number must be 0")
        pl = self.member(doc, "pl", "", "array")
        if pl is not None:
            if not pl:
                self.violation("pl", "empty payload")
            for i, msg in enumerate(pl):
                if isinstance(msg, dict):
                    self.message(msg, f"pl[{i}]")
                else:
                    self.violation(f"pl[{i}]", "must be an object")
        self.unknown(doc, ("ver", "seq", "pl"), "")

    def message(self, doc: dict, path: str):
        if "typ" not in doc:
            self.violation(_join(path, "typ"), "missing required member")
            return
        raw = doc["typ"]
        try:
            typ = MessageType(parse_wire_int(raw))
        except ValueError:
            self.violation(_join(path, "typ"), "unknown message type")
            return
        if isinstance(raw, int):
            self.warning(_join(path, "typ"), "number not quoted")

        getattr(self, f"type_{typ.value}")(doc, path)
        layout = LAYOUTS[typ]
        self.order(doc, layout, path)
        self.unknown(doc, layout + ("ev", "sig"), path)
        if "ev" in doc:
            self.envelopes(doc["ev"], _join(path, "ev"))
        if "sig" in doc:
            self.signature(doc, path)

    # per type

    def type_1(self, doc: dict, path: str):
        self.ids(doc, ("gw", "bn"), path)
        self.member(doc, "bt", path, "number")
        e = self.member(doc, "e", path, "array")
        if e is not None:
            self.readings(e, _join(path, "e"))

    def readings(self, e: list, path: str):
        keyed = []
        for i, reading in enumerate(e):
            where = f"{path}[{i}]"
            if not isinstance(reading, dict):
                self.violation(where, "must be an object")
                continue
            n = self.member(reading, "n", where, "string")
            t = self.member(reading, "t", where, "number", required=False)
            if "sv" in reading and "ev" in reading:
                self.violation(where, "sv and ev are exclusive")
            elif "sv" in reading:
                self.member(reading, "sv", where, "string")
            elif "ev" in reading:
                self.envelopes(reading["ev"], _join(where, "ev"))
            else:
                self.violation(_join(where, "sv"), "missing required member")
            self.order(reading, READING_LAYOUT, where)
            self.unknown(reading, READING_LAYOUT + ("ev",), where)
            if n is not None:
                keyed.append((reading_key(n, t), where))

        seen = set()
        for key, where in keyed:
            if key in seen:
                self.violation(where, "duplicate (n,t)")
            seen.add(key)
        for (previous, _), (current, where) in zip(keyed, keyed[1:]):
            if previous > current:
                self.violation(path, "readings not sorted")
                break

    def type_2(self, doc: dict, path: str):
        self.ids(doc, ("gw", "srv"), path)
        lim = self.member(doc, "lim", path, "number", required=False)
        if lim == 0:
            self.violation(_join(path, "lim"), "must be positive")
        self.member(doc, "off", path, "number", required=False)

        bt = self.member(doc, "bt", path, "array", required=False)
        if bt is not None:
            where = _join(path, "bt")
            if len(bt) > 2:
                self.violation(where, "bt has more than two elements")
            bounds = [self.number(x, f"{where}[{i}]") for i, x in enumerate(bt[:2])]
            if len(bounds) == 2 and None not in bounds and bounds[0] > bounds[1]:
                self.violation(where, "bt lower bound exceeds upper bound")

        bn = self.member(doc, "bn", path, "array", required=False)
        for i, node in enumerate(bn or ()):
            if not isinstance(node, str):
                self.violation(f"{_join(path, 'bn')}[{i}]", "must be a string")

        e = self.member(doc, "e", path, "array", required=False)
        for i, entry in enumerate(e or ()):
            where = f"{_join(path, 'e')}[{i}]"
            if not isinstance(entry, dict):
                self.violation(where, "must be an object")
                continue
            self.member(entry, "n", where, "string")
            self.unknown(entry, ("n",), where)

    def type_3(self, doc: dict, path: str):
        self.ids(doc, ("gw", "bn"), path)
        js = self.member(doc, "js", path, "string")
        if js is not None:
            try:
                json.loads(js)
            except ValueError:
                self.violation(_join(path, "js"), "js is not valid JSON text")

    def type_4(self, doc: dict, path: str, seq_required: bool = False):
        self.ids(doc, ("gw", "srv", "bn"), path)
        self.member(doc, "seq", path, "number", required=seq_required)
        self.member(doc, "fn", path, "string", required=False)
        e = self.member(doc, "e", path, "array")
        for i, entry in enumerate(e or ()):
            where = f"{_join(path, 'e')}[{i}]"
            if not isinstance(entry, dict):
                self.violation(where, "must be an object")
                continue
            self.member(entry, "n", where, "string")
            self.member(entry, "sv", where, "string")
            self.order(entry, ("n", "sv"), where)
            self.unknown(entry, ("n", "sv"), where)

    def type_5(self, doc: dict, path: str):
        self.type_4(doc, path, seq_required=True)

    def type_400(self, doc: dict, path: str):
        self.ids(doc, ("gw", "srv", "bn"), path)
        bt = self.member(doc, "bt", path, "array")
        if bt is not None:
            where = _join(path, "bt")
            if len(bt) != 2:
                self.violation(where, "bt must have exactly two elements")
            else:
                start, end = (self.number(x, f"{where}[{i}]") for i, x in enumerate(bt))
                if start is not None and end is not None and start > end:
                    self.violation(where, "bt lower bound exceeds upper bound")
        e = self.member(doc, "e", path, "array")
        for i, entry in enumerate(e or ()):
            where = f"{_join(path, 'e')}[{i}]"
            if not isinstance(entry, dict):
                self.violation(where, "must be an object")
                continue
            self.ids(entry, ("n", "kid"), where)
            k = self.member(entry, "k", where, "string")
            if k is not None and not _is_base64url(k):
                self.violation(_join(where, "k"), "must be base64url")
            self.order(entry, ("n", "kid", "k"), where)
            self.unknown(entry, ("n", "kid", "k"), where)

    def type_401(self, doc: dict, path: str):
        self.ids(doc, ("gw", "srv", "kid"), path)

    def type_402(self, doc: dict, path: str):
        self.ids(doc, ("id",), path)

    def type_403(self, doc: dict, path: str):
        key = self.member(doc, "key", path, "string")
        if key is not None:
            try:
                pem_decode_public_key(key)
            except InvalidPem:
                self.violation(_join(path, "key"), "key is not a PEM P-256 public key")

    # security members

    def envelopes(self, ev: Any, path: str):
        if not isinstance(ev, list) or not ev:
            self.violation(path, "must be a non-empty array")
            return
        for i, element in enumerate(ev):
            where = f"{path}[{i}]"
            if not isinstance(element, dict):
                self.violation(where, "must be an object")
                continue
            unprotected = self.member(element, "unprotected", where, "object")
            if unprotected is not None:
                header = _join(where, "unprotected")
                if unprotected.get("alg") != "dir":
                    self.violation(_join(header, "alg"), "alg must be dir")
                if unprotected.get("enc") != "AESGCM256":
                    self.violation(_join(header, "enc"), "enc must be AESGCM256")
                self.ids(unprotected, ("kid", "typ"), header)
            for name, size in (("iv", IV_BYTES), ("ciphertext", None), ("tag", TAG_BYTES)):
                text = self.member(element, name, where, "string")
                if text is None:
                    continue
                try:
                    raw = base64url_decode(text)
                except InvalidEncoding:
                    self.violation(_join(where, name), "must be base64url")
                    continue
                if size is not None and len(raw) != size:
                    self.violation(_join(where, name), f"{name} must be {size} bytes")
            self.unknown(element, ENVELOPE_MEMBERS, where)

    def signature(self, doc: dict, path: str):
        where = _join(path, "sig")
        sig = doc["sig"]
        if not isinstance(sig, dict):
            self.violation(where, "must be an object")
            return
        if not sig:
            self.violation(where, "empty signature block")
            return
        signatures = sig.get("signatures")
        if not isinstance(signatures, list) or len(signatures) != 1:
            self.violation(_join(where, "signatures"), "exactly one signature")
            return
        entry = signatures[0]
        entry_path = _join(where, "signatures[0]")
        if not isinstance(entry, dict):
            self.violation(entry_path, "must be an object")
            return
        header = self.member(entry, "header", entry_path, "object")
        if header is not None:
            if header.get("alg") != "ES256":
                self.violation(_join(entry_path, "header.alg"), "alg must be ES256")
            if "gw" not in doc and not header.get("kid"):
                self.violation(_join(entry_path, "header.kid"), "kid required without gw")
        signature = self.member(entry, "signature", entry_path, "string")
        if signature is not None and not _is_base64url(signature):
            self.violation(_join(entry_path, "signature"), "must be base64url")


def _is_base64url(text: str) -> bool:
    try:
        base64url_decode(text)
    except InvalidEncoding:
        return False
    return True
