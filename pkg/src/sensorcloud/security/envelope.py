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

"""Field-level encryption: fields at one JSON level are sealed into a single ``ev`` array.

Each element of ``ev`` carries an unprotected JWE-style header naming the key (``kid``) and the
member it replaced (``typ``). Decryption puts the member back where the ``ev`` array stood.
"""

import copy
import json
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from ..codec import JsonDocument, base64url_decode, base64url_encode, canonicalize
from ..errors import (
    AuthenticationFailure,
    ExpiredKey,
    InvalidEncoding,
    MalformedEnvelope,
    MissingField,
    NonStringValue,
)
from ..messages import Message
from .primitives import IV_BYTES, TAG_BYTES, DataKey, NonceSource, aes_gcm_decrypt, aes_gcm_encrypt

logger = logging.getLogger(__name__)

ALG = "dir"
ENC = "AESGCM256"
READINGS = "e"

Scope = Sequence[Union[str, int]]
KeyResolver = Callable[[str], Optional[DataKey]]


def encrypt_fields(
    doc: Union[JsonDocument, Message],
    scope: Scope,
    field_names: Sequence[str],
    key: DataKey,
    nonce_source: NonceSource,
    at: Optional[int] = None,
    allow_expired: bool = False,
) -> JsonDocument:
    """Replace ``field_names`` of the object at ``scope`` by one ``ev`` array.

    :param scope: path from the document root to the object, e.g. ``("e", 0)`` for the first
        reading or ``()`` for the top level.
    :param at: the time (ms) the protected data belongs to; when given, an expired ``key`` is
        refused unless ``allow_expired`` is set.
    """
    if at is not None and not key.is_valid_at(at) and not allow_expired:
        raise ExpiredKey(f"data key {key.kid} is not valid at {at} (window {key.validity})")

    out = copy.deepcopy(doc.to_document() if isinstance(doc, Message) else doc)
    obj = _scope_object(out, scope)
    wanted = list(dict.fromkeys(field_names))
    for name in wanted:
        if name not in obj:
            raise MissingField(f"member {name!r} not found in scope {list(scope)}")
        value = obj[name]
        if name == READINGS:
            if not isinstance(value, list):
                raise NonStringValue("the readings array must be an array")
        elif not isinstance(value, str):
            raise NonStringValue(f"member {name!r} does not hold a string")

    existing = obj.get("ev")
    if existing is not None and not isinstance(existing, list):
        raise MalformedEnvelope("existing ev member is not an array")

    sealed = [_seal(name, obj[name], key, nonce_source) for name in obj if name in wanted]
    rebuilt: Dict[str, Any] = {}
    for name, value in obj.items():
        if name in wanted:
            if existing is None and "ev" not in rebuilt:
                rebuilt["ev"] = sealed
        elif name == "ev":
            rebuilt["ev"] = list(value) + sealed
        else:
            rebuilt[name] = value
    obj.clear()
    obj.update(rebuilt)
    return out


def encrypt_readings_array(
    doc: Union[JsonDocument, Message],
    key: DataKey,
    nonce_source: NonceSource,
    at: Optional[int] = None,
    allow_expired: bool = False,
) -> JsonDocument:
    """Encrypt the whole ``e`` array of a data item into a single ``ev`` element.

    Discouraged: the sensor ids become invisible, so the cloud can no longer select items by
    sensor and a service must decrypt everything to read anything.
    """
    return encrypt_fields(doc, (), [READINGS], key, nonce_source, at=at, allow_expired=allow_expired)


def decrypt_message(
    doc: Union[JsonDocument, Message], resolver: KeyResolver
) -> Tuple[JsonDocument, List[str]]:
    """Open every ``ev`` element whose ``kid`` the resolver knows.

    Returns the document with decrypted members reinstated, plus the kids that could not be
    resolved (their elements stay in place). A single failing tag rejects the whole message.
    """
    out = copy.deepcopy(doc.to_document() if isinstance(doc, Message) else doc)
    missing: List[str] = []
    _open(out, resolver, missing)
    return out, missing


def envelope_kids(doc: Any) -> List[str]:
    """Every kid referenced by an ``ev`` element anywhere in the document, in order."""
    kids: List[str] = []
    if isinstance(doc, list):
        for item in doc:
            kids.extend(k for k in envelope_kids(item) if k not in kids)
    elif isinstance(doc, dict):
        for name, value in doc.items():
            if name == "ev" and isinstance(value, list):
                for element in value:
                    try:
                        kid = element["unprotected"]["kid"]
                    except (KeyError, TypeError):
                        continue
                    if kid not in kids:
                        kids.append(kid)
            else:
                kids.extend(k for k in envelope_kids(value) if k not in kids)
    return kids


def _scope_object(doc: JsonDocument, scope: Scope) -> Dict[str, Any]:
    obj: Any = doc
    for step in scope:
        try:
            obj = obj[step]
        except (KeyError, IndexError, TypeError) as err:
            raise MissingField(f"scope {list(scope)} does not exist") from err
    if not isinstance(obj, dict):
        raise MissingField(f"scope {list(scope)} is not an object")
    return obj


def _seal(name: str, value: Any, key: DataKey, nonce_source: NonceSource) -> Dict[str, Any]:
    plaintext = canonicalize(value) if name == READINGS else value.encode("utf-8")
    iv = nonce_source()
    ciphertext, tag = aes_gcm_encrypt(key.material, iv, plaintext)
    return {
        "unprotected": {"alg": ALG, "enc": ENC, "kid": key.kid, "typ": name},
        "iv": base64url_encode(iv),
        "ciphertext": base64url_encode(ciphertext),
        "tag": base64url_encode(tag),
    }


def _parse_element(element: Any) -> Tuple[str, str, bytes, bytes, bytes]:
    if not isinstance(element, dict):
        raise MalformedEnvelope("ev element is not an object")
    header = element.get("unprotected")
    if not isinstance(header, dict):
        raise MalformedEnvelope("ev element has no unprotected header")
    if header.get("alg") != ALG or header.get("enc") != ENC:
        raise MalformedEnvelope(f"unsupported algorithm {header.get('alg')}/{header.get('enc')}")
    kid, typ = header.get("kid"), header.get("typ")
    if not isinstance(kid, str) or not kid or not isinstance(typ, str) or not typ:
        raise MalformedEnvelope("ev header needs kid and typ")
    try:
        iv = base64url_decode(element["iv"])
        ciphertext = base64url_decode(element["ciphertext"])
        tag = base64url_decode(element["tag"])
    except (KeyError, InvalidEncoding) as err:
        raise MalformedEnvelope(f"ev element is incomplete: {err}") from err
    if len(iv) != IV_BYTES or len(tag) != TAG_BYTES:
        raise MalformedEnvelope("iv must be 12 bytes and tag 16 bytes")
    return kid, typ, iv, ciphertext, tag


def _restore(name: str, plaintext: bytes) -> Any:
    try:
        text = plaintext.decode("utf-8")
        if name != READINGS:
            return text
        value = json.loads(text)
    except ValueError as err:
        raise MalformedEnvelope(f"decrypted {name!r} is not valid") from err
    if not isinstance(value, list):
        raise MalformedEnvelope("decrypted readings are not an array")
    return value


def _open(node: Any, resolver: KeyResolver, missing: List[str]) -> None:
    if isinstance(node, list):
        for item in node:
            _open(item, resolver, missing)
        return
    if not isinstance(node, dict):
        return
    if "ev" in node:
        _open_scope(node, resolver, missing)
    for name, value in node.items():
        if name != "ev":
            _open(value, resolver, missing)


def _open_scope(obj: Dict[str, Any], resolver: KeyResolver, missing: List[str]) -> None:
    ev = obj["ev"]
    if not isinstance(ev, list) or not ev:
        raise MalformedEnvelope("ev must be a non-empty array")

    opened: Dict[str, Any] = {}
    remaining = []
    for element in ev:
        kid, typ, iv, ciphertext, tag = _parse_element(element)
        key = resolver(kid)
        if key is None:
            remaining.append(element)
            if kid not in missing:
                missing.append(kid)
            continue
        try:
            plaintext = aes_gcm_decrypt(key.material, iv, ciphertext, tag)
        except AuthenticationFailure:
            logger.warning(f"Rejecting message: ev element for {typ!r} under {kid} failed authentication")
            raise
        if typ in obj or typ in opened:
            raise MalformedEnvelope(f"decrypted member {typ!r} is already present")
        opened[typ] = _restore(typ, plaintext)

    rebuilt: Dict[str, Any] = {}
    for name, value in obj.items():
        if name == "ev":
            rebuilt.update(opened)
            if remaining:
                rebuilt["ev"] = remaining
        else:
            rebuilt[name] = value
    obj.clear()
    obj.update(rebuilt)
