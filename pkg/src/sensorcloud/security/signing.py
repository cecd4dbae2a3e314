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

"""Whole-message signatures: one ES256 entry in a ``sig`` block over the canonical form."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

from cryptography.hazmat.primitives.asymmetric import ec

from ..codec import JsonDocument, base64url_decode, base64url_encode, signature_input
from ..errors import (
    AlreadySigned,
    BadSignature,
    InvalidEncoding,
    MalformedSignatureBlock,
    MissingSignature,
)
from ..messages import Message
from .primitives import SigningKeyPair, es256_sign, es256_verify

logger = logging.getLogger(__name__)

ALG = "ES256"

PublicKeyLookup = Union[
    Mapping[str, ec.EllipticCurvePublicKey],
    Callable[[str], Optional[ec.EllipticCurvePublicKey]],
]


class VerificationStatus(str, Enum):
    VERIFIED = "verified"
    BAD_SIGNATURE = "bad_signature"
    UNKNOWN_SIGNER = "unknown_signer"


@dataclass(frozen=True)
class VerificationResult:
    status: VerificationStatus
    signer: str

    @property
    def ok(self) -> bool:
        return self.status is VerificationStatus.VERIFIED


def sign_message(doc: Union[JsonDocument, Message], keypair: SigningKeyPair) -> JsonDocument:
    """Append a ``sig`` block signed by ``keypair``.

    The header names the signer in ``kid`` whenever the message has no ``gw`` member or its
    ``gw`` is not the signer (a service signing an actuator command).
    """
    if isinstance(doc, Message):
        doc = doc.to_document()
    if "sig" in doc:
        raise AlreadySigned("message already carries a sig member")

    header: Dict[str, str] = {"alg": ALG}
    if doc.get("gw") != keypair.owner:
        header["kid"] = keypair.owner
    signature = es256_sign(keypair.private_key, signature_input(doc))

    signed = dict(doc)
    signed["sig"] = {"signatures": [{"header": header, "signature": base64url_encode(signature)}]}
    return signed


def signer_of(doc: Union[JsonDocument, Message]) -> str:
    """The entity whose key must verify ``doc``: header ``kid`` if present, else ``gw``.

    :func:`sign_message` writes ``kid`` only when the signer is not ``gw``, so for gateway messages
    both orders name the same entity. Actuator commands carry the target ``gw`` but are signed by
    the service named in ``kid``; looking at ``gw`` first would verify them against the gateway.
    """
    if isinstance(doc, Message):
        doc = doc.to_document()
    if "sig" not in doc:
        raise MissingSignature("message carries no sig member")
    header, _ = _signature_entry(doc["sig"])
    signer = header.get("kid") or doc.get("gw")
    if not isinstance(signer, str) or not signer:
        raise MalformedSignatureBlock("cannot determine the signer: no kid and no gw")
    return signer


def verify_signature(
    doc: Union[JsonDocument, Message], directory: PublicKeyLookup
) -> VerificationResult:
    if isinstance(doc, Message):
        doc = doc.to_document()
    signer = signer_of(doc)
    _, signature = _signature_entry(doc["sig"])

    key = directory(signer) if callable(directory) else directory.get(signer)
    if key is None:
        return VerificationResult(VerificationStatus.UNKNOWN_SIGNER, signer)
    if es256_verify(key, signature_input(doc), signature):
        return VerificationResult(VerificationStatus.VERIFIED, signer)
    logger.debug(f"Signature by {signer} does not verify")
    return VerificationResult(VerificationStatus.BAD_SIGNATURE, signer)


def require_verified(doc: Union[JsonDocument, Message], directory: PublicKeyLookup) -> str:
    """Verify ``doc`` and return the signer, raising :class:`BadSignature` on any other outcome."""
    result = verify_signature(doc, directory)
    if not result.ok:
        raise BadSignature(f"signature by {result.signer}: {result.status.value}", signer=result.signer)
    return result.signer


def _signature_entry(block: Any) -> Tuple[Dict[str, Any], bytes]:
    if not isinstance(block, dict) or not isinstance(block.get("signatures"), list):
        raise MalformedSignatureBlock("sig must be an object holding a signatures array")
    signatures = block["signatures"]
    if len(signatures) != 1:
        raise MalformedSignatureBlock(f"exactly one signature expected, found {len(signatures)}")
    entry = signatures[0]
    header = entry.get("header") if isinstance(entry, dict) else None
    if not isinstance(header, dict) or header.get("alg") != ALG:
        raise MalformedSignatureBlock("signature header alg must be ES256")
    kid = header.get("kid")
    if kid is not None and (not isinstance(kid, str) or not kid):
        raise MalformedSignatureBlock("signature header kid must be a non-empty string")
    try:
        signature = base64url_decode(entry.get("signature"))
    except InvalidEncoding as err:
        raise MalformedSignatureBlock("signature is not base64url") from err
    return header, signature
