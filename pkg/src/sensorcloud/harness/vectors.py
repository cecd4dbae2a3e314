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

"""Deterministic conformance vectors for cross-implementation checks.

Three line-oriented files are produced, one JSON record per line with binary fields in base64url:
``messages.jsonl`` (wire and canonical forms of every message type with the expected validation
verdict, plus single-defect mutations), ``envelope.jsonl`` (field encryption under a fixed key and
counter nonces) and ``signatures.jsonl`` (ES256 signatures).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..codec import base64url_encode, canonicalize, encode_wire, pem_encode_public_key, signature_input
from ..messages import (
    ActuatorCommand,
    ActuatorResponse,
    ConfigurationMessage,
    DataKeyDownload,
    DataKeyEntry,
    DataKeyUpload,
    Message,
    MessageType,
    Parameter,
    PublicKeyRequest,
    PublicKeyResponse,
    SensorDataMessage,
    SensorDataRequest,
    SensorName,
    SensorReading,
)
from ..security.envelope import encrypt_fields, encrypt_readings_array
from ..security.primitives import (
    CounterNonceSource,
    DataKey,
    EciesKeyWrapper,
    RandomSource,
    SigningKeyPair,
    aes_gcm_encrypt,
    wrap_data_key,
)
from ..security.signing import sign_message
from ..settings import DAY_MS
from ..validation import validate

logger = logging.getLogger(__name__)

FILES = ("messages.jsonl", "envelope.jsonl", "signatures.jsonl")
_SIGNED_BY_SERVICE = (
    MessageType.SENSOR_DATA_REQUEST,
    MessageType.ACTUATOR_COMMAND,
    MessageType.DATA_KEY_DOWNLOAD,
    MessageType.PUBLIC_KEY_REQUEST,
    MessageType.PUBLIC_KEY_RESPONSE,
)


def seeded_rng(seed: int) -> RandomSource:
    """A byte source drawn from numpy's PCG64 generator; equal seeds give equal bytes."""
    generator = np.random.default_rng(seed)
    return lambda n: generator.bytes(n)


def sample_messages(rng: RandomSource) -> List[Message]:
    """One representative message of each type."""
    service = SigningKeyPair.generate("srv1", rng)
    key = DataKey.generate((1_700_000_000_000, 1_700_000_000_000 + DAY_MS - 1), rng)
    wrapped = wrap_data_key(key, service.public_key, EciesKeyWrapper(rng))
    return [
        SensorDataMessage(
            gw="gw1",
            bn="dev1",
            bt=1_700_000_000_000,
            e=[
                SensorReading(n="hum", t=0, sv="41"),
                SensorReading(n="temp", t=0, sv="21.5"),
                SensorReading(n="temp", t=60_000, sv="21.7"),
            ],
        ),
        SensorDataRequest(
            gw="gw1",
            srv="srv1",
            lim=10,
            off=0,
            bt=[1_700_000_000_000, 1_700_086_400_000],
            bn=["dev1"],
            e=[SensorName(n="temp")],
        ),
        ConfigurationMessage(gw="gw1", bn="dev1", js='{"temp":{"unit":"Cel"},"hum":{"unit":"%RH"}}'),
        ActuatorCommand(gw="gw1", srv="srv1", bn="heater", seq=1, fn="set_target", e=[Parameter(n="target", sv="21")]),
        ActuatorResponse(gw="gw1", srv="srv1", bn="heater", seq=1, fn="set_target", e=[Parameter(n="target", sv="21")]),
        DataKeyUpload(
            gw="gw1",
            srv="srv1",
            bt=list(key.validity),
            bn="dev1",
            e=[DataKeyEntry(n="hum", kid=key.kid, k=base64url_encode(wrapped))],
        ),
        DataKeyDownload(gw="gw1", srv="srv1", kid=key.kid),
        PublicKeyRequest(id="gw1"),
        PublicKeyResponse(key=pem_encode_public_key(service.public_key)),
    ]


def generate_vectors(seed: int = 0) -> Dict[str, List[Dict[str, Any]]]:
    rng = seeded_rng(seed)
    messages = sample_messages(rng)
    gateway = SigningKeyPair.generate("gw1", rng)
    service = SigningKeyPair.generate("srv1", rng)
    key = DataKey.generate((1_700_000_000_000, 1_700_000_000_000 + DAY_MS - 1), rng)
    nonces = CounterNonceSource(prefix=rng(4))

    message_records = [_message_record(msg.to_document(), int(msg.typ), type(msg).__name__) for msg in messages]
    for name, doc in _invalid_samples(messages):
        message_records.append(_message_record(doc, int(doc["typ"]), name))

    data_item = messages[0].to_document()
    iv = nonces()
    ciphertext, tag = aes_gcm_encrypt(key.material, iv, b"41")
    envelope_records = [
        {
            "name": "aes-256-gcm",
            "key": base64url_encode(key.material),
            "iv": base64url_encode(iv),
            "plaintext": base64url_encode(b"41"),
            "ciphertext": base64url_encode(ciphertext),
            "tag": base64url_encode(tag),
        },
        _envelope("one reading", key, data_item, encrypt_fields(data_item, ("e", 0), ["sv"], key, nonces)),
        _envelope(
            "configuration schema",
            key,
            messages[2].to_document(),
            encrypt_fields(messages[2], (), ["js"], key, nonces),
        ),
        _envelope("whole readings array", key, data_item, encrypt_readings_array(data_item, key, nonces)),
    ]

    signature_records = []
    for msg in messages:
        doc = msg.to_document()
        signer = service if msg.typ in _SIGNED_BY_SERVICE else gateway
        signed = sign_message(doc, signer)
        signature_records.append(
            {
                "type": int(msg.typ),
                "public_key": pem_encode_public_key(signer.public_key),
                "private_key": signer.private_pem().decode("ascii"),
                "message": encode_wire(doc),
                "signature_input": signature_input(doc).decode("ascii"),
                "signed": encode_wire(signed),
                "signature": signed["sig"]["signatures"][0]["signature"],
            }
        )

    return {"messages.jsonl": message_records, "envelope.jsonl": envelope_records, "signatures.jsonl": signature_records}


def _message_record(doc: Dict[str, Any], typ: int, name: str) -> Dict[str, Any]:
    report = validate(doc)
    return {
        "type": typ,
        "name": name,
        "wire": encode_wire(doc),
        "canonical": base64url_encode(canonicalize(doc)),
        "valid": report.ok,
        "violations": sorted(report.rules()),
    }


def _invalid_samples(messages: List[Message]) -> List[Tuple[str, Dict[str, Any]]]:
    """Single-defect mutations of the sample messages, each violating one layout rule."""
    item, request, config, upload = (messages[i].to_document() for i in (0, 1, 2, 5))
    return [
        ("unsorted readings", dict(item, e=list(reversed(item["e"])))),
        ("duplicate reading", dict(item, e=item["e"][:1] + item["e"])),
        ("zero limit", dict(request, lim="0")),
        ("reversed time bounds", dict(request, bt=list(reversed(request["bt"])))),
        ("missing gateway", {k: v for k, v in config.items() if k != "gw"}),
        ("schema is not JSON", dict(config, js="{")),
        ("open key window", dict(upload, bt=upload["bt"][:1])),
    ]


def _envelope(name: str, key: DataKey, plain: Dict[str, Any], encrypted: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "name": name,
        "key": base64url_encode(key.material),
        "kid": key.kid,
        "plaintext": encode_wire(plain),
        "encrypted": encode_wire(encrypted),
    }


def emit_conformance_vectors(seed: int, out_dir: Union[str, Path]) -> List[Path]:
    """Write the vector files into ``out_dir``; the same seed always yields identical files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, records in generate_vectors(seed).items():
        path = out_dir / name
        with open(path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        written.append(path)
        logger.info(f"Wrote {len(records)} record(s) to {path}")
    return written
