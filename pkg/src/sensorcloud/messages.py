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

"""Typed representations of the transmission header and the nine message types.

Models are immutable and render to documents in the member order the layouts show. Numeric
fields are integers in Python and quoted decimal strings on the wire.
"""

from enum import IntEnum
from typing import Annotated, Any, ClassVar, Dict, List, Optional, Sequence, Type, Union

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer
from pydantic import ValidationError

from .codec import JsonDocument
from .errors import (
    DuplicateReading,
    EmptyBatch,
    InvalidSequence,
    UnknownMessageType,
    UnsupportedVersion,
    ValidationFailure,
)

PROTOCOL_VERSION = 1
WILDCARD = "*"


class MessageType(IntEnum):
    SENSOR_DATA = 1
    SENSOR_DATA_REQUEST = 2
    CONFIGURATION = 3
    ACTUATOR_COMMAND = 4
    ACTUATOR_RESPONSE = 5
    DATA_KEY_UPLOAD = 400
    DATA_KEY_DOWNLOAD = 401
    PUBLIC_KEY_REQUEST = 402
    PUBLIC_KEY_RESPONSE = 403


def parse_wire_int(value: Any) -> int:
    """Accept a non-negative integer as a quoted decimal string (wire form) or a plain int."""
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, int):
        if value < 0:
            raise ValueError("protocol numbers are non-negative")
        return value
    if isinstance(value, str) and value.isascii() and value.isdigit():
        if len(value) > 1 and value[0] == "0":
            raise ValueError(f"leading zero in number {value!r}")
        return int(value)
    raise ValueError(f"not a protocol number: {value!r}")


WireInt = Annotated[
    int, BeforeValidator(parse_wire_int), PlainSerializer(str, return_type=str)
]


class _Model(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class JweHeader(_Model):
    alg: str = "dir"
    enc: str = "AESGCM256"
    kid: str
    typ: str


class EncryptedValue(_Model):
    unprotected: JweHeader
    iv: str
    ciphertext: str
    tag: str


class SensorReading(BaseModel):
    """One ``(n, t, sv)`` entry; after encryption ``ev`` stands in place of ``sv``."""

    model_config = ConfigDict(frozen=True, extra="allow")

    n: str
    t: Optional[WireInt] = None
    sv: Optional[str] = None
    ev: Optional[List[EncryptedValue]] = None

    @property
    def offset(self) -> int:
        # an absent t means the base time
        return self.t or 0


class Parameter(_Model):
    n: str
    sv: str


class SensorName(_Model):
    n: str


class DataKeyEntry(_Model):
    n: str
    kid: str
    k: str


class Message(BaseModel):
    """Common behaviour of the nine message types."""

    model_config = ConfigDict(frozen=True, extra="allow")

    typ: ClassVar[MessageType]

    def to_document(self) -> JsonDocument:
        """Render in layout order: ``typ`` first, unknown members before ``e``, ``sig`` last."""
        dumped = self.model_dump(mode="json", exclude_none=True)
        extras = set(self.model_extra or ())
        doc: JsonDocument = {"typ": str(int(self.typ))}
        for name, value in dumped.items():
            if name not in extras and name != "e":
                doc[name] = value
        for name, value in dumped.items():
            if name in extras and name != "sig":
                doc[name] = value
        if "e" in dumped:
            doc["e"] = dumped["e"]
        if "sig" in dumped:
            doc["sig"] = dumped["sig"]
        return doc

    @property
    def signature_block(self) -> Optional[Dict[str, Any]]:
        return (self.model_extra or {}).get("sig")

    @property
    def extras(self) -> Dict[str, Any]:
        return dict(self.model_extra or {})


class SensorDataMessage(Message):
    typ: ClassVar[MessageType] = MessageType.SENSOR_DATA

    gw: str
    bn: str
    bt: WireInt
    ev: Optional[List[EncryptedValue]] = None
    e: Optional[List[SensorReading]] = None


class SensorDataRequest(Message):
    typ: ClassVar[MessageType] = MessageType.SENSOR_DATA_REQUEST

    gw: str
    srv: str
    lim: Optional[WireInt] = None
    off: Optional[WireInt] = None
    bt: Optional[List[WireInt]] = None
    bn: Optional[List[str]] = None
    e: Optional[List[SensorName]] = None


class ConfigurationMessage(Message):
    typ: ClassVar[MessageType] = MessageType.CONFIGURATION

    gw: str
    bn: str
    js: Optional[str] = None
    ev: Optional[List[EncryptedValue]] = None


class ActuatorCommand(Message):
    typ: ClassVar[MessageType] = MessageType.ACTUATOR_COMMAND

    gw: str
    srv: str
    bn: str
    seq: Optional[WireInt] = None
    fn: Optional[str] = None
    e: List[Parameter] = Field(default_factory=list)


class ActuatorResponse(Message):
    typ: ClassVar[MessageType] = MessageType.ACTUATOR_RESPONSE

    gw: str
    srv: str
    bn: str
    seq: WireInt
    fn: Optional[str] = None
    e: List[Parameter] = Field(default_factory=list)


class DataKeyUpload(Message):
    typ: ClassVar[MessageType] = MessageType.DATA_KEY_UPLOAD

    gw: str
    srv: str
    bt: List[WireInt]
    bn: str
    e: List[DataKeyEntry]


class DataKeyDownload(Message):
    typ: ClassVar[MessageType] = MessageType.DATA_KEY_DOWNLOAD

    gw: str
    srv: str
    kid: str


class PublicKeyRequest(Message):
    typ: ClassVar[MessageType] = MessageType.PUBLIC_KEY_REQUEST

    id: str


class PublicKeyResponse(Message):
    typ: ClassVar[MessageType] = MessageType.PUBLIC_KEY_RESPONSE

    key: str


AnyMessage = Union[
    SensorDataMessage,
    SensorDataRequest,
    ConfigurationMessage,
    ActuatorCommand,
    ActuatorResponse,
    DataKeyUpload,
    DataKeyDownload,
    PublicKeyRequest,
    PublicKeyResponse,
]

MESSAGE_TYPES: Dict[MessageType, Type[Message]] = {
    cls.typ: cls
    for cls in (
        SensorDataMessage,
        SensorDataRequest,
        ConfigurationMessage,
        ActuatorCommand,
        ActuatorResponse,
        DataKeyUpload,
        DataKeyDownload,
        PublicKeyRequest,
        PublicKeyResponse,
    )
}


def message_type_of(doc: JsonDocument) -> MessageType:
    try:
        return MessageType(parse_wire_int(doc.get("typ")))
    except ValueError as err:
        raise UnknownMessageType(doc.get("typ")) from err


def parse_message(doc: JsonDocument) -> AnyMessage:
    """Dispatch a document to its typed representation by ``typ``."""
    cls = MESSAGE_TYPES[message_type_of(doc)]
    body = {k: v for k, v in doc.items() if k != "typ"}
    try:
        return cls.model_validate(body)
    except ValidationError as err:
        raise ValidationFailure(f"not a valid {cls.__name__}: {err}") from err


class TransmissionHeader(BaseModel):
    """The envelope around every gateway/cloud transmission; ``pl`` holds message documents."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ver: WireInt = PROTOCOL_VERSION
    seq: WireInt = 0
    pl: List[Dict[str, Any]]

    def to_document(self) -> JsonDocument:
        return {"ver": str(self.ver), "seq": str(self.seq), "pl": list(self.pl)}

    @classmethod
    def from_document(cls, doc: JsonDocument) -> "TransmissionHeader":
        try:
            return cls.model_validate(doc)
        except ValidationError as err:
            raise ValidationFailure(f"not a valid transmission header: {err}") from err


def _document(msg: Union[Message, JsonDocument]) -> JsonDocument:
    return msg.to_document() if isinstance(msg, Message) else msg


def batch(msgs: Sequence[Union[Message, JsonDocument]], seq: int = 0) -> TransmissionHeader:
    """Wrap one or more messages (typed or already signed documents) into one header.

    The header sequence number is unused by the protocol: any ``seq`` other than 0 raises
    :class:`InvalidSequence`, an empty ``msgs`` raises :class:`EmptyBatch`.
    """
    if not msgs:
        raise EmptyBatch("a transmission header needs at least one message")
    if seq != 0:
        raise InvalidSequence("the header sequence number is unused and must be 0")
    return TransmissionHeader(ver=PROTOCOL_VERSION, seq=0, pl=[_document(m) for m in msgs])


def check_version(header: Union[TransmissionHeader, JsonDocument]) -> None:
    ver = header.ver if isinstance(header, TransmissionHeader) else header.get("ver")
    try:
        supported = parse_wire_int(ver) == PROTOCOL_VERSION
    except ValueError:
        supported = False
    if not supported:
        raise UnsupportedVersion(ver)


def check_header(header: Union[TransmissionHeader, JsonDocument]) -> TransmissionHeader:
    """Receive-side checks: a supported version, sequence number 0 and at least one message."""
    check_version(header)
    if not isinstance(header, TransmissionHeader):
        header = TransmissionHeader.from_document(header)
    if header.seq != 0:
        raise InvalidSequence(f"header sequence number must be 0, got {header.seq}", seq=header.seq)
    if not header.pl:
        raise EmptyBatch("transmission header carries no messages")
    return header


def unbatch(header: Union[TransmissionHeader, JsonDocument]) -> List[AnyMessage]:
    header = check_header(header)
    return [parse_message(doc) for doc in header.pl]


def reading_key(n: str, t: Optional[int]) -> tuple:
    return n.encode("utf-8"), t or 0


def sort_readings(e: Sequence[SensorReading]) -> List[SensorReading]:
    """Sort readings by sensor id (byte-wise), then time offset; reject repeated ``(n, t)``."""
    seen = set()
    for reading in e:
        key = reading_key(reading.n, reading.t)
        if key in seen:
            raise DuplicateReading(f"reading ({reading.n!r}, {reading.offset}) appears twice")
        seen.add(key)
    return sorted(e, key=lambda r: reading_key(r.n, r.t))
