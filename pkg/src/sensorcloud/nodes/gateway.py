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

"""The gateway: the trust point where readings are encrypted and signed before leaving the network."""

import json
import logging
import os
import threading
import time
from typing import TYPE_CHECKING, Dict, List, Optional, Set, Tuple, Union

from ..acl import AccessControlList
from ..actuators import ActuatorRegistry
from ..codec import JsonDocument
from ..errors import (
    DuplicateReading,
    EmptyBuffer,
    InvalidParameters,
    InvalidSchemaText,
    MissingField,
    NonStringValue,
    UnknownActuator,
    UnknownDestination,
    UnknownFunction,
    ValidationFailure,
)
from ..keys import KeyStore, build_key_upload, group_by_window
from ..messages import (
    ActuatorCommand,
    ActuatorResponse,
    ConfigurationMessage,
    DataKeyUpload,
    MessageType,
    Parameter,
    WILDCARD,
    SensorDataMessage,
    SensorReading,
    message_type_of,
    parse_message,
    sort_readings,
)
from ..security.envelope import encrypt_fields
from ..security.primitives import (
    DataKey,
    EciesKeyWrapper,
    KeyWrapper,
    NonceSource,
    RandomNonceSource,
    RandomSource,
    SigningKeyPair,
)
from ..settings import DAY_MS
from ..validation import validate
from .base import Clock, Node

if TYPE_CHECKING:
    from ..harness.network import SimNetwork

logger = logging.getLogger(__name__)

UNAUTHORIZED = "unauthorized"


def wall_clock() -> int:
    return int(time.time() * 1000)


class GatewayNode(Node):
    """
    Buffers plaintext readings per sensor node and turns them into signed data items.

    :param acl: the data owner's ACL; it decides which streams are encrypted, who receives their
        keys and which services may actuate.
    :param clock: milliseconds since the epoch; injected so tests control key windows and ``bt``.
    :param key_window_ms: length of the fixed data-key rotation windows.
    :param rng: randomness for data keys and key wrapping.
    :param nonce_source: GCM nonces; must never repeat.
    """

    def __init__(
        self,
        gw: str,
        keypair: SigningKeyPair,
        acl: AccessControlList,
        network: Optional["SimNetwork"] = None,
        clock: Optional[Clock] = None,
        key_window_ms: int = DAY_MS,
        rng: RandomSource = os.urandom,
        nonce_source: Optional[NonceSource] = None,
        actuators: Optional[ActuatorRegistry] = None,
        wrapper: Optional[KeyWrapper] = None,
        allow_expired_keys: bool = False,
        cloud_id: str = "cloud",
    ):
        super().__init__(gw, keypair, network, cloud_id)
        self.acl = acl
        self.keys = KeyStore()
        self.clock = clock or wall_clock
        self.key_window_ms = key_window_ms
        self.actuators = actuators or ActuatorRegistry()
        self.allow_expired_keys = allow_expired_keys
        self.__rng = rng
        self.__nonces = nonce_source or RandomNonceSource()
        self.__wrapper = wrapper or EciesKeyWrapper(rng)
        self.__buffers: Dict[str, Dict[Tuple[str, int], str]] = {}
        self.__buffer_lock = threading.Lock()
        self.__distributed: Set[Tuple[str, str]] = set()

    # southbound

    def ingest_reading(self, bn: str, n: str, t_abs_ms: int, value: str):
        if not bn or not n:
            raise MissingField("sensor node and sensor ids must be non-empty")
        if not isinstance(value, str):
            raise NonStringValue(f"reading values are strings, got {type(value).__name__}")
        with self.__buffer_lock:
            buffer = self.__buffers.setdefault(bn, {})
            if (n, t_abs_ms) in buffer:
                raise DuplicateReading(f"reading ({bn}, {n}) at {t_abs_ms} is already buffered")
            buffer[(n, t_abs_ms)] = value

    def buffered(self, bn: Optional[str] = None) -> int:
        with self.__buffer_lock:
            if bn is not None:
                return len(self.__buffers.get(bn, ()))
            return sum(len(b) for b in self.__buffers.values())

    def devices(self) -> List[str]:
        with self.__buffer_lock:
            return sorted(bn for bn, b in self.__buffers.items() if b)

    def flush_device(self, bn: str, upload: bool = True) -> SensorDataMessage:
        """Build, encrypt and sign one data item from the readings buffered for ``bn``."""
        with self.__buffer_lock:
            readings = dict(self.__buffers.get(bn, {}))
        if not readings:
            raise EmptyBuffer(f"nothing buffered for {bn!r}", bn=bn)

        bt = min(t for _, t in readings)
        e = sort_readings([SensorReading(n=n, t=t - bt, sv=v) for (n, t), v in readings.items()])
        doc = SensorDataMessage(gw=self.id, bn=bn, bt=bt, e=e).to_document()
        for i, reading in enumerate(e):
            if self.acl.is_sensitive(self.id, bn, reading.n):
                at = bt + reading.offset
                key = self.keys.select_key(bn, reading.n, at)
                doc = encrypt_fields(
                    doc, ("e", i), ["sv"], key, self.__nonces, at=at, allow_expired=self.allow_expired_keys
                )
        signed = self.sign(doc)

        with self.__buffer_lock:
            buffer = self.__buffers.get(bn, {})
            for slot in readings:
                buffer.pop(slot, None)
        logger.debug(f"Flushed {len(readings)} reading(s) of {bn} at bt={bt}")
        if upload:
            self.send([signed])
        return parse_message(signed)

    def flush_all(self, upload: bool = True) -> List[SensorDataMessage]:
        return [self.flush_device(bn, upload) for bn in self.devices()]

    # keys

    def sensitive_streams(self) -> List[Tuple[str, str]]:
        streams = set(self.keys.streams())
        for entry in self.acl:
            if entry.gw == self.id and entry.sensitive and WILDCARD not in (entry.bn, entry.n):
                streams.add((entry.bn, entry.n))
        with self.__buffer_lock:
            for bn, buffer in self.__buffers.items():
                streams.update((bn, n) for n, _ in buffer if self.acl.is_sensitive(self.id, bn, n))
        return sorted(streams)

    def rotate_keys(self, at: Optional[int] = None) -> List[DataKey]:
        """Make sure every sensitive stream has a key for ``at`` and for all buffered readings."""
        at = self.clock() if at is None else at
        times: Dict[Tuple[str, str], Set[int]] = {}
        with self.__buffer_lock:
            for bn, buffer in self.__buffers.items():
                for n, t in buffer:
                    times.setdefault((bn, n), set()).add(t)
        created = []
        for bn, n in self.sensitive_streams():
            for t in sorted({at} | times.get((bn, n), set())):
                known = len(self.keys)
                key = self.keys.rotate(bn, n, t, self.key_window_ms, self.__rng)
                if len(self.keys) > known:
                    created.append(key)
        if created:
            logger.info(f"{self.id} generated {len(created)} data key(s)")
        return created

    def distribute_keys(self) -> List[DataKeyUpload]:
        """Upload every not-yet-distributed key to each service authorized for its stream."""
        pending: Dict[Tuple[str, str], List[Tuple[str, DataKey]]] = {}
        for bn, n in self.keys.streams():
            for srv in self.acl.authorized_services(self.id, bn, n):
                for key in self.keys.keys_for(bn, n):
                    if (srv, key.kid) not in self.__distributed:
                        pending.setdefault((srv, bn), []).append((n, key))

        signed_uploads: List[JsonDocument] = []
        for srv, bn in sorted(pending):
            recipient = self.public_key(srv)
            for group in group_by_window(pending[(srv, bn)]):
                upload = build_key_upload(self.id, srv, bn, group, recipient, self.__wrapper)
                signed_uploads.append(self.sign(upload))
                self.__distributed.update((srv, key.kid) for _, key in group)
        if signed_uploads:
            self.send(signed_uploads)
            logger.info(f"{self.id} distributed {len(signed_uploads)} key upload(s)")
        return [parse_message(doc) for doc in signed_uploads]

    # configuration

    def emit_configuration(self, bn: str, schema_text: str, upload: bool = True) -> ConfigurationMessage:
        if not isinstance(schema_text, str):
            raise InvalidSchemaText("schema text must be a string")
        try:
            json.loads(schema_text)
        except ValueError as err:
            raise InvalidSchemaText(f"schema for {bn} is not valid JSON: {err}") from err
        signed = self.sign(ConfigurationMessage(gw=self.id, bn=bn, js=schema_text))
        if upload:
            self.send([signed])
        return parse_message(signed)

    # actuators

    def handle_actuator_command(
        self, cmd: Union[ActuatorCommand, JsonDocument]
    ) -> Optional[ActuatorResponse]:
        """Apply an (already verified) command. Returns None when the command carries no ``seq``."""
        if not isinstance(cmd, ActuatorCommand):
            cmd = parse_message(cmd)
        if cmd.gw != self.id:
            raise UnknownDestination(f"command for {cmd.gw} reached {self.id}", dst=cmd.gw)
        if not self.acl.authorizes(cmd.srv, self.id, cmd.bn):
            logger.warning(f"{cmd.srv} may not actuate {self.id}/{cmd.bn}")
            return self.__respond(cmd, [Parameter(n="err", sv=UNAUTHORIZED)])

        actuator = self.actuators.actuator(cmd.bn)
        params = {p.n: p.sv for p in cmd.e}
        if cmd.fn is not None:
            results = self.actuators.call(cmd.bn, cmd.fn, params)
        else:
            actuator.set(params)
            results = []
        return self.__respond(cmd, [Parameter(n=n, sv=sv) for n, sv in results])

    @staticmethod
    def __respond(cmd: ActuatorCommand, e: List[Parameter]) -> Optional[ActuatorResponse]:
        if cmd.seq is None:
            return None
        return ActuatorResponse(gw=cmd.gw, srv=cmd.srv, bn=cmd.bn, seq=cmd.seq, fn=cmd.fn, e=e)

    # inbox

    def handle(self, src: str, doc: JsonDocument):
        if message_type_of(doc) is not MessageType.ACTUATOR_COMMAND:
            return super().handle(src, doc)
        report = validate(doc)
        if not report.ok:
            raise ValidationFailure("invalid actuator command", report)
        cmd = parse_message(doc)
        self.verify_from(doc, cmd.srv)
        try:
            response = self.handle_actuator_command(cmd)
        except (UnknownActuator, UnknownFunction, InvalidParameters) as err:
            self.record(err, src=src, doc=doc)
            response = self.__respond(cmd, [Parameter(n="err", sv=err.code)])
        if response is not None:
            self.send([self.sign(response)])
