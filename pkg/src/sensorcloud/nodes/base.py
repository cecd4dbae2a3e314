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

"""Behaviour shared by gateways, services and the cloud: sending, inbox dispatch, key lookups."""

import logging
from collections import deque
from typing import TYPE_CHECKING, Any, Callable, Deque, Dict, List, Optional, Sequence, Union

from cryptography.hazmat.primitives.asymmetric import ec

from ..codec import JsonDocument, encode_wire, pem_decode_public_key
from ..errors import BadSignature, SensorCloudError, UnknownEntity, ValidationFailure
from ..keys import PublicKeyDirectory
from ..messages import (
    Message,
    MessageType,
    PublicKeyRequest,
    batch,
    check_header,
    message_type_of,
)
from ..security.primitives import SigningKeyPair
from ..security.signing import VerificationStatus, sign_message, signer_of, verify_signature
from ..validation import validate

if TYPE_CHECKING:
    from ..harness.network import SimNetwork

logger = logging.getLogger(__name__)

Clock = Callable[[], int]


class Node:
    """A protocol participant attached to a :class:`SimNetwork`.

    Subclasses implement :meth:`handle` for single message documents. Errors raised there never
    leave the inbox loop: they are logged and kept in :attr:`diagnostics`.
    """

    def __init__(
        self,
        entity_id: str,
        keypair: Optional[SigningKeyPair] = None,
        network: Optional["SimNetwork"] = None,
        cloud_id: str = "cloud",
    ):
        if keypair is not None and keypair.owner != entity_id:
            raise ValueError(f"key pair belongs to {keypair.owner}, not {entity_id}")
        self.id = entity_id
        self.keypair = keypair
        self.cloud_id = cloud_id
        self.network: Optional["SimNetwork"] = None
        self.public_keys = PublicKeyDirectory()
        self.diagnostics: List[Dict[str, Any]] = []
        self.notifications: List[Dict[str, Any]] = []
        self.__awaiting: Deque[str] = deque()
        if keypair is not None:
            self.public_keys.register(entity_id, keypair.public_key)
        if network is not None:
            network.register(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.id!r})"

    # outbound

    def sign(self, msg: Union[Message, JsonDocument]) -> JsonDocument:
        if self.keypair is None:
            raise ValueError(f"{self.id} has no signing key")
        return sign_message(msg, self.keypair)

    def send(self, messages: Sequence[Union[Message, JsonDocument]], dst: Optional[str] = None):
        if self.network is None:
            logger.debug(f"{self.id} is not attached to a network; {len(messages)} message(s) not sent")
            return
        header = batch(list(messages))
        dst = dst or self.cloud_id
        logger.debug(f"{self.id} -> {dst}: {[m.get('typ') for m in header.pl]}")
        self.network.deliver(self.id, dst, encode_wire(header.to_document()))

    # inbound

    def receive(self, src: str, header: JsonDocument):
        try:
            payload = check_header(header).pl
        except SensorCloudError as err:
            self.record(err, src=src)
            return
        for doc in payload:
            try:
                self.handle(src, doc)
            except SensorCloudError as err:
                self.record(err, src=src, doc=doc)
                self.on_refusal(src, doc, err)

    def handle(self, src: str, doc: JsonDocument):
        typ = message_type_of(doc)
        if typ is MessageType.PUBLIC_KEY_RESPONSE:
            self.accept_public_key(src, doc)
        else:
            logger.debug(f"{self.id} ignores message type {int(typ)} from {src}")

    def on_refusal(self, src: str, doc: JsonDocument, err: SensorCloudError):
        """Hook for nodes that answer refused messages; the default only records them."""

    def on_notification(self, src: str, report: Dict[str, Any]):
        logger.warning(f"{self.id} notified by {src}: {report.get('error')}: {report.get('message')}")
        self.notifications.append(dict(report, src=src))
        entity = report.get("entity")
        if entity in self.__awaiting:
            self.__awaiting.remove(entity)

    def record(self, err: SensorCloudError, src: Optional[str] = None, doc: Optional[JsonDocument] = None):
        entry = err.to_dict()
        if src is not None:
            entry["src"] = src
        if doc is not None and "typ" in doc:
            entry["typ"] = doc["typ"]
        logger.warning(f"{self.id}: {err.code}: {err.message}")
        self.diagnostics.append(entry)

    # public keys

    def public_key(self, entity: str) -> ec.EllipticCurvePublicKey:
        """The key of ``entity``, fetched from the cloud with a type-402 request if not cached."""
        key = self.public_keys.get(entity)
        if key is not None:
            return key
        if self.network is None:
            raise UnknownEntity(f"{self.id} has no public key for {entity!r}", entity=entity)
        self.__awaiting.append(entity)
        self.send([PublicKeyRequest(id=entity)])
        while entity in self.__awaiting and self.network.step():
            pass
        key = self.public_keys.get(entity)
        if key is None:
            if entity in self.__awaiting:
                self.__awaiting.remove(entity)
            raise UnknownEntity(f"no public key available for {entity!r}", entity=entity)
        return key

    def accept_public_key(self, src: str, doc: JsonDocument):
        """Bind a type-403 answer to the oldest outstanding type-402 request.

        The cloud answers requests in the order they were sent, either with a 403 or with a
        notification naming the entity. Answers from anyone else, and answers with no request
        outstanding, are dropped.
        """
        if src != self.cloud_id:
            logger.warning(f"{self.id} dropped a public key sent by {src}")
            return
        report = validate(doc)
        if not report.ok:
            raise ValidationFailure(f"invalid public key response from {src}", report)
        if not self.__awaiting:
            logger.warning(f"{self.id} received an unrequested public key")
            return
        key = pem_decode_public_key(doc["key"])
        entity = self.__awaiting.popleft()
        self.public_keys.register(entity, key)
        logger.debug(f"{self.id} cached the public key of {entity}")

    def verify_from(self, doc: JsonDocument, expected_signer: str) -> str:
        """Verify ``doc`` was signed by ``expected_signer``; fetches the key when needed."""
        signer = signer_of(doc)
        if signer != expected_signer:
            raise BadSignature(f"signed by {signer}, expected {expected_signer}", signer=signer)
        result = verify_signature(doc, self.__lookup)
        if result.status is not VerificationStatus.VERIFIED:
            raise BadSignature(f"signature by {result.signer}: {result.status.value}", signer=result.signer)
        return result.signer

    def __lookup(self, entity: str) -> Optional[ec.EllipticCurvePublicKey]:
        try:
            return self.public_key(entity)
        except UnknownEntity:
            return None
