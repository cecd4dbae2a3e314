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

"""A cloud service: queries data items, fetches data keys, decrypts what it is entitled to,
and drives actuator commands."""

import logging
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Sequence, Tuple

from ..codec import JsonDocument
from ..errors import (
    BadSignature,
    InconsistentEcho,
    KeyDownloadFailed,
    NotAuthorized,
    UnmatchedResponse,
    ValidationFailure,
)
from ..keys import KeyStore, process_key_upload
from ..messages import (
    ActuatorCommand,
    ActuatorResponse,
    DataKeyDownload,
    MessageType,
    Parameter,
    SensorDataRequest,
    SensorName,
    message_type_of,
    parse_message,
)
from ..security.envelope import decrypt_message, envelope_kids
from ..security.primitives import DataKey, EciesKeyWrapper, KeyWrapper, SigningKeyPair
from ..validation import validate
from .base import Node

if TYPE_CHECKING:
    from ..harness.network import SimNetwork

logger = logging.getLogger(__name__)

_ECHOED = ("gw", "srv", "bn", "fn")


@dataclass(frozen=True)
class QueryResult:
    """One verified data item after decryption; ``undecrypted`` lists kids this service lacks."""

    document: JsonDocument
    undecrypted: List[str]

    @property
    def gw(self) -> str:
        return self.document["gw"]

    @property
    def bn(self) -> str:
        return self.document["bn"]

    @property
    def bt(self) -> int:
        return int(self.document["bt"])

    def readings(self) -> List[Tuple[str, int, Optional[str]]]:
        """``(n, absolute time, value)``; the value is None while it is still encrypted."""
        rows = []
        for r in self.document.get("e", []):
            rows.append((r["n"], self.bt + int(r.get("t", "0")), r.get("sv")))
        return rows

    def encrypted_count(self) -> int:
        """Scopes still carrying an ``ev`` array."""
        scopes = [self.document] + list(self.document.get("e", []))
        return sum(1 for s in scopes if "ev" in s)


class ServiceNode(Node):
    def __init__(
        self,
        srv: str,
        keypair: SigningKeyPair,
        network: Optional["SimNetwork"] = None,
        wrapper: Optional[KeyWrapper] = None,
        cloud_id: str = "cloud",
    ):
        super().__init__(srv, keypair, network, cloud_id)
        self.responses: List[Tuple[ActuatorCommand, ActuatorResponse]] = []
        self.__stores: Dict[str, KeyStore] = {}
        self.__wrapper = wrapper or EciesKeyWrapper()
        self.__pending: Dict[int, ActuatorCommand] = {}
        self.__seq = 0
        self.__lock = threading.Lock()
        self.__received: List[JsonDocument] = []

    # data keys

    def key_store(self, gw: str) -> KeyStore:
        """Unwrapped keys received from ``gw``."""
        return self.__stores.setdefault(gw, KeyStore())

    def resolve(self, kid: str) -> Optional[DataKey]:
        for store in self.__stores.values():
            key = store.get(kid)
            if key is not None:
                return key
        return None

    def download_key(self, gw: str, kid: str) -> Optional[DataKey]:
        """Ask the cloud for ``kid`` with a type-401 request; no retry on failure."""
        if self.network is not None:
            self.send([self.sign(DataKeyDownload(gw=gw, srv=self.id, kid=kid))])
            self.network.run_until_idle()
        key = self.resolve(kid)
        if key is None:
            self.record(KeyDownloadFailed(f"no data key {kid} obtained from {gw}", kid=kid, gw=gw))
        return key

    # queries

    def request(
        self,
        gw: str,
        bt: Optional[Sequence[int]] = None,
        bn: Optional[Sequence[str]] = None,
        names: Optional[Sequence[str]] = None,
        lim: Optional[int] = None,
        off: Optional[int] = None,
    ) -> SensorDataRequest:
        return SensorDataRequest(
            gw=gw,
            srv=self.id,
            lim=lim,
            off=off,
            bt=list(bt) if bt is not None else None,
            bn=list(bn) if bn is not None else None,
            e=[SensorName(n=n) for n in names] if names is not None else None,
        )

    def query(self, plan: SensorDataRequest) -> List[QueryResult]:
        """Send ``plan`` and return every delivered item that verifies, decrypted where possible."""
        if plan.srv != self.id:
            raise ValidationFailure(f"request names {plan.srv}, not {self.id}")
        start = len(self.__received)
        self.send([self.sign(plan)])
        if self.network is not None:
            self.network.run_until_idle()
        items = self.__received[start:]
        del self.__received[start:]

        results = []
        for doc in items:
            try:
                results.append(self.open_item(doc))
            except BadSignature as err:
                self.record(err, doc=doc)
        logger.debug(f"{self.id} received {len(items)} item(s), {len(results)} verified")
        return results

    def open_item(self, doc: JsonDocument) -> QueryResult:
        """Verify the gateway signature, fetch unknown keys, then decrypt."""
        self.verify_from(doc, doc.get("gw"))
        for kid in envelope_kids(doc):
            if self.resolve(kid) is None:
                self.download_key(doc["gw"], kid)
        decrypted, undecrypted = decrypt_message(doc, self.resolve)
        return QueryResult(decrypted, undecrypted)

    # actuators

    def send_command(
        self,
        gw: str,
        bn: str,
        params: Optional[Mapping[str, str]] = None,
        fn: Optional[str] = None,
        expect_response: bool = True,
    ) -> Optional[int]:
        """Issue a command; returns its ``seq`` when a response is expected."""
        with self.__lock:
            seq = None
            if expect_response:
                self.__seq += 1
                seq = self.__seq
            cmd = ActuatorCommand(
                gw=gw,
                srv=self.id,
                bn=bn,
                seq=seq,
                fn=fn,
                e=[Parameter(n=n, sv=sv) for n, sv in (params or {}).items()],
            )
            if seq is not None:
                self.__pending[seq] = cmd
        self.send([self.sign(cmd)])
        return seq

    def receive_response(self, resp: ActuatorResponse) -> ActuatorCommand:
        """Match ``resp`` to its pending command by ``seq`` and check the copied fields."""
        with self.__lock:
            cmd = self.__pending.get(resp.seq)
            if cmd is None:
                raise UnmatchedResponse(f"no pending command with seq {resp.seq}", seq=resp.seq)
            differing = [f for f in _ECHOED if getattr(cmd, f) != getattr(resp, f)]
            if differing:
                raise InconsistentEcho(
                    f"response to seq {resp.seq} differs in {', '.join(differing)}",
                    seq=resp.seq,
                    fields=differing,
                )
            del self.__pending[resp.seq]
        self.responses.append((cmd, resp))
        return cmd

    def show_pending(self) -> Dict[int, ActuatorCommand]:
        with self.__lock:
            return dict(sorted(self.__pending.items()))

    # inbox

    def handle(self, src: str, doc: JsonDocument):
        typ = message_type_of(doc)
        if typ is MessageType.PUBLIC_KEY_RESPONSE:
            return super().handle(src, doc)

        report = validate(doc)
        if not report.ok:
            raise ValidationFailure(f"invalid type-{int(typ)} message from {src}", report)
        if typ is MessageType.SENSOR_DATA:
            self.__received.append(doc)
        elif typ is MessageType.DATA_KEY_UPLOAD:
            if doc.get("srv") != self.id:
                raise NotAuthorized(f"key upload for {doc.get('srv')} reached {self.id}")
            self.verify_from(doc, doc["gw"])
            added = process_key_upload(
                doc, self.key_store(doc["gw"]), self.keypair.private_key, self.__wrapper
            )
            logger.debug(f"{self.id} unwrapped {len(added)} key(s) from {doc['gw']}")
        elif typ is MessageType.ACTUATOR_RESPONSE:
            self.verify_from(doc, doc.get("gw"))
            self.receive_response(parse_message(doc))
        else:
            logger.debug(f"{self.id} ignores type {int(typ)} from {src}")
