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

"""The cloud: stores signed data items, answers queries under the ACL, relays keys and commands."""

import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from cryptography.hazmat.primitives.asymmetric import ec

from ..acl import AccessControlList
from ..codec import JsonDocument, encode_wire, parse_wire
from ..errors import BadSignature, UnknownDestination, ValidationFailure
from ..keys import (
    CloudKeyStore,
    PublicKeyDirectory,
    answer_key_download,
    answer_pubkey_request,
    process_key_upload,
)
from ..messages import (
    WILDCARD,
    DataKeyDownload,
    Message,
    MessageType,
    PublicKeyRequest,
    SensorDataRequest,
    batch,
    message_type_of,
    parse_message,
)
from ..security.signing import VerificationStatus, signer_of, verify_signature
from ..validation import validate
from .base import Node

if TYPE_CHECKING:
    from ..harness.network import SimNetwork

logger = logging.getLogger(__name__)

_KEY_TYPES = (
    MessageType.DATA_KEY_UPLOAD,
    MessageType.DATA_KEY_DOWNLOAD,
    MessageType.PUBLIC_KEY_REQUEST,
)
_JOURNALED = (MessageType.SENSOR_DATA, MessageType.CONFIGURATION, MessageType.DATA_KEY_UPLOAD)


@dataclass(frozen=True)
class StoredItem:
    """A data item as received, plus the index fields queries select on."""

    seq: int
    wire: str
    gw: str
    bn: str
    bt: int
    names: FrozenSet[str]

    @classmethod
    def from_document(cls, seq: int, doc: JsonDocument, wire: Optional[str] = None) -> "StoredItem":
        readings = doc.get("e") if isinstance(doc.get("e"), list) else []
        names = frozenset(r["n"] for r in readings if isinstance(r, dict) and isinstance(r.get("n"), str))
        return cls(
            seq=seq,
            wire=wire if wire is not None else encode_wire(doc),
            gw=doc["gw"],
            bn=doc["bn"],
            bt=int(doc["bt"]),
            names=names,
        )

    def document(self) -> JsonDocument:
        return parse_wire(self.wire)

    def sort_key(self) -> Tuple[int, bytes, int]:
        return self.bt, self.bn.encode("utf-8"), self.seq


@dataclass(frozen=True)
class QueryPlan:
    """A normalized type-2 request. ``hi=None`` is an open upper bound; empty sets select all."""

    srv: str
    gw: str = WILDCARD
    lo: int = 0
    hi: Optional[int] = None
    bns: FrozenSet[str] = frozenset()
    names: FrozenSet[str] = frozenset()
    lim: Optional[int] = None
    off: int = 0

    def __post_init__(self):
        if self.hi is not None and self.lo > self.hi:
            raise ValidationFailure(f"time bounds [{self.lo}, {self.hi}] are reversed")

    @classmethod
    def from_request(cls, req: SensorDataRequest) -> "QueryPlan":
        bt = req.bt or []
        return cls(
            srv=req.srv,
            gw=req.gw,
            lo=bt[0] if bt else 0,
            hi=bt[1] if len(bt) > 1 else None,
            bns=frozenset(req.bn or ()),
            names=frozenset(s.n for s in req.e or ()),
            lim=req.lim,
            off=req.off or 0,
        )

    def selects(self, item: StoredItem) -> bool:
        if self.gw != WILDCARD and item.gw != self.gw:
            return False
        if item.bt < self.lo or (self.hi is not None and item.bt > self.hi):
            return False
        if self.bns and item.bn not in self.bns:
            return False
        return not self.names or bool(self.names & item.names)

    def authorized(self, item: StoredItem, acl: AccessControlList) -> bool:
        candidates = item.names & self.names if self.names else item.names
        if not candidates:
            # reading names are hidden; any entry for the device will do
            return acl.authorizes(self.srv, item.gw, item.bn)
        return any(acl.authorizes(self.srv, item.gw, item.bn, n) for n in candidates)


def evaluate_query(
    req: Union[SensorDataRequest, QueryPlan],
    store: Union["ItemStore", Sequence[StoredItem]],
    acl: AccessControlList,
) -> List[StoredItem]:
    """Filter, authorize, order by ``(bt, bn, seq)``, skip ``off`` items, keep at most ``lim``."""
    plan = req if isinstance(req, QueryPlan) else QueryPlan.from_request(req)
    items = store.snapshot() if isinstance(store, ItemStore) else store
    matching = sorted(
        (item for item in items if plan.selects(item) and plan.authorized(item, acl)),
        key=StoredItem.sort_key,
    )
    matching = matching[plan.off :]
    return matching if plan.lim is None else matching[: plan.lim]


class ItemStore:
    """Append-only in-memory item storage; readers get consistent snapshots."""

    def __init__(self):
        self.__items: Tuple[StoredItem, ...] = ()
        self.__lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.__items)

    def add(self, doc: JsonDocument, wire: Optional[str] = None) -> StoredItem:
        with self.__lock:
            item = StoredItem.from_document(len(self.__items), doc, wire)
            self.__items = self.__items + (item,)
        return item

    def snapshot(self) -> Tuple[StoredItem, ...]:
        return self.__items


class CloudNode(Node):
    """The single logical cloud. It holds no signing key and never sees plaintext data keys.

    :param directory: the provisioned public keys of every gateway and service.
    :param acl: the data owners' ACLs, replicated for query filtering.
    :param journal: optional file; accepted items, configurations and key uploads are appended one
        transmission header per line and replayed on start-up.
    """

    def __init__(
        self,
        entity_id: str = "cloud",
        directory: Optional[PublicKeyDirectory] = None,
        acl: Optional[AccessControlList] = None,
        network: Optional["SimNetwork"] = None,
        journal: Optional[Union[str, Path]] = None,
    ):
        super().__init__(entity_id, keypair=None, network=network, cloud_id=entity_id)
        self.directory = directory or PublicKeyDirectory()
        self.public_keys = self.directory
        self.acl = acl or AccessControlList()
        self.items = ItemStore()
        self.keys = CloudKeyStore()
        self.configurations: Dict[Tuple[str, str], JsonDocument] = {}
        self.__journal = Path(journal) if journal else None
        self.__journal_lock = threading.Lock()
        self.__replaying = False
        if self.__journal is not None and self.__journal.exists():
            self.replay()

    def public_key(self, entity: str) -> ec.EllipticCurvePublicKey:
        return self.directory[entity]

    # operations

    def ingest(
        self, msg: Union[str, bytes, JsonDocument, Message], directory: Optional[PublicKeyDirectory] = None
    ) -> StoredItem:
        """Verify and store one signed sensor-data message."""
        wire = None
        if isinstance(msg, (str, bytes)):
            wire = msg.decode("utf-8") if isinstance(msg, bytes) else msg
            doc = parse_wire(wire)
        else:
            doc = msg.to_document() if isinstance(msg, Message) else msg
        if message_type_of(doc) is not MessageType.SENSOR_DATA:
            raise ValidationFailure(f"expected a sensor-data message, got type {doc.get('typ')}")
        self.__check(doc, doc.get("gw"), directory)
        item = self.items.add(doc, wire)
        self.__append(doc)
        logger.debug(f"Stored item #{item.seq} from {item.gw}/{item.bn} at {item.bt}")
        return item

    def query(self, req: SensorDataRequest) -> List[StoredItem]:
        return evaluate_query(req, self.items, self.acl)

    def store_configuration(self, doc: JsonDocument):
        self.__check(doc, doc.get("gw"))
        self.configurations[(doc["gw"], doc["bn"])] = doc
        self.__append(doc)

    def relay_key_message(self, msg: Union[Message, JsonDocument]) -> Optional[Message]:
        """Store a type-400 upload, or answer a type-401 (with a 400) or a type-402 (with a 403)."""
        doc = msg.to_document() if isinstance(msg, Message) else msg
        typ = message_type_of(doc)
        if typ is MessageType.DATA_KEY_UPLOAD:
            self.__check(doc, doc.get("gw"))
            added = process_key_upload(doc, self.keys)
            if added:
                self.__append(doc)
            logger.debug(f"Stored {len(added)} wrapped key(s) from {doc['gw']} for {doc['srv']}")
            return None
        if typ is MessageType.DATA_KEY_DOWNLOAD:
            self.__check(doc, doc.get("srv"))
            return answer_key_download(DataKeyDownload.model_validate(_body(doc)), self.keys)
        if typ is MessageType.PUBLIC_KEY_REQUEST:
            return answer_pubkey_request(PublicKeyRequest.model_validate(_body(doc)), self.directory)
        raise ValidationFailure(f"type {int(typ)} is not a key-management request")

    def route_actuator(self, msg: Union[Message, JsonDocument]):
        """Forward a command to its gateway, or a response to its service."""
        doc = msg.to_document() if isinstance(msg, Message) else msg
        typ = message_type_of(doc)
        if typ is MessageType.ACTUATOR_COMMAND:
            dst = doc.get("gw")
        elif typ is MessageType.ACTUATOR_RESPONSE:
            dst = doc.get("srv")
        else:
            raise ValidationFailure(f"type {int(typ)} is not actuator traffic")
        if self.network is None or not self.network.is_registered(dst):
            raise UnknownDestination(f"no node registered as {dst!r}", dst=dst)
        self.send([doc], dst=dst)

    # inbox

    def handle(self, src: str, doc: JsonDocument):
        typ = message_type_of(doc)
        report = validate(doc)
        if not report.ok:
            raise ValidationFailure(f"invalid type-{int(typ)} message from {src}", report)

        if typ is MessageType.SENSOR_DATA:
            self.ingest(doc)
        elif typ is MessageType.SENSOR_DATA_REQUEST:
            self.__check(doc, doc.get("srv"))
            results = self.query(parse_message(doc))
            logger.debug(f"Query from {doc['srv']} matched {len(results)} item(s)")
            if results:
                self.send([item.document() for item in results], dst=src)
        elif typ is MessageType.CONFIGURATION:
            self.store_configuration(doc)
        elif typ is MessageType.ACTUATOR_COMMAND:
            self.__check(doc, doc.get("srv"))
            self.route_actuator(doc)
        elif typ is MessageType.ACTUATOR_RESPONSE:
            self.__check(doc, doc.get("gw"))
            self.route_actuator(doc)
        elif typ in _KEY_TYPES:
            response = self.relay_key_message(doc)
            if response is not None:
                self.send([response], dst=src)
        else:
            logger.debug(f"Ignoring type {int(typ)} from {src}")

    def on_refusal(self, src: str, doc: JsonDocument, err):
        if self.network is not None and self.network.is_registered(src):
            self.network.notify(self.id, src, err.to_dict())

    # journal

    def replay(self) -> int:
        """Re-ingest every journaled message; returns how many were accepted."""
        accepted = 0
        self.__replaying = True
        try:
            with open(self.__journal, "r", encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    before = len(self.diagnostics)
                    self.receive("journal", parse_wire(line))
                    accepted += len(self.diagnostics) == before
        finally:
            self.__replaying = False
        logger.info(f"Replayed {accepted} journal line(s) from {self.__journal}")
        return accepted

    def __append(self, doc: JsonDocument):
        if self.__journal is None or self.__replaying or message_type_of(doc) not in _JOURNALED:
            return
        with self.__journal_lock, open(self.__journal, "a", encoding="utf-8") as f:
            f.write(encode_wire(batch([doc]).to_document()) + "\n")

    def __check(self, doc: JsonDocument, expected: Optional[str], directory: Optional[PublicKeyDirectory] = None):
        signer = signer_of(doc)
        if signer != expected:
            raise BadSignature(f"signed by {signer}, expected {expected}", signer=signer)
        result = verify_signature(doc, self.directory if directory is None else directory)
        if result.status is not VerificationStatus.VERIFIED:
            logger.warning(f"Refusing type {doc.get('typ')} from {signer}: {result.status.value}")
            raise BadSignature(f"signature by {signer}: {result.status.value}", signer=signer)
        report = validate(doc)
        if not report.ok:
            raise ValidationFailure(f"invalid type {doc.get('typ')} message from {signer}", report)


def _body(doc: JsonDocument) -> JsonDocument:
    return {k: v for k, v in doc.items() if k not in ("typ", "sig")}
