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

"""An in-memory, lossless, ordered transport between protocol nodes."""

import json
import logging
import threading
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Deque, Dict, List, Optional, Tuple

from ..codec import parse_wire
from ..errors import SensorCloudError, UnknownDestination
from ..messages import check_header

if TYPE_CHECKING:
    from ..nodes.base import Node

logger = logging.getLogger(__name__)

HEADER = "header"
NOTIFICATION = "notification"


@dataclass(frozen=True)
class Delivery:
    index: int
    src: str
    dst: str
    kind: str
    text: str

    def as_dict(self) -> Dict[str, Any]:
        return {"index": self.index, "src": self.src, "dst": self.dst, "kind": self.kind, "text": self.text}


class SimNetwork:
    """Per-node FIFO inboxes plus a log of every delivery in global order.

    Transmissions are processed one at a time by :meth:`step`; handlers may send further
    transmissions and drive the network re-entrantly while waiting for an answer.
    """

    def __init__(self):
        self.__nodes: Dict[str, "Node"] = {}
        self.__inboxes: Dict[str, Deque[Delivery]] = {}
        self.__order: Deque[str] = deque()
        self.__log: List[Delivery] = []
        self.__lock = threading.RLock()

    def register(self, node: "Node", entity_id: Optional[str] = None):
        entity_id = entity_id or node.id
        with self.__lock:
            self.__nodes[entity_id] = node
            self.__inboxes.setdefault(entity_id, deque())
        node.network = self

    def is_registered(self, entity_id: str) -> bool:
        return entity_id in self.__nodes

    def node(self, entity_id: str) -> "Node":
        try:
            return self.__nodes[entity_id]
        except KeyError:
            raise UnknownDestination(f"no node registered as {entity_id!r}", dst=entity_id) from None

    @property
    def log(self) -> List[Delivery]:
        with self.__lock:
            return list(self.__log)

    def pending(self) -> int:
        with self.__lock:
            return len(self.__order)

    def deliver(self, src: str, dst: str, header_text: str):
        """Queue a wire-encoded transmission header for ``dst``."""
        self.__enqueue(src, dst, HEADER, header_text)

    def notify(self, src: str, dst: str, report: Dict[str, Any]):
        """Queue a transport-level notification (an error report) for ``dst``."""
        if dst not in self.__nodes:
            logger.warning(f"Dropping notification from {src} to unregistered {dst}: {report}")
            return
        self.__enqueue(src, dst, NOTIFICATION, json.dumps(report, sort_keys=True, default=str))

    def __enqueue(self, src: str, dst: str, kind: str, text: str):
        with self.__lock:
            if dst not in self.__nodes:
                raise UnknownDestination(f"no node registered as {dst!r}", dst=dst)
            delivery = Delivery(len(self.__log), src, dst, kind, text)
            self.__log.append(delivery)
            self.__inboxes[dst].append(delivery)
            self.__order.append(dst)
        logger.debug(f"#{delivery.index} {src} -> {dst} ({kind}, {len(text)} chars)")

    def step(self) -> bool:
        """Hand the oldest queued transmission to its node. Returns False when nothing is queued."""
        with self.__lock:
            if not self.__order:
                return False
            dst = self.__order.popleft()
            delivery = self.__inboxes[dst].popleft()
        node = self.__nodes[dst]

        if delivery.kind == NOTIFICATION:
            node.on_notification(delivery.src, json.loads(delivery.text))
            return True
        try:
            header = parse_wire(delivery.text)
            check_header(header)
        except SensorCloudError as err:
            logger.warning(f"Rejecting transmission #{delivery.index} from {delivery.src}: {err}")
            self.notify(dst, delivery.src, err.to_dict())
            return True
        node.receive(delivery.src, header)
        return True

    def run_until_idle(self, max_steps: int = 1_000_000) -> int:
        steps = 0
        while steps < max_steps and self.step():
            steps += 1
        return steps

    def transcript(self) -> str:
        """The delivery log as text, one JSON record per line."""
        return "".join(
            json.dumps(d.as_dict(), sort_keys=True, ensure_ascii=False) + "\n" for d in self.log
        )

    def count(self, typ: Optional[str] = None, src: Optional[str] = None, dst: Optional[str] = None) -> int:
        """Number of logged messages (not transmissions) matching the filters; ``typ`` is the wire value."""
        total = 0
        for d in self.log:
            if d.kind != HEADER or (src and d.src != src) or (dst and d.dst != dst):
                continue
            try:
                payload = parse_wire(d.text).get("pl", [])
            except SensorCloudError:
                continue
            total += sum(1 for m in payload if typ is None or m.get("typ") == typ)
        return total

    def inbox_sizes(self) -> Dict[str, int]:
        with self.__lock:
            return {k: len(v) for k, v in self.__inboxes.items()}

    def nodes(self) -> List[Tuple[str, "Node"]]:
        return sorted(self.__nodes.items())
