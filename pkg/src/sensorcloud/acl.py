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

"""The data owner's access control list.

One entry per line: ``srv gw bn n [sensitive|plain]``. ``*`` is a wildcard for ``bn`` and ``n``;
the flag defaults to ``sensitive``. ``#`` starts a comment.
"""

import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple, Union

from .errors import InvalidAcl
from .messages import WILDCARD

logger = logging.getLogger(__name__)

_FLAGS = {"sensitive": True, "plain": False}


@dataclass(frozen=True, order=True)
class AclEntry:
    srv: str
    gw: str
    bn: str = WILDCARD
    n: str = WILDCARD
    sensitive: bool = True

    def __post_init__(self):
        for name in ("srv", "gw", "bn", "n"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value or any(c.isspace() for c in value):
                raise InvalidAcl(f"ACL field {name} must be a non-empty token, got {value!r}")
        if WILDCARD in (self.srv, self.gw):
            raise InvalidAcl("wildcards are only allowed for bn and n")

    def matches(self, gw: str, bn: str, n: Optional[str] = None) -> bool:
        """Whether this entry covers ``(gw, bn, n)``; ``n=None`` ignores the sensor id."""
        if self.gw != gw or self.bn not in (WILDCARD, bn):
            return False
        return n is None or self.n in (WILDCARD, n)

    def to_line(self) -> str:
        flag = "sensitive" if self.sensitive else "plain"
        return f"{self.srv} {self.gw} {self.bn} {self.n} {flag}"


class AccessControlList:
    """An immutable-by-convention list of entries; ``add`` and ``remove`` swap the tuple atomically."""

    def __init__(self, entries: Iterable[AclEntry] = ()):
        self.__entries: Tuple[AclEntry, ...] = tuple(entries)
        self.__lock = threading.Lock()

    @classmethod
    def parse(cls, text: str, source: str = "<acl>") -> "AccessControlList":
        entries = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) not in (4, 5):
                raise InvalidAcl(f"{source}:{lineno}: expected 'srv gw bn n [flag]'", line=lineno)
            flag = fields[4] if len(fields) == 5 else "sensitive"
            if flag not in _FLAGS:
                raise InvalidAcl(f"{source}:{lineno}: unknown flag {flag!r}", line=lineno)
            entries.append(AclEntry(*fields[:4], sensitive=_FLAGS[flag]))
        logger.debug(f"Parsed {len(entries)} ACL entries from {source}")
        return cls(entries)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AccessControlList":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), source=str(path))

    @property
    def entries(self) -> Tuple[AclEntry, ...]:
        return self.__entries

    def __iter__(self) -> Iterator[AclEntry]:
        return iter(self.__entries)

    def __len__(self) -> int:
        return len(self.__entries)

    def add(self, entry: AclEntry):
        with self.__lock:
            self.__entries = self.__entries + (entry,)

    def remove(self, entry: AclEntry):
        with self.__lock:
            self.__entries = tuple(e for e in self.__entries if e != entry)

    def to_text(self) -> str:
        return "".join(e.to_line() + "\n" for e in self.__entries)

    def authorized_services(self, gw: str, bn: str, n: str) -> List[str]:
        return sorted({e.srv for e in self.__entries if e.matches(gw, bn, n)})

    def is_sensitive(self, gw: str, bn: str, n: str) -> bool:
        """A stream is encrypted when any entry covering it is marked sensitive."""
        return any(e.sensitive for e in self.__entries if e.matches(gw, bn, n))

    def authorizes(self, srv: str, gw: str, bn: str, n: Optional[str] = None) -> bool:
        return any(e.srv == srv and e.matches(gw, bn, n) for e in self.__entries)

    def services(self) -> List[str]:
        return sorted({e.srv for e in self.__entries})


def authorized_services(acl: AccessControlList, gw: str, bn: str, n: str) -> List[str]:
    """All services with an entry matching ``(gw, bn, n)``, ascending."""
    return acl.authorized_services(gw, bn, n)
