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

"""Data-key lifecycle, key stores for each node role, and the type 400-403 exchanges."""

import bisect
import copy
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import yaml
from cryptography.hazmat.primitives.asymmetric import ec

from .codec import JsonDocument, base64url_decode, base64url_encode, pem_decode_public_key
from .codec import pem_encode_public_key
from .errors import (
    DuplicateKid,
    EmptyBatch,
    InvalidEncoding,
    InvalidPem,
    MixedValidity,
    NoValidKey,
    NotAuthorized,
    OverlappingValidity,
    UnknownEntity,
    UnknownKid,
    UnwrapFailure,
    WrongRecipient,
)
from .messages import (
    DataKeyDownload,
    DataKeyEntry,
    DataKeyUpload,
    PublicKeyRequest,
    PublicKeyResponse,
    parse_message,
)
from .security.primitives import (
    DataKey,
    KeyWrapper,
    RandomSource,
    key_id,
    same_public_key,
    unwrap_data_key,
    wrap_data_key,
)

logger = logging.getLogger(__name__)

Stream = Tuple[str, str]
PublicKeyLike = Union[ec.EllipticCurvePublicKey, str, bytes]


class KeyStore:
    """Plaintext data keys held by a gateway (or unwrapped by a service).

    Keys are indexed per ``(bn, n)`` stream, ordered by validity start. Windows of one stream never
    overlap, so :meth:`select_key` is unambiguous.
    """

    def __init__(self):
        self.__by_kid: Dict[str, DataKey] = {}
        self.__index: Dict[Stream, List[DataKey]] = {}
        self.__lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.__by_kid)

    def __contains__(self, kid: str) -> bool:
        return kid in self.__by_kid

    def get(self, kid: str) -> Optional[DataKey]:
        return self.__by_kid.get(kid)

    def kids(self) -> List[str]:
        with self.__lock:
            return list(self.__by_kid)

    def streams(self) -> List[Stream]:
        with self.__lock:
            return sorted(self.__index)

    def keys_for(self, bn: str, n: str) -> List[DataKey]:
        with self.__lock:
            return list(self.__index.get((bn, n), ()))

    def generate_data_key(
        self, bn: str, n: str, validity: Tuple[int, int], rng: RandomSource = os.urandom
    ) -> DataKey:
        if validity[0] > validity[1]:
            raise OverlappingValidity(f"validity window {validity} is reversed")
        with self.__lock:
            self.__check_free(bn, n, validity)
            key = DataKey.generate(validity, rng)
            self.add(bn, n, key)
        logger.debug(f"Generated data key {key.kid} for ({bn}, {n}) valid {key.validity}")
        return key

    def add(self, bn: str, n: str, key: DataKey):
        """Index ``key`` for ``(bn, n)``. Re-adding an indexed key is a no-op."""
        with self.__lock:
            known = self.__by_kid.get(key.kid)
            if known is not None and known.material != key.material:
                raise DuplicateKid(f"kid {key.kid} is bound to other key material", kid=key.kid)
            keys = self.__index.setdefault((bn, n), [])
            if any(k.kid == key.kid for k in keys):
                return
            self.__check_free(bn, n, key.validity)
            starts = [k.validity[0] for k in keys]
            keys.insert(bisect.bisect_right(starts, key.validity[0]), key)
            self.__by_kid[key.kid] = key

    def select_key(self, bn: str, n: str, time_ms: int) -> DataKey:
        """The key whose window contains ``time_ms``; both bounds are inclusive."""
        with self.__lock:
            keys = self.__index.get((bn, n), [])
            starts = [k.validity[0] for k in keys]
            i = bisect.bisect_right(starts, time_ms) - 1
            if i >= 0 and keys[i].is_valid_at(time_ms):
                return keys[i]
        raise NoValidKey(f"no data key for ({bn}, {n}) at {time_ms}", bn=bn, n=n, at=time_ms)

    def rotate(
        self, bn: str, n: str, at: int, window_ms: int, rng: RandomSource = os.urandom
    ) -> DataKey:
        """Make sure a key covers ``at``; new keys span the fixed window ``at`` falls into.

        Windows are ``[k*window_ms, (k+1)*window_ms - 1]``. If keys added by other means cover
        part of that window, the new key only fills the gap around ``at``.
        """
        if window_ms <= 0:
            raise ValueError("window_ms must be positive")
        with self.__lock:
            try:
                return self.select_key(bn, n, at)
            except NoValidKey:
                pass
            lo = (at // window_ms) * window_ms
            hi = lo + window_ms - 1
            for k in self.__index.get((bn, n), ()):
                if k.validity[1] < at:
                    lo = max(lo, k.validity[1] + 1)
                elif k.validity[0] > at:
                    hi = min(hi, k.validity[0] - 1)
            return self.generate_data_key(bn, n, (lo, hi), rng)

    def __check_free(self, bn: str, n: str, validity: Tuple[int, int]):
        for k in self.__index.get((bn, n), ()):
            if k.validity[0] <= validity[1] and validity[0] <= k.validity[1]:
                raise OverlappingValidity(
                    f"window {validity} overlaps key {k.kid} {k.validity} for ({bn}, {n})"
                )


@dataclass(frozen=True)
class WrappedKey:
    """One data key wrapped for one service, as the cloud keeps it."""

    kid: str
    srv: str
    gw: str
    bn: str
    n: str
    validity: Tuple[int, int]
    k: str


class CloudKeyStore:
    """Wrapped keys held opaquely by the cloud; it never sees plaintext key material.

    The signed type-400 document each wrapped key arrived in is kept as-is, so a download can be
    answered with a message the service is able to verify against the gateway's key.
    """

    def __init__(self):
        self.__wrapped: Dict[Tuple[str, str], WrappedKey] = {}
        self.__uploads: Dict[Tuple[str, str], JsonDocument] = {}
        self.__lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.__wrapped)

    def kids(self) -> List[str]:
        with self.__lock:
            return sorted({kid for kid, _ in self.__wrapped})

    def wrapped(self, kid: str, srv: str) -> Optional[WrappedKey]:
        return self.__wrapped.get((kid, srv))

    def record(self, upload: Union[DataKeyUpload, JsonDocument]) -> List[WrappedKey]:
        doc = upload.to_document() if isinstance(upload, DataKeyUpload) else upload
        msg = parse_message(doc)
        added = []
        with self.__lock:
            for entry in msg.e:
                slot = (entry.kid, msg.srv)
                known = self.__wrapped.get(slot)
                if known is not None:
                    if known.k != entry.k:
                        raise DuplicateKid(
                            f"kid {entry.kid} for {msg.srv} already stored with other content",
                            kid=entry.kid,
                        )
                    continue
                wrapped = WrappedKey(
                    entry.kid, msg.srv, msg.gw, msg.bn, entry.n, (msg.bt[0], msg.bt[1]), entry.k
                )
                self.__wrapped[slot] = wrapped
                self.__uploads[slot] = copy.deepcopy(doc)
                added.append(wrapped)
        return added

    def upload_for(self, kid: str, srv: str) -> JsonDocument:
        with self.__lock:
            doc = self.__uploads.get((kid, srv))
            if doc is None:
                if any(k == kid for k, _ in self.__wrapped):
                    raise NotAuthorized(f"no copy of {kid} is wrapped for {srv}", kid=kid, srv=srv)
                raise UnknownKid(f"unknown kid {kid}", kid=kid)
            return copy.deepcopy(doc)


class PublicKeyDirectory:
    """Provisioned P-256 public keys of every gateway and service, by entity id."""

    def __init__(self, keys: Optional[Mapping[str, PublicKeyLike]] = None):
        self.__keys: Dict[str, ec.EllipticCurvePublicKey] = {}
        self.__lock = threading.RLock()
        for entity, key in (keys or {}).items():
            self.register(entity, key)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "PublicKeyDirectory":
        """Load ``entity id: path/to/key.pem`` pairs; relative paths are resolved next to the file."""
        path = Path(path)
        with open(path, "r", encoding="utf-8") as f:
            entries = yaml.safe_load(f) or {}
        if not isinstance(entries, dict):
            raise InvalidPem(f"{path} must map entity ids to PEM file paths")
        directory = cls()
        for entity, pem_path in entries.items():
            pem_file = Path(pem_path)
            if not pem_file.is_absolute():
                pem_file = path.parent / pem_file
            directory.register(str(entity), pem_file.read_text(encoding="ascii"))
        logger.debug(f"Loaded {len(directory)} public keys from {path}")
        return directory

    def __len__(self) -> int:
        return len(self.__keys)

    def __contains__(self, entity: str) -> bool:
        return entity in self.__keys

    def __getitem__(self, entity: str) -> ec.EllipticCurvePublicKey:
        key = self.__keys.get(entity)
        if key is None:
            raise UnknownEntity(f"no public key registered for {entity!r}", entity=entity)
        return key

    def get(self, entity: str) -> Optional[ec.EllipticCurvePublicKey]:
        return self.__keys.get(entity)

    def ids(self) -> List[str]:
        return sorted(self.__keys)

    def register(self, entity: str, key: PublicKeyLike):
        if isinstance(key, bytes):
            key = key.decode("ascii")
        if isinstance(key, str):
            key = pem_decode_public_key(key)
        with self.__lock:
            self.__keys[entity] = key

    def pem(self, entity: str) -> str:
        return pem_encode_public_key(self[entity])


def build_key_upload(
    gw: str,
    srv: str,
    bn: str,
    entries: Sequence[Tuple[str, DataKey]],
    recipient_pub: ec.EllipticCurvePublicKey,
    wrapper: Optional[KeyWrapper] = None,
    directory: Optional[PublicKeyDirectory] = None,
) -> DataKeyUpload:
    """A type-400 message carrying ``entries`` wrapped for ``srv``; all must share one window."""
    if not entries:
        raise EmptyBatch("a key upload needs at least one key")
    windows = {key.validity for _, key in entries}
    if len(windows) != 1:
        raise MixedValidity(f"keys span {len(windows)} validity windows; split the upload")
    if directory is not None:
        expected = directory.get(srv)
        if expected is not None and not same_public_key(expected, recipient_pub):
            raise WrongRecipient(f"recipient key does not belong to {srv}", srv=srv)
    (start, end) = windows.pop()
    return DataKeyUpload(
        gw=gw,
        srv=srv,
        bt=[start, end],
        bn=bn,
        e=[
            DataKeyEntry(n=n, kid=key.kid, k=base64url_encode(wrap_data_key(key, recipient_pub, wrapper)))
            for n, key in entries
        ],
    )


def process_key_upload(
    msg: Union[DataKeyUpload, JsonDocument],
    store: Union[KeyStore, CloudKeyStore],
    recipient_private: Optional[ec.EllipticCurvePrivateKey] = None,
    wrapper: Optional[KeyWrapper] = None,
) -> List[str]:
    """Store the keys of a verified type-400 message; returns the kids that were new.

    The cloud keeps the wrapped blobs. A service passes its private key and gets the unwrapped keys
    indexed under ``(bn, n)``.
    """
    if isinstance(store, CloudKeyStore):
        return [w.kid for w in store.record(msg)]
    if recipient_private is None:
        raise ValueError("a service key store needs the recipient private key")

    if not isinstance(msg, DataKeyUpload):
        msg = parse_message(msg)
    validity = (msg.bt[0], msg.bt[1])
    added = []
    for entry in msg.e:
        if entry.kid in store:
            continue
        try:
            blob = base64url_decode(entry.k)
        except InvalidEncoding as err:
            raise UnwrapFailure(f"wrapped key for {entry.kid} is not base64url", kid=entry.kid) from err
        key = unwrap_data_key(blob, recipient_private, validity, wrapper)
        if key_id(key.material) != entry.kid:
            raise UnwrapFailure(f"unwrapped key does not match kid {entry.kid}", kid=entry.kid)
        store.add(msg.bn, entry.n, key)
        added.append(entry.kid)
    return added


def answer_key_download(
    req: DataKeyDownload, cloud_store: CloudKeyStore
) -> DataKeyUpload:
    """The stored type-400 message holding ``req.kid`` wrapped for ``req.srv``."""
    return parse_message(cloud_store.upload_for(req.kid, req.srv))


def answer_pubkey_request(
    req: PublicKeyRequest, directory: PublicKeyDirectory
) -> PublicKeyResponse:
    return PublicKeyResponse(key=directory.pem(req.id))


def group_by_window(keys: Iterable[Tuple[str, DataKey]]) -> List[List[Tuple[str, DataKey]]]:
    """Split ``(n, key)`` pairs into groups sharing one validity window, in window order."""
    groups: Dict[Tuple[int, int], List[Tuple[str, DataKey]]] = {}
    for n, key in keys:
        groups.setdefault(key.validity, []).append((n, key))
    return [sorted(groups[w], key=lambda item: item[0].encode("utf-8")) for w in sorted(groups)]
