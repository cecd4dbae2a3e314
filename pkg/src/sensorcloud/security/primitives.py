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

"""Low-level primitives: AES-256-GCM, ECDSA P-256/SHA-256, SHA-1 key ids and data-key wrapping."""

import abc
import os
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import AuthenticationFailure, UnwrapFailure, WrongKeyLength

RandomSource = Callable[[int], bytes]

DATA_KEY_BYTES = 32
IV_BYTES = 12
TAG_BYTES = 16
P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_POINT_BYTES = 65
_WRAP_INFO = b"sensorcloud data key wrap"


def key_id(key_bytes: bytes) -> str:
    """The identifier of a data key: lowercase hex SHA-1 of the 32 key bytes."""
    if len(key_bytes) != DATA_KEY_BYTES:
        raise WrongKeyLength(f"data keys are {DATA_KEY_BYTES} bytes, got {len(key_bytes)}")
    digest = hashes.Hash(hashes.SHA1())
    digest.update(bytes(key_bytes))
    return digest.finalize().hex()


@dataclass(frozen=True)
class DataKey:
    """A 256-bit symmetric key with its SHA-1 identifier and inclusive validity window (ms)."""

    material: bytes = field(repr=False)
    validity: Tuple[int, int]
    kid: str = ""

    def __post_init__(self):
        kid = key_id(self.material)
        if self.kid and self.kid != kid:
            raise ValueError(f"kid {self.kid} does not match the key material")
        object.__setattr__(self, "kid", kid)
        object.__setattr__(self, "validity", (int(self.validity[0]), int(self.validity[1])))
        if self.validity[0] > self.validity[1]:
            raise ValueError(f"validity window {self.validity} is reversed")

    @classmethod
    def generate(cls, validity: Tuple[int, int], rng: RandomSource = os.urandom) -> "DataKey":
        return cls(material=rng(DATA_KEY_BYTES), validity=validity)

    def is_valid_at(self, time_ms: int) -> bool:
        return self.validity[0] <= time_ms <= self.validity[1]

    def overlaps(self, other: "DataKey") -> bool:
        return self.validity[0] <= other.validity[1] and other.validity[0] <= self.validity[1]


def derive_private_key(rng: RandomSource = os.urandom) -> ec.EllipticCurvePrivateKey:
    """A P-256 private key drawn from ``rng`` (seeded sources give reproducible keys)."""
    scalar = int.from_bytes(rng(32), "big") % (P256_ORDER - 1) + 1
    return ec.derive_private_key(scalar, ec.SECP256R1())


@dataclass(frozen=True)
class SigningKeyPair:
    """A P-256 key pair bound to the entity (gateway or service) that owns it."""

    owner: str
    private_key: ec.EllipticCurvePrivateKey = field(repr=False)

    @classmethod
    def generate(cls, owner: str, rng: RandomSource = os.urandom) -> "SigningKeyPair":
        return cls(owner=owner, private_key=derive_private_key(rng))

    @classmethod
    def from_pem(cls, owner: str, pem: bytes) -> "SigningKeyPair":
        key = serialization.load_pem_private_key(pem, password=None)
        if not isinstance(key, ec.EllipticCurvePrivateKey) or not isinstance(
            key.curve, ec.SECP256R1
        ):
            raise ValueError("expected a P-256 private key")
        return cls(owner=owner, private_key=key)

    @property
    def public_key(self) -> ec.EllipticCurvePublicKey:
        return self.private_key.public_key()

    def private_pem(self) -> bytes:
        return self.private_key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )


def same_public_key(a: ec.EllipticCurvePublicKey, b: ec.EllipticCurvePublicKey) -> bool:
    return a.public_numbers() == b.public_numbers()


# AES-256-GCM


def aes_gcm_encrypt(key: bytes, iv: bytes, plaintext: bytes) -> Tuple[bytes, bytes]:
    """Return ``(ciphertext, tag)``; no additional authenticated data is used."""
    sealed = AESGCM(key).encrypt(iv, plaintext, None)
    return sealed[:-TAG_BYTES], sealed[-TAG_BYTES:]


def aes_gcm_decrypt(key: bytes, iv: bytes, ciphertext: bytes, tag: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(iv, ciphertext + tag, None)
    except InvalidTag as err:
        raise AuthenticationFailure("GCM authentication tag mismatch") from err


# ES256


def es256_sign(private_key: ec.EllipticCurvePrivateKey, data: bytes) -> bytes:
    """ECDSA P-256/SHA-256 with RFC 6979 nonces, rendered as the 64-byte ``r || s`` JOSE form."""
    der = private_key.sign(data, ec.ECDSA(hashes.SHA256(), deterministic_signing=True))
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def es256_verify(public_key: ec.EllipticCurvePublicKey, data: bytes, signature: bytes) -> bool:
    if len(signature) != 64:
        return False
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    try:
        public_key.verify(encode_dss_signature(r, s), data, ec.ECDSA(hashes.SHA256()))
    except (InvalidSignature, ValueError):
        return False
    return True


# nonces


class NonceSource(abc.ABC):
    """Supplies 12-byte GCM nonces. Implementations never return the same value twice."""

    @abc.abstractmethod
    def __call__(self) -> bytes: ...


class RandomNonceSource(NonceSource):
    def __call__(self) -> bytes:
        return os.urandom(IV_BYTES)


class CounterNonceSource(NonceSource):
    """A 4-byte prefix followed by a 64-bit big-endian counter. Thread-safe."""

    def __init__(self, prefix: bytes = b"\x00" * 4, start: int = 0):
        if len(prefix) != 4:
            raise ValueError("nonce prefix must be 4 bytes")
        self.__prefix = bytes(prefix)
        self.__counter = start
        self.__lock = threading.Lock()

    def __call__(self) -> bytes:
        with self.__lock:
            value = self.__counter
            self.__counter += 1
        return self.__prefix + value.to_bytes(8, "big")


# key wrapping


class KeyWrapper(abc.ABC):
    """Encrypts a data key for one recipient's P-256 public key."""

    @abc.abstractmethod
    def wrap(self, material: bytes, recipient: ec.EllipticCurvePublicKey) -> bytes: ...

    @abc.abstractmethod
    def unwrap(self, blob: bytes, recipient: ec.EllipticCurvePrivateKey) -> bytes: ...


class EciesKeyWrapper(KeyWrapper):
    """Ephemeral ECDH on P-256, HKDF-SHA-256 to a 256-bit key, AES-256-GCM over the data key.

    Blob layout: ephemeral public point (65 bytes, uncompressed) || nonce (12) || ciphertext || tag.
    The ephemeral point is bound as additional authenticated data.
    """

    def __init__(self, rng: RandomSource = os.urandom):
        self.__rng = rng

    @staticmethod
    def __kek(shared: bytes, point: bytes) -> bytes:
        return HKDF(
            algorithm=hashes.SHA256(), length=32, salt=None, info=_WRAP_INFO + point
        ).derive(shared)

    def wrap(self, material: bytes, recipient: ec.EllipticCurvePublicKey) -> bytes:
        ephemeral = derive_private_key(self.__rng)
        point = ephemeral.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
        )
        kek = self.__kek(ephemeral.exchange(ec.ECDH(), recipient), point)
        nonce = self.__rng(IV_BYTES)
        return point + nonce + AESGCM(kek).encrypt(nonce, bytes(material), point)

    def unwrap(self, blob: bytes, recipient: ec.EllipticCurvePrivateKey) -> bytes:
        if len(blob) != _POINT_BYTES + IV_BYTES + DATA_KEY_BYTES + TAG_BYTES:
            raise UnwrapFailure(f"wrapped key blob has wrong length {len(blob)}")
        point = blob[:_POINT_BYTES]
        nonce = blob[_POINT_BYTES : _POINT_BYTES + IV_BYTES]
        try:
            ephemeral = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), point)
            kek = self.__kek(recipient.exchange(ec.ECDH(), ephemeral), point)
            return AESGCM(kek).decrypt(nonce, blob[_POINT_BYTES + IV_BYTES :], point)
        except (InvalidTag, ValueError) as err:
            raise UnwrapFailure("cannot unwrap data key") from err


def wrap_data_key(
    key: DataKey,
    recipient_public: ec.EllipticCurvePublicKey,
    wrapper: Optional[KeyWrapper] = None,
) -> bytes:
    return (wrapper or EciesKeyWrapper()).wrap(key.material, recipient_public)


def unwrap_data_key(
    wrapped: bytes,
    recipient_private: ec.EllipticCurvePrivateKey,
    validity: Tuple[int, int],
    wrapper: Optional[KeyWrapper] = None,
) -> DataKey:
    material = (wrapper or EciesKeyWrapper()).unwrap(wrapped, recipient_private)
    return DataKey(material=material, validity=validity)
