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

from .envelope import decrypt_message, encrypt_fields, encrypt_readings_array, envelope_kids
from .primitives import (
    CounterNonceSource,
    DataKey,
    EciesKeyWrapper,
    KeyWrapper,
    NonceSource,
    RandomNonceSource,
    SigningKeyPair,
    aes_gcm_decrypt,
    aes_gcm_encrypt,
    es256_sign,
    es256_verify,
    key_id,
    unwrap_data_key,
    wrap_data_key,
)
from .signing import (
    VerificationResult,
    VerificationStatus,
    require_verified,
    sign_message,
    signer_of,
    verify_signature,
)

__all__ = [
    "CounterNonceSource",
    "DataKey",
    "EciesKeyWrapper",
    "KeyWrapper",
    "NonceSource",
    "RandomNonceSource",
    "SigningKeyPair",
    "VerificationResult",
    "VerificationStatus",
    "aes_gcm_decrypt",
    "aes_gcm_encrypt",
    "decrypt_message",
    "encrypt_fields",
    "encrypt_readings_array",
    "envelope_kids",
    "es256_sign",
    "es256_verify",
    "key_id",
    "require_verified",
    "sign_message",
    "signer_of",
    "unwrap_data_key",
    "wrap_data_key",
]
