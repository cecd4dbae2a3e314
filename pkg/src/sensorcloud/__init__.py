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

"""SensorCloud: a JSON protocol carrying signed, field-encrypted sensor data from gateways through
an untrusted cloud to authorized services."""

from .acl import AccessControlList, AclEntry, authorized_services
from .codec import base64url_decode, base64url_encode, canonicalize, encode_wire, parse_wire
from .errors import SensorCloudError
from .keys import CloudKeyStore, KeyStore, PublicKeyDirectory
from .messages import MessageType, TransmissionHeader, batch, parse_message, unbatch
from .security import decrypt_message, encrypt_fields, sign_message, verify_signature
from .settings import Settings, get_settings
from .validation import ValidationReport, validate

__all__ = [
    "AccessControlList",
    "AclEntry",
    "CloudKeyStore",
    "KeyStore",
    "MessageType",
    "PublicKeyDirectory",
    "SensorCloudError",
    "Settings",
    "TransmissionHeader",
    "ValidationReport",
    "authorized_services",
    "base64url_decode",
    "base64url_encode",
    "batch",
    "canonicalize",
    "decrypt_message",
    "encode_wire",
    "encrypt_fields",
    "get_settings",
    "parse_message",
    "parse_wire",
    "sign_message",
    "unbatch",
    "validate",
    "verify_signature",
]
