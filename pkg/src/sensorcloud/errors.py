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

from typing import Any, Dict, Optional


class SensorCloudError(Exception):
    """Root of every protocol-level failure.

    Each subclass carries a stable ``code`` so that the CLI and the simulated transport can report
    errors in a machine-readable way, e.g. ``{"error": "bad_signature", "message": "..."}``.
    """

    code = "sensorcloud_error"

    def __init__(self, message: str = "", **context: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context

    def to_dict(self) -> Dict[str, Any]:
        report = {"error": self.code, "message": self.message}
        report.update({k: v for k, v in self.context.items() if v is not None})
        return report


# wire-codec


class MalformedJson(SensorCloudError):
    code = "malformed_json"

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(f"{message} (byte offset {offset})", offset=offset)
        self.offset = offset


class InvalidEncoding(SensorCloudError):
    code = "invalid_encoding"


class InvalidPem(SensorCloudError):
    code = "invalid_pem"


# message-model


class ValidationFailure(SensorCloudError):
    code = "validation_failure"

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report

    def to_dict(self) -> Dict[str, Any]:
        d = super().to_dict()
        if self.report is not None:
            d["violations"] = [v.as_dict() for v in self.report.violations]
        return d


class DuplicateReading(SensorCloudError):
    code = "duplicate_reading"


class EmptyBatch(SensorCloudError):
    code = "empty_batch"


class InvalidSequence(SensorCloudError):
    code = "invalid_sequence"


class UnsupportedVersion(SensorCloudError):
    code = "unsupported_version"

    def __init__(self, version: Any):
        super().__init__(f"protocol version {version!r} is not supported", version=version)
        self.version = version


class UnknownMessageType(SensorCloudError):
    code = "unknown_message_type"

    def __init__(self, typ: Any):
        super().__init__(f"unknown message type {typ!r}", typ=typ)
        self.typ = typ


# crypto-envelope


class MissingField(SensorCloudError):
    code = "missing_field"


class NonStringValue(SensorCloudError):
    code = "non_string_value"


class ExpiredKey(SensorCloudError):
    code = "expired_key"


class AuthenticationFailure(SensorCloudError):
    code = "authentication_failure"


class MalformedEnvelope(SensorCloudError):
    code = "malformed_envelope"


class AlreadySigned(SensorCloudError):
    code = "already_signed"


class MissingSignature(SensorCloudError):
    code = "missing_signature"


class MalformedSignatureBlock(SensorCloudError):
    code = "malformed_signature_block"


class BadSignature(SensorCloudError):
    code = "bad_signature"


class WrongKeyLength(SensorCloudError):
    code = "wrong_key_length"


class UnwrapFailure(SensorCloudError):
    code = "unwrap_failure"


# key-management


class OverlappingValidity(SensorCloudError):
    code = "overlapping_validity"


class NoValidKey(SensorCloudError):
    code = "no_valid_key"


class InvalidAcl(SensorCloudError):
    code = "invalid_acl"


class MixedValidity(SensorCloudError):
    code = "mixed_validity"


class WrongRecipient(SensorCloudError):
    code = "wrong_recipient"


class DuplicateKid(SensorCloudError):
    code = "duplicate_kid"


class UnknownKid(SensorCloudError):
    code = "unknown_kid"


class NotAuthorized(SensorCloudError):
    code = "not_authorized"


class UnknownEntity(SensorCloudError):
    code = "unknown_entity"


# nodes


class UnknownDestination(SensorCloudError):
    code = "unknown_destination"


class EmptyBuffer(SensorCloudError):
    code = "empty_buffer"


class InvalidSchemaText(SensorCloudError):
    code = "invalid_schema_text"


class UnknownActuator(SensorCloudError):
    code = "unknown_actuator"


class UnknownFunction(SensorCloudError):
    code = "unknown_function"


class InvalidParameters(SensorCloudError):
    code = "invalid_parameters"


class UnmatchedResponse(SensorCloudError):
    code = "unmatched_response"


class InconsistentEcho(SensorCloudError):
    code = "inconsistent_echo"


class KeyDownloadFailed(SensorCloudError):
    code = "key_download_failed"


# harness


class ScenarioError(SensorCloudError):
    code = "scenario_error"


class AssertionFailed(SensorCloudError):
    code = "assertion_failed"
