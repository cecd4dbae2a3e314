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

import base64
import hashlib
import random

import pytest
from cryptography.hazmat.primitives.asymmetric import ec

from sensorcloud.codec import (
    MAX_DEPTH,
    base64url_decode,
    base64url_encode,
    canonicalize,
    encode_wire,
    parse_wire,
    pem_decode_public_key,
    pem_encode_public_key,
    signature_input,
)
from sensorcloud.errors import InvalidEncoding, InvalidPem, MalformedJson

from .generators import random_document, random_message, shuffled

RFC4648_VECTORS = [
    (b"", ""),
    (b"f", "Zg"),
    (b"fo", "Zm8"),
    (b"foo", "Zm9v"),
    (b"foob", "Zm9vYg"),
    (b"fooba", "Zm9vYmE"),
    (b"foobar", "Zm9vYmFy"),
]


class TestBase64Url:
    @pytest.mark.parametrize("raw,text", RFC4648_VECTORS)
    def test_known_vectors(self, raw, text):
        assert base64url_encode(raw) == text
        assert base64url_decode(text) == raw

    def test_url_safe_alphabet(self):
        assert base64url_encode(b"\xfb\xff") == "-_8"
        assert base64url_decode("-_8") == b"\xfb\xff"

    @pytest.mark.parametrize(
        "text",
        ["Zg==", "Zm9v\n", "Zm 9v", "Zm+v", "Zm/v", "Z", "Zm9vY", "Zh", "Zm9"[:2] + "!"],
    )
    def test_rejects_non_canonical_text(self, text):
        with pytest.raises(InvalidEncoding):
            base64url_decode(text)

    def test_agrees_with_stdlib(self):
        r = random.Random(4648)
        for _ in range(500):
            raw = r.randbytes(r.randint(0, 70))
            expected = base64.urlsafe_b64encode(raw).decode("ascii").rstrip("=")
            assert base64url_encode(raw) == expected
            assert base64url_decode(expected) == raw


class TestParseWire:
    def test_preserves_member_order(self):
        doc = parse_wire('{"typ":"1","gw":"g","bn":"b","bt":"0","e":[]}')
        assert list(doc) == ["typ", "gw", "bn", "bt", "e"]

    def test_accepts_bytes(self):
        assert parse_wire('{"n":"温度"}'.encode("utf-8")) == {"n": "温度"}

    @pytest.mark.parametrize(
        "text,offset",
        [
            ('{"a":"1","a":"2"}', 9),
            ('{"ä":"1","ä":"2"}', 10),
            ('{"a":null}', 5),
            ('{"a":-1}', 5),
            ('{"a":1.5}', 5),
            ('{"a":1e3}', 5),
            ('{"a":["x",{"b":"1","b":"2"}]}', 19),
            ('{"a":NaN}', 5),
            ('{"a":Infinity}', 5),
            ('{"a":["1",-Infinity]}', 10),
        ],
    )
    def test_rejections_report_byte_offset(self, text, offset):
        with pytest.raises(MalformedJson) as info:
            parse_wire(text)
        assert info.value.offset == offset
        assert info.value.to_dict()["offset"] == offset

    def test_rejects_byte_order_mark(self):
        with pytest.raises(MalformedJson) as info:
            parse_wire(b"\xef\xbb\xbf{}")
        assert info.value.offset == 0
        with pytest.raises(MalformedJson):
            parse_wire("\ufeff{}")

    def test_rejects_invalid_utf8(self):
        with pytest.raises(MalformedJson) as info:
            parse_wire(b'{"a":"\xff"}')
        assert info.value.offset == 6

    @pytest.mark.parametrize("text", ["[]", '"x"', "1", '{"a":"1"', '{"a" "1"}', ""])
    def test_rejects_non_objects_and_broken_text(self, text):
        with pytest.raises(MalformedJson):
            parse_wire(text)

    def test_non_finite_literals_never_reach_the_canonical_form(self):
        for text in ('{"a":NaN}', '{"a":Infinity}', '{"a":-Infinity}', '{"NaN":"x","b":[NaN]}'):
            with pytest.raises(MalformedJson):
                canonicalize(parse_wire(text))

    def test_strings_named_like_non_finite_literals(self):
        assert parse_wire('{"NaN":"Infinity"}') == {"NaN": "Infinity"}

    def test_nesting_limit(self):
        nested = "[" * MAX_DEPTH + "]" * MAX_DEPTH
        with pytest.raises(MalformedJson) as info:
            parse_wire('{"a":' + nested + "}")
        assert info.value.offset == 5 + MAX_DEPTH - 1
        assert parse_wire('{"a":' + nested[1:-1] + "}")["a"] is not None

    def test_deep_nesting_is_malformed_not_a_crash(self):
        with pytest.raises(MalformedJson):
            parse_wire(b"[" * 100_000 + b"]" * 100_000)
        with pytest.raises(MalformedJson):
            parse_wire('{"a":' + "[" * 100_000 + "]" * 100_000 + "}")

    def test_same_name_in_different_objects_is_fine(self):
        doc = parse_wire('{"a":{"x":"1"},"b":{"x":"2"},"e":[{"n":"a"},{"n":"a"}]}')
        assert doc["b"]["x"] == "2"

    def test_strings_that_look_like_structure(self):
        doc = parse_wire('{"a":"x\\":null,\\"a\\":-1.5","b":"a"}')
        assert doc == {"a": 'x":null,"a":-1.5', "b": "a"}

    def test_wire_text_parses_back(self):
        r = random.Random(11)
        for _ in range(1000):
            doc = random_message(r).to_document()
            text = encode_wire(doc)
            assert list(parse_wire(text)) == list(doc)
            assert parse_wire(text) == doc


class TestCanonicalize:
    def test_sorted_compact_utf8(self):
        assert canonicalize({"b": "1", "a": {"d": "2", "c": "3"}}) == b'{"a":{"c":"3","d":"2"},"b":"1"}'
        assert canonicalize({"é": "ü"}) == '{"é":"ü"}'.encode("utf-8")

    def test_sorts_by_code_point_not_utf16(self):
        # U+E000 sorts before U+1F600 in code points (and UTF-8), after it in UTF-16 units
        canonical = canonicalize({"\U0001f600": "1", "\ue000": "2"}).decode("utf-8")
        assert canonical.index("\ue000") < canonical.index("\U0001f600")

    def test_idempotent_and_order_independent(self):
        r = random.Random(8785)
        for _ in range(2000):
            doc = random_document(r)
            canonical = canonicalize(doc)
            assert canonicalize(parse_wire(canonical)) == canonical
            assert canonicalize(shuffled(doc, r)) == canonical

    def test_permuted_messages_share_signature_input(self):
        r = random.Random(2)
        for _ in range(500):
            doc = random_message(r).to_document()
            assert signature_input(shuffled(doc, r)) == signature_input(doc)


class TestSignatureInput:
    def test_is_base64url_of_sha256_with_empty_sig(self):
        doc = {"typ": "402", "id": "gw1"}
        digest = hashlib.sha256(b'{"id":"gw1","sig":{},"typ":"402"}').digest()
        assert signature_input(doc) == base64url_encode(digest).encode("ascii")
        assert len(signature_input(doc)) == 43

    def test_ignores_existing_sig_block(self):
        doc = {"typ": "402", "id": "gw1"}
        signed = dict(doc, sig={"signatures": [{"header": {"alg": "ES256", "kid": "x"}, "signature": "AA"}]})
        assert signature_input(signed) == signature_input(doc)
        assert "sig" in signed


class TestPem:
    def test_round_trip(self, gateway_keys):
        pem = pem_encode_public_key(gateway_keys.public_key)
        assert pem.startswith("-----BEGIN PUBLIC KEY-----")
        decoded = pem_decode_public_key(pem)
        assert decoded.public_numbers() == gateway_keys.public_key.public_numbers()

    @pytest.mark.parametrize("text", ["", "not a key", "-----BEGIN PUBLIC KEY-----\nAAAA\n-----END PUBLIC KEY-----\n"])
    def test_rejects_garbage(self, text):
        with pytest.raises(InvalidPem):
            pem_decode_public_key(text)

    def test_rejects_other_curves(self):
        key = ec.generate_private_key(ec.SECP384R1()).public_key()
        with pytest.raises(InvalidPem, match="P-256"):
            pem_decode_public_key(pem_encode_public_key(key))
