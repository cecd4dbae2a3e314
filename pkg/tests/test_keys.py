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

import random

import pytest

from sensorcloud.codec import pem_encode_public_key
from sensorcloud.errors import (
    DuplicateKid,
    EmptyBatch,
    InvalidPem,
    MixedValidity,
    NotAuthorized,
    NoValidKey,
    OverlappingValidity,
    UnknownEntity,
    UnknownKid,
    UnwrapFailure,
    WrongRecipient,
)
from sensorcloud.harness.vectors import seeded_rng
from sensorcloud.keys import (
    CloudKeyStore,
    KeyStore,
    PublicKeyDirectory,
    answer_key_download,
    answer_pubkey_request,
    build_key_upload,
    group_by_window,
    process_key_upload,
)
from sensorcloud.messages import DataKeyDownload, PublicKeyRequest
from sensorcloud.security.primitives import DataKey, EciesKeyWrapper
from sensorcloud.settings import DAY_MS


def key(fill: int, lo: int, hi: int) -> DataKey:
    return DataKey(material=bytes([fill]) * 32, validity=(lo, hi))


class TestKeyStore:
    def test_generate_and_lookup(self):
        store = KeyStore()
        generated = store.generate_data_key("dev1", "hum", (0, 99), seeded_rng(1))
        assert generated.validity == (0, 99)
        assert store.get(generated.kid) == generated
        assert generated.kid in store
        assert len(store) == 1
        assert store.kids() == [generated.kid]
        assert store.streams() == [("dev1", "hum")]
        assert store.keys_for("dev1", "hum") == [generated]
        assert store.keys_for("dev1", "temp") == []

    def test_overlapping_windows_are_refused(self):
        store = KeyStore()
        store.add("dev1", "hum", key(1, 100, 199))
        with pytest.raises(OverlappingValidity):
            store.generate_data_key("dev1", "hum", (199, 300))
        with pytest.raises(OverlappingValidity):
            store.add("dev1", "hum", key(2, 0, 100))
        with pytest.raises(OverlappingValidity):
            store.generate_data_key("dev1", "hum", (5, 4))
        store.add("dev1", "temp", key(3, 150, 160))
        store.add("dev1", "hum", key(4, 200, 300))
        assert [k.validity for k in store.keys_for("dev1", "hum")] == [(100, 199), (200, 300)]

    def test_re_adding_is_a_no_op(self):
        store = KeyStore()
        store.add("dev1", "hum", key(1, 0, 9))
        store.add("dev1", "hum", key(1, 0, 9))
        assert len(store.keys_for("dev1", "hum")) == 1

    def test_inclusive_bounds(self):
        store = KeyStore()
        early, late = key(1, 0, 99), key(2, 100, 199)
        store.add("dev1", "hum", late)
        store.add("dev1", "hum", early)
        assert store.select_key("dev1", "hum", 0) == early
        assert store.select_key("dev1", "hum", 99) == early
        assert store.select_key("dev1", "hum", 100) == late
        assert store.select_key("dev1", "hum", 199) == late
        with pytest.raises(NoValidKey) as info:
            store.select_key("dev1", "hum", 200)
        assert info.value.to_dict()["at"] == 200
        with pytest.raises(NoValidKey):
            store.select_key("dev2", "hum", 50)

    def test_select_matches_brute_force(self):
        r = random.Random(2000)
        store = KeyStore()
        windows = {}
        fill = 0
        for n in ("a", "b", "c"):
            t = r.randrange(50)
            for _ in range(20):
                length = r.randint(1, 40)
                if r.random() < 0.7:
                    fill += 1
                    k = DataKey(material=fill.to_bytes(32, "big"), validity=(t, t + length - 1))
                    store.add("dev", n, k)
                    windows.setdefault(n, []).append(k)
                t += length + r.randrange(3)
        for _ in range(2000):
            n = r.choice("abc")
            at = r.randrange(-5, 1000)
            expected = [k for k in windows.get(n, []) if k.validity[0] <= at <= k.validity[1]]
            if expected:
                assert store.select_key("dev", n, at) == expected[0]
            else:
                with pytest.raises(NoValidKey):
                    store.select_key("dev", n, at)

    def test_rotate_uses_fixed_windows(self):
        store = KeyStore()
        rng = seeded_rng(2)
        first = store.rotate("dev1", "hum", 2500, 1000, rng)
        assert first.validity == (2000, 2999)
        assert store.rotate("dev1", "hum", 2999, 1000, rng) == first
        second = store.rotate("dev1", "hum", 3000, 1000, rng)
        assert second.validity == (3000, 3999)
        assert second.kid != first.kid

    def test_rotate_fills_gaps(self):
        store = KeyStore()
        rng = seeded_rng(3)
        store.add("dev1", "hum", key(1, 3200, 3500))
        assert store.rotate("dev1", "hum", 3100, 1000, rng).validity == (3000, 3199)
        assert store.rotate("dev1", "hum", 3600, 1000, rng).validity == (3501, 3999)
        with pytest.raises(ValueError):
            store.rotate("dev1", "hum", 5000, 0, rng)

    def test_seeded_keys_are_reproducible(self):
        a = KeyStore().generate_data_key("dev1", "hum", (0, 9), seeded_rng(4))
        b = KeyStore().generate_data_key("dev1", "hum", (0, 9), seeded_rng(4))
        assert a == b


class TestUploads:
    def test_build(self, service_keys, directory):
        k1, k2 = key(1, 0, DAY_MS - 1), key(2, 0, DAY_MS - 1)
        upload = build_key_upload(
            "gw1", "srv-a", "dev1", [("hum", k1), ("temp", k2)], service_keys.public_key, directory=directory
        )
        doc = upload.to_document()
        assert list(doc) == ["typ", "gw", "srv", "bt", "bn", "e"]
        assert doc["typ"] == "400"
        assert doc["bt"] == ["0", str(DAY_MS - 1)]
        assert [(e["n"], e["kid"]) for e in doc["e"]] == [("hum", k1.kid), ("temp", k2.kid)]

    def test_build_errors(self, service_keys, other_service_keys, directory):
        with pytest.raises(EmptyBatch):
            build_key_upload("gw1", "srv-a", "dev1", [], service_keys.public_key)
        with pytest.raises(MixedValidity):
            build_key_upload(
                "gw1", "srv-a", "dev1", [("hum", key(1, 0, 9)), ("temp", key(2, 10, 19))], service_keys.public_key
            )
        with pytest.raises(WrongRecipient):
            build_key_upload(
                "gw1", "srv-a", "dev1", [("hum", key(1, 0, 9))], other_service_keys.public_key, directory=directory
            )

    def test_service_unwraps(self, service_keys):
        k1 = key(1, 0, 9)
        upload = build_key_upload("gw1", "srv-a", "dev1", [("hum", k1)], service_keys.public_key)
        store = KeyStore()
        assert process_key_upload(upload, store, service_keys.private_key) == [k1.kid]
        assert store.select_key("dev1", "hum", 5) == k1
        assert process_key_upload(upload.to_document(), store, service_keys.private_key) == []

    def test_service_needs_its_private_key(self, service_keys):
        upload = build_key_upload("gw1", "srv-a", "dev1", [("hum", key(1, 0, 9))], service_keys.public_key)
        with pytest.raises(ValueError):
            process_key_upload(upload, KeyStore())

    def test_wrong_recipient_cannot_unwrap(self, service_keys, other_service_keys):
        upload = build_key_upload("gw1", "srv-a", "dev1", [("hum", key(1, 0, 9))], service_keys.public_key)
        with pytest.raises(UnwrapFailure):
            process_key_upload(upload, KeyStore(), other_service_keys.private_key)

    def test_kid_must_match_the_material(self, service_keys):
        doc = build_key_upload("gw1", "srv-a", "dev1", [("hum", key(1, 0, 9))], service_keys.public_key).to_document()
        doc["e"][0]["kid"] = key(2, 0, 9).kid
        with pytest.raises(UnwrapFailure):
            process_key_upload(doc, KeyStore(), service_keys.private_key)

    @pytest.mark.parametrize("k", ["not base64!", "QQ=", "A"])
    def test_undecodable_wrapped_key(self, service_keys, k):
        doc = build_key_upload("gw1", "srv-a", "dev1", [("hum", key(1, 0, 9))], service_keys.public_key).to_document()
        doc["e"][0]["k"] = k
        with pytest.raises(UnwrapFailure) as info:
            process_key_upload(doc, KeyStore(), service_keys.private_key)
        assert info.value.to_dict()["kid"] == key(1, 0, 9).kid


class TestCloudKeyStore:
    def test_record_and_download(self, service_keys):
        k1 = key(1, 0, 9)
        wrapper = EciesKeyWrapper(seeded_rng(5))
        upload = build_key_upload("gw1", "srv-a", "dev1", [("hum", k1)], service_keys.public_key, wrapper)
        cloud = CloudKeyStore()
        assert process_key_upload(upload, cloud) == [k1.kid]
        assert process_key_upload(upload, cloud) == []
        assert cloud.kids() == [k1.kid]
        assert len(cloud) == 1
        stored = cloud.wrapped(k1.kid, "srv-a")
        assert (stored.gw, stored.bn, stored.n, stored.validity) == ("gw1", "dev1", "hum", (0, 9))

        answer = answer_key_download(DataKeyDownload(gw="gw1", srv="srv-a", kid=k1.kid), cloud)
        assert answer.to_document() == upload.to_document()
        store = KeyStore()
        process_key_upload(answer, store, service_keys.private_key)
        assert store.get(k1.kid).material == k1.material

    def test_same_kid_with_other_content(self, service_keys):
        k1 = key(1, 0, 9)
        cloud = CloudKeyStore()
        cloud.record(build_key_upload("gw1", "srv-a", "dev1", [("hum", k1)], service_keys.public_key))
        with pytest.raises(DuplicateKid):
            cloud.record(build_key_upload("gw1", "srv-a", "dev1", [("hum", k1)], service_keys.public_key))

    def test_download_errors(self, service_keys):
        k1 = key(1, 0, 9)
        cloud = CloudKeyStore()
        cloud.record(build_key_upload("gw1", "srv-a", "dev1", [("hum", k1)], service_keys.public_key))
        with pytest.raises(NotAuthorized):
            cloud.upload_for(k1.kid, "srv-b")
        with pytest.raises(UnknownKid):
            cloud.upload_for("0" * 40, "srv-a")


class TestPublicKeyDirectory:
    def test_lookup(self, directory, gateway_keys):
        assert directory.ids() == ["gw1", "srv-a", "srv-b"]
        assert "gw1" in directory and "gw9" not in directory
        assert directory["gw1"].public_numbers() == gateway_keys.public_key.public_numbers()
        assert directory.get("gw9") is None
        with pytest.raises(UnknownEntity):
            directory["gw9"]

    def test_register_pem(self, gateway_keys):
        directory = PublicKeyDirectory()
        directory.register("gw1", pem_encode_public_key(gateway_keys.public_key).encode("ascii"))
        assert directory.pem("gw1") == pem_encode_public_key(gateway_keys.public_key)
        with pytest.raises(InvalidPem):
            directory.register("gw2", "not a key")

    def test_from_yaml(self, tmp_path, gateway_keys, service_keys):
        (tmp_path / "keys").mkdir()
        (tmp_path / "keys" / "gw1.pem").write_text(pem_encode_public_key(gateway_keys.public_key))
        absolute = tmp_path / "srv-a.pem"
        absolute.write_text(pem_encode_public_key(service_keys.public_key))
        (tmp_path / "directory.yaml").write_text(f"gw1: keys/gw1.pem\nsrv-a: {absolute}\n")
        directory = PublicKeyDirectory.from_yaml(tmp_path / "directory.yaml")
        assert directory.ids() == ["gw1", "srv-a"]
        assert directory.pem("srv-a") == pem_encode_public_key(service_keys.public_key)

    def test_yaml_must_be_a_mapping(self, tmp_path):
        path = tmp_path / "directory.yaml"
        path.write_text("- gw1\n")
        with pytest.raises(InvalidPem):
            PublicKeyDirectory.from_yaml(path)

    def test_answer_pubkey_request(self, directory):
        response = answer_pubkey_request(PublicKeyRequest(id="srv-b"), directory)
        assert response.to_document() == {"typ": "403", "key": directory.pem("srv-b")}
        with pytest.raises(UnknownEntity):
            answer_pubkey_request(PublicKeyRequest(id="gw9"), directory)


def test_group_by_window():
    a, b, c = key(1, 10, 19), key(2, 0, 9), key(3, 10, 19)
    groups = group_by_window([("temp", a), ("hum", b), ("hum", c)])
    assert groups == [[("hum", b)], [("hum", c), ("temp", a)]]
    assert group_by_window([]) == []
