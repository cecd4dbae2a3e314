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

import itertools
import random
from dataclasses import replace

import pytest

from sensorcloud.acl import AccessControlList, AclEntry
from sensorcloud.codec import encode_wire, parse_wire
from sensorcloud.errors import (
    BadSignature,
    NotAuthorized,
    UnknownDestination,
    UnknownKid,
    ValidationFailure,
)
from sensorcloud.keys import build_key_upload
from sensorcloud.messages import (
    ActuatorCommand,
    DataKeyDownload,
    DataKeyUpload,
    PublicKeyRequest,
    PublicKeyResponse,
    SensorDataRequest,
    SensorName,
)
from sensorcloud.nodes import CloudNode
from sensorcloud.nodes.cloud import ItemStore, QueryPlan, StoredItem, evaluate_query
from sensorcloud.security.primitives import DataKey
from sensorcloud.security.signing import sign_message

from .conftest import make_deployment

ITEM = {
    "typ": "1",
    "gw": "gw1",
    "bn": "dev1",
    "bt": "1000",
    "e": [{"n": "hum", "t": "0", "sv": "41"}, {"n": "temp", "t": "0", "sv": "21.5"}],
}
CONFIG = {"typ": "3", "gw": "gw1", "bn": "dev1", "js": '{"temp":{"unit":"Cel"}}'}


def item_at(seq, bt, bn="dev1", gw="gw1", names=("temp",)):
    return StoredItem(seq=seq, wire="", gw=gw, bn=bn, bt=bt, names=frozenset(names))


def oracle(plan, items, acl):
    """Straightforward restatement of the query rules."""
    chosen = []
    for item in items:
        if plan.gw != "*" and item.gw != plan.gw:
            continue
        if item.bt < plan.lo or (plan.hi is not None and item.bt > plan.hi):
            continue
        if plan.bns and item.bn not in plan.bns:
            continue
        if plan.names and not (plan.names & item.names):
            continue
        wanted = (plan.names & item.names) if plan.names else item.names
        entries = [e for e in acl if e.srv == plan.srv and e.gw == item.gw and e.bn in ("*", item.bn)]
        if wanted:
            allowed = any(e.n in ("*", n) for e in entries for n in wanted)
        else:
            allowed = bool(entries)
        if allowed:
            chosen.append(item)
    chosen.sort(key=lambda i: (i.bt, i.bn.encode("utf-8"), i.seq))
    chosen = chosen[plan.off :]
    return chosen if plan.lim is None else chosen[: plan.lim]


@pytest.fixture
def cloud(directory, acl):
    return CloudNode(directory=directory, acl=acl)


class TestEvaluateQuery:
    def test_matches_brute_force(self):
        r = random.Random(77)
        devices, names, services = ["dev1", "dev2", "Dev3", "ä"], ["hum", "temp", "co2"], ["srv-a", "srv-b"]
        for _ in range(1000):
            acl = AccessControlList(
                AclEntry(r.choice(services), r.choice(["gw1", "gw2"]), r.choice(devices + ["*"]), r.choice(names + ["*"]))
                for _ in range(r.randint(0, 6))
            )
            items = [
                item_at(
                    seq,
                    r.randrange(50),
                    bn=r.choice(devices),
                    gw=r.choice(["gw1", "gw2"]),
                    names=r.sample(names, r.randint(0, 3)),
                )
                for seq in range(r.randint(0, 25))
            ]
            lo = r.randrange(40)
            plan = QueryPlan(
                srv=r.choice(services),
                gw=r.choice(["gw1", "gw2", "*"]),
                lo=lo,
                hi=r.choice([None, lo + r.randrange(30)]),
                bns=frozenset(r.sample(devices, r.randint(0, 2))),
                names=frozenset(r.sample(names, r.randint(0, 2))),
                lim=r.choice([None, 1, 3, 10]),
                off=r.choice([0, 0, 1, 4]),
            )
            assert evaluate_query(plan, items, acl) == oracle(plan, items, acl)

    def test_matches_on_every_plan_over_a_small_store(self):
        acl = AccessControlList.parse("srv-a gw1 dev1 hum\nsrv-a gw2 * *\nsrv-b gw1 * temp plain\nsrv-b gw2 dev2 *")
        items = [
            item_at(0, 2, "dev2", "gw1", ("hum", "temp")),
            item_at(1, 0, "dev1", "gw1", ("hum",)),
            item_at(2, 1, "dev1", "gw2", ("temp",)),
            item_at(3, 1, "dev2", "gw2", ()),
            item_at(4, 3, "dev1", "gw1", ("temp",)),
            item_at(5, 0, "dev1", "gw1", ("hum", "temp")),
            item_at(6, 2, "dev2", "gw2", ("hum",)),
            item_at(7, 1, "dev1", "gw1", ()),
        ]
        bounds = [(lo, hi) for lo in range(4) for hi in [None] + list(range(lo, 4))]
        subsets = [frozenset(), frozenset({"dev1"}), frozenset({"dev2"}), frozenset({"dev1", "dev2"})]
        name_sets = [frozenset(), frozenset({"hum"}), frozenset({"temp"}), frozenset({"hum", "temp"})]
        checked = 0
        for srv, gw, (lo, hi), bns, names, lim, off in itertools.product(
            ["srv-a", "srv-b"], ["gw1", "gw2", "*"], bounds, subsets, name_sets, [None, 1, 2], [0, 1, 3]
        ):
            plan = QueryPlan(srv=srv, gw=gw, lo=lo, hi=hi, bns=bns, names=names, lim=lim, off=off)
            assert evaluate_query(plan, items, acl) == oracle(plan, items, acl), plan
            checked += 1
        assert checked == 2 * 3 * 14 * 4 * 4 * 3 * 3

    def test_pages_concatenate_to_the_unpaged_result(self):
        r = random.Random(31)
        acl = AccessControlList.parse("srv-a gw1 * *\nsrv-a gw2 dev1 *")
        for _ in range(200):
            items = [
                item_at(seq, r.randrange(20), bn=r.choice(["dev1", "dev2"]), gw=r.choice(["gw1", "gw2"]))
                for seq in range(r.randint(0, 30))
            ]
            plan = QueryPlan(srv="srv-a", gw=r.choice(["gw1", "gw2", "*"]), lo=r.randrange(5))
            everything = evaluate_query(plan, items, acl)
            size = r.randint(1, 7)
            pages = [evaluate_query(replace(plan, lim=size), items, acl)]
            while len(pages[-1]) == size:
                pages.append(evaluate_query(replace(plan, lim=size, off=len(pages) * size), items, acl))
            assert [item for page in pages for item in page] == everything
            assert len(pages) == len(everything) // size + 1

    def test_order_is_time_then_device_bytes_then_arrival(self):
        acl = AccessControlList.parse("srv-a gw1 * *")
        items = [item_at(0, 20, "b"), item_at(1, 10, "b"), item_at(2, 10, "a"), item_at(3, 10, "B"), item_at(4, 10, "a")]
        plan = QueryPlan(srv="srv-a")
        assert [i.seq for i in evaluate_query(plan, items, acl)] == [3, 2, 4, 1, 0]

    @pytest.mark.parametrize(
        "lim,off,expected",
        [(None, 0, [0, 1, 2, 3, 4]), (2, 0, [0, 1]), (2, 2, [2, 3]), (10, 3, [3, 4]), (None, 5, []), (1, 9, [])],
    )
    def test_paging(self, lim, off, expected):
        acl = AccessControlList.parse("srv-a gw1 * *")
        items = [item_at(i, 100 + i) for i in range(5)]
        plan = QueryPlan(srv="srv-a", lim=lim, off=off)
        assert [i.seq for i in evaluate_query(plan, items, acl)] == expected

    def test_time_bounds_are_inclusive(self):
        acl = AccessControlList.parse("srv-a gw1 * *")
        items = [item_at(i, t) for i, t in enumerate([9, 10, 15, 20, 21])]
        assert [i.bt for i in evaluate_query(QueryPlan("srv-a", lo=10, hi=20), items, acl)] == [10, 15, 20]
        assert [i.bt for i in evaluate_query(QueryPlan("srv-a", lo=20), items, acl)] == [20, 21]

    def test_hidden_readings_need_a_device_entry(self):
        acl = AccessControlList.parse("srv-a gw1 dev1 temp")
        hidden = item_at(0, 10, names=())
        assert evaluate_query(QueryPlan("srv-a"), [hidden], acl) == [hidden]
        assert evaluate_query(QueryPlan("srv-b"), [hidden], acl) == []
        assert evaluate_query(QueryPlan("srv-a", names=frozenset({"temp"})), [hidden], acl) == []

    def test_reversed_bounds(self):
        with pytest.raises(ValidationFailure):
            QueryPlan("srv-a", lo=5, hi=4)

    def test_from_request(self, acl):
        req = SensorDataRequest(gw="gw1", srv="srv-b", bt=[5], bn=["dev1"], e=[SensorName(n="temp")], lim=3, off=1)
        plan = QueryPlan.from_request(req)
        assert plan == QueryPlan("srv-b", "gw1", 5, None, frozenset({"dev1"}), frozenset({"temp"}), 3, 1)
        store = ItemStore()
        for bt in (4, 5, 6, 7):
            store.add(dict(ITEM, bt=str(bt)))
        assert [i.bt for i in evaluate_query(req, store, acl)] == [6, 7]


class TestIngest:
    def test_stores_verified_items(self, cloud, gateway_keys):
        signed = sign_message(ITEM, gateway_keys)
        item = cloud.ingest(signed)
        assert (item.seq, item.gw, item.bn, item.bt) == (0, "gw1", "dev1", 1000)
        assert item.names == {"hum", "temp"}
        assert item.document() == signed
        assert len(cloud.items) == 1

    def test_wire_text_is_kept_verbatim(self, cloud, gateway_keys):
        wire = encode_wire(sign_message(ITEM, gateway_keys))
        assert cloud.ingest(wire).wire == wire
        assert cloud.ingest(wire.encode("utf-8")).seq == 1

    def test_tampered_item(self, cloud, gateway_keys):
        signed = sign_message(ITEM, gateway_keys)
        signed["e"][1]["sv"] = "99"
        with pytest.raises(BadSignature):
            cloud.ingest(signed)
        assert len(cloud.items) == 0

    def test_signer_must_be_the_gateway(self, cloud, service_keys):
        with pytest.raises(BadSignature):
            cloud.ingest(sign_message(ITEM, service_keys))

    def test_unknown_gateway(self, cloud, gateway_keys):
        with pytest.raises(BadSignature):
            cloud.ingest(sign_message(ITEM, gateway_keys), directory={})

    def test_invalid_item_is_refused_after_verification(self, cloud, gateway_keys):
        unsorted = dict(ITEM, e=list(reversed(ITEM["e"])))
        with pytest.raises(ValidationFailure) as info:
            cloud.ingest(sign_message(unsorted, gateway_keys))
        assert "readings not sorted" in info.value.report.rules()

    def test_only_sensor_data(self, cloud, gateway_keys):
        with pytest.raises(ValidationFailure):
            cloud.ingest(sign_message(CONFIG, gateway_keys))

    def test_configuration(self, cloud, gateway_keys):
        signed = sign_message(CONFIG, gateway_keys)
        cloud.store_configuration(signed)
        assert cloud.configurations[("gw1", "dev1")] == signed
        with pytest.raises(BadSignature):
            cloud.store_configuration(dict(signed, js="{}"))


class TestKeyRelay:
    def test_upload_download_and_public_keys(self, cloud, gateway_keys, service_keys, other_service_keys):
        key = DataKey(material=b"\x01" * 32, validity=(0, 99))
        upload = sign_message(
            build_key_upload("gw1", "srv-a", "dev1", [("hum", key)], service_keys.public_key), gateway_keys
        )
        assert cloud.relay_key_message(upload) is None
        assert cloud.keys.kids() == [key.kid]

        request = sign_message(DataKeyDownload(gw="gw1", srv="srv-a", kid=key.kid), service_keys)
        answer = cloud.relay_key_message(request)
        assert isinstance(answer, DataKeyUpload)
        assert answer.to_document() == upload

        stranger = sign_message(DataKeyDownload(gw="gw1", srv="srv-b", kid=key.kid), other_service_keys)
        with pytest.raises(NotAuthorized):
            cloud.relay_key_message(stranger)
        unknown = sign_message(DataKeyDownload(gw="gw1", srv="srv-a", kid="f" * 40), service_keys)
        with pytest.raises(UnknownKid):
            cloud.relay_key_message(unknown)

        response = cloud.relay_key_message(PublicKeyRequest(id="srv-b"))
        assert isinstance(response, PublicKeyResponse)
        assert response.key == cloud.directory.pem("srv-b")

    def test_download_must_be_signed_by_the_requester(self, cloud, other_service_keys):
        forged = sign_message(DataKeyDownload(gw="gw1", srv="srv-a", kid="f" * 40), other_service_keys)
        with pytest.raises(BadSignature):
            cloud.relay_key_message(forged)

    def test_not_a_key_message(self, cloud, gateway_keys):
        with pytest.raises(ValidationFailure):
            cloud.relay_key_message(sign_message(ITEM, gateway_keys))


class TestActuatorRouting:
    def test_without_network(self, cloud):
        with pytest.raises(UnknownDestination):
            cloud.route_actuator(ActuatorCommand(gw="gw1", srv="srv-a", bn="heater"))

    def test_forwards_to_gateway(self, deployment):
        cmd = ActuatorCommand(gw="gw1", srv="srv-a", bn="heater", seq=1, e=[])
        deployment.cloud.route_actuator(cmd)
        (delivery,) = deployment.network.log
        assert (delivery.src, delivery.dst) == ("cloud", "gw1")
        assert parse_wire(delivery.text)["pl"] == [cmd.to_document()]

    def test_unknown_gateway(self, deployment):
        with pytest.raises(UnknownDestination):
            deployment.cloud.route_actuator(ActuatorCommand(gw="gw9", srv="srv-a", bn="heater"))

    def test_only_actuator_traffic(self, cloud):
        with pytest.raises(ValidationFailure):
            cloud.route_actuator(ITEM)


class TestInbox:
    def test_refusals_are_notified(self, deployment):
        srv = deployment.service("srv-a")
        srv.send([srv.sign(DataKeyDownload(gw="gw1", srv="srv-a", kid="0" * 40))])
        deployment.network.run_until_idle()
        assert [n["error"] for n in srv.notifications] == ["unknown_kid"]
        assert deployment.cloud.diagnostics[-1]["error"] == "unknown_kid"

    def test_invalid_message_is_refused(self, deployment):
        srv = deployment.service("srv-b")
        srv.send([srv.sign({"typ": "2", "gw": "gw1", "srv": "srv-b", "lim": "0"})])
        deployment.network.run_until_idle()
        assert srv.notifications[-1]["error"] == "validation_failure"

    def test_each_rejected_transmission_is_notified_to_its_sender(self, deployment):
        gateway, network = deployment.gateway, deployment.network
        item = {"typ": "1", "gw": "gw1", "bn": "dev1", "bt": "0", "e": [{"n": "temp", "t": "0", "sv": "20"}]}
        tampered = gateway.sign(item)
        tampered["e"][0]["sv"] = "99"
        network.deliver("gw1", "cloud", encode_wire({"ver": "2", "seq": "0", "pl": [gateway.sign(item)]}))
        gateway.send([tampered])
        gateway.send([gateway.sign(dict(ITEM, e=list(reversed(ITEM["e"]))))])
        gateway.send([gateway.sign(item)])
        network.run_until_idle()
        assert [n["error"] for n in gateway.notifications] == [
            "unsupported_version",
            "bad_signature",
            "validation_failure",
        ]
        assert {n["src"] for n in gateway.notifications} == {"cloud"}
        assert len(deployment.cloud.items) == 1
        deployment.ingest_and_publish([("temp", 0, "20"), ("hum", 0, "40")])
        deployment.clock.now = 5000
        deployment.ingest_and_publish([("temp", 5000, "21")])
        results = deployment.service("srv-b").query(SensorDataRequest(gw="gw1", srv="srv-b", bt=[1000]))
        assert [r.readings() for r in results] == [[("temp", 5000, "21")]]


class TestJournal:
    def test_replay(self, tmp_path, gateway_keys, service_keys, directory, acl):
        journal = tmp_path / "cloud.journal"
        cloud = CloudNode(directory=directory, acl=acl, journal=journal)
        cloud.ingest(sign_message(ITEM, gateway_keys))
        cloud.store_configuration(sign_message(CONFIG, gateway_keys))
        key = DataKey(material=b"\x02" * 32, validity=(0, 99))
        cloud.relay_key_message(
            sign_message(build_key_upload("gw1", "srv-a", "dev1", [("hum", key)], service_keys.public_key), gateway_keys)
        )
        cloud.relay_key_message(PublicKeyRequest(id="gw1"))
        lines = journal.read_text(encoding="utf-8").splitlines()
        assert [parse_wire(line)["pl"][0]["typ"] for line in lines] == ["1", "3", "400"]

        restarted = CloudNode(directory=directory, acl=acl, journal=journal)
        assert len(restarted.items) == 1
        assert restarted.items.snapshot()[0].document() == cloud.items.snapshot()[0].document()
        assert ("gw1", "dev1") in restarted.configurations
        assert restarted.keys.kids() == [key.kid]
        assert len(journal.read_text(encoding="utf-8").splitlines()) == 3

    def test_tampered_lines_are_skipped(self, tmp_path, gateway_keys, directory, acl):
        journal = tmp_path / "cloud.journal"
        CloudNode(directory=directory, acl=acl, journal=journal).ingest(sign_message(ITEM, gateway_keys))
        journal.write_text(journal.read_text(encoding="utf-8").replace('"41"', '"42"'), encoding="utf-8")
        restarted = CloudNode(directory=directory, acl=acl, journal=journal)
        assert len(restarted.items) == 0
        assert restarted.diagnostics[0]["error"] == "bad_signature"


def test_deployments_are_reproducible():
    transcripts = []
    for _ in range(2):
        d = make_deployment(seed=9)
        d.ingest_and_publish([("hum", 0, "40"), ("temp", 0, "20")])
        transcripts.append(d.network.transcript())
    assert transcripts[0] == transcripts[1]
    assert transcripts[0]
