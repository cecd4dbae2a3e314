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
from pydantic import TypeAdapter, ValidationError

from sensorcloud.errors import (
    DuplicateReading,
    EmptyBatch,
    InvalidSequence,
    UnknownMessageType,
    UnsupportedVersion,
    ValidationFailure,
)
from sensorcloud.messages import (
    ActuatorCommand,
    MessageType,
    Parameter,
    PublicKeyRequest,
    SensorDataMessage,
    SensorReading,
    TransmissionHeader,
    WireInt,
    batch,
    check_header,
    check_version,
    message_type_of,
    parse_message,
    sort_readings,
    unbatch,
)

from .generators import random_message


def test_sensor_data_renders_in_layout_order():
    msg = SensorDataMessage(
        gw="gw1",
        bn="dev1",
        bt=1_700_000_000_000,
        e=[SensorReading(n="hum", t=0, sv="41"), SensorReading(n="temp", t=60_000, sv="21.7")],
    )
    doc = msg.to_document()
    assert list(doc) == ["typ", "gw", "bn", "bt", "e"]
    assert doc["typ"] == "1"
    assert doc["bt"] == "1700000000000"
    assert doc["e"][1] == {"n": "temp", "t": "60000", "sv": "21.7"}


def test_optional_members_are_omitted():
    doc = ActuatorCommand(gw="gw1", srv="srv-a", bn="heater", e=[Parameter(n="power", sv="on")]).to_document()
    assert list(doc) == ["typ", "gw", "srv", "bn", "e"]


def test_parse_message_dispatches_on_typ():
    r = random.Random(5)
    for typ in MessageType:
        msg = random_message(r, typ)
        parsed = parse_message(msg.to_document())
        assert type(parsed) is type(msg)
        assert parsed.to_document() == msg.to_document()


def test_unknown_members_survive_before_readings_and_sig_stays_last():
    doc = {
        "typ": "1",
        "gw": "gw1",
        "bn": "dev1",
        "bt": "0",
        "ref": "calibration-7",
        "e": [{"n": "temp", "sv": "20"}],
        "sig": {"signatures": []},
    }
    rendered = parse_message(doc).to_document()
    assert list(rendered) == ["typ", "gw", "bn", "bt", "ref", "e", "sig"]
    assert parse_message(doc).extras["ref"] == "calibration-7"


@pytest.mark.parametrize("typ", ["0", "6", "399", "404", "x", "-1"])
def test_unknown_type(typ):
    with pytest.raises(UnknownMessageType):
        message_type_of({"typ": typ})


def test_bad_field_is_a_validation_failure():
    with pytest.raises(ValidationFailure):
        parse_message({"typ": "1", "gw": "gw1", "bn": "dev1", "bt": "01", "e": []})
    with pytest.raises(ValidationFailure):
        parse_message({"typ": "402"})


class TestWireInt:
    adapter = TypeAdapter(WireInt)

    @pytest.mark.parametrize("value,expected", [("0", 0), ("12", 12), (7, 7), (str(2**63), 2**63)])
    def test_accepts(self, value, expected):
        assert self.adapter.validate_python(value) == expected
        assert self.adapter.dump_python(expected) == str(expected)

    @pytest.mark.parametrize("value", ["012", "-1", "1.0", "", " 1", "١", True, -3, 1.5])
    def test_rejects(self, value):
        with pytest.raises(ValidationError):
            self.adapter.validate_python(value)


class TestBatching:
    def test_batch_renders_header(self):
        header = batch([PublicKeyRequest(id="gw1"), {"typ": "402", "id": "srv-a"}])
        assert header.to_document() == {
            "ver": "1",
            "seq": "0",
            "pl": [{"typ": "402", "id": "gw1"}, {"typ": "402", "id": "srv-a"}],
        }

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            batch([])

    def test_sequence_number_is_unused(self):
        with pytest.raises(InvalidSequence):
            batch([PublicKeyRequest(id="gw1")], seq=1)

    def test_unbatch_parses_every_message(self):
        r = random.Random(9)
        messages = [random_message(r) for _ in range(20)]
        parsed = unbatch(batch(messages).to_document())
        assert [m.to_document() for m in parsed] == [m.to_document() for m in messages]

    @pytest.mark.parametrize("ver", ["2", "0", "01", None, 1.0])
    def test_version_check(self, ver):
        with pytest.raises(UnsupportedVersion):
            check_version({"ver": ver, "seq": "0", "pl": []})

    def test_unbatch_rejects_other_versions(self):
        with pytest.raises(UnsupportedVersion):
            unbatch({"ver": "2", "seq": "0", "pl": [{"typ": "402", "id": "gw1"}]})

    @pytest.mark.parametrize("seq", ["5", "1", 3])
    def test_unbatch_rejects_nonzero_sequence_numbers(self, seq):
        with pytest.raises(InvalidSequence) as info:
            unbatch({"ver": "1", "seq": seq, "pl": [{"typ": "402", "id": "gw1"}]})
        assert info.value.to_dict()["seq"] == int(seq)

    def test_unbatch_rejects_an_empty_payload(self):
        with pytest.raises(EmptyBatch):
            unbatch({"ver": "1", "seq": "0", "pl": []})
        with pytest.raises(EmptyBatch):
            check_header(TransmissionHeader(pl=[]))

    def test_version_is_checked_before_the_rest_of_the_header(self):
        with pytest.raises(UnsupportedVersion):
            check_header({"ver": "2", "seq": "9", "pl": []})

    def test_header_accepts_plain_integers(self):
        header = TransmissionHeader.from_document({"ver": 1, "seq": 0, "pl": [{"typ": "402", "id": "x"}]})
        assert header.to_document()["ver"] == "1"


class TestReadings:
    def test_sorted_bytewise_then_by_offset(self):
        readings = [
            SensorReading(n="ä", sv="1"),
            SensorReading(n="b", t=5, sv="2"),
            SensorReading(n="b", sv="3"),
            SensorReading(n="Z", sv="4"),
            SensorReading(n="a", t=10, sv="5"),
        ]
        ordered = [(r.n, r.offset) for r in sort_readings(readings)]
        assert ordered == [("Z", 0), ("a", 10), ("b", 0), ("b", 5), ("ä", 0)]

    def test_absent_offset_equals_zero(self):
        with pytest.raises(DuplicateReading):
            sort_readings([SensorReading(n="temp", sv="1"), SensorReading(n="temp", t=0, sv="2")])

    def test_offset_defaults_to_base_time(self):
        assert SensorReading(n="temp", sv="1").offset == 0
        assert SensorReading(n="temp", t=30, sv="1").offset == 30
