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

"""Shared fixtures: seeded key material, an ACL and a wired-up deployment on a SimNetwork."""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

import pytest

from sensorcloud.acl import AccessControlList
from sensorcloud.actuators import ActuatorRegistry
from sensorcloud.actuators import thermostat
from sensorcloud.harness.network import SimNetwork
from sensorcloud.harness.scenario import SimClock
from sensorcloud.harness.vectors import seeded_rng
from sensorcloud.keys import PublicKeyDirectory
from sensorcloud.nodes import CloudNode, GatewayNode, ServiceNode
from sensorcloud.security.primitives import CounterNonceSource, DataKey, SigningKeyPair
from sensorcloud.settings import DAY_MS

ACL_TEXT = """
# data owner of gw1
srv-a gw1 dev1 hum sensitive
srv-a gw1 dev1 temp plain
srv-a gw1 heater * plain
srv-b gw1 dev1 temp plain
"""


@dataclass
class Deployment:
    network: SimNetwork
    clock: SimClock
    acl: AccessControlList
    directory: PublicKeyDirectory
    cloud: CloudNode
    gateway: GatewayNode
    services: Dict[str, ServiceNode]

    def service(self, srv: str) -> ServiceNode:
        return self.services[srv]

    def ingest_and_publish(self, readings: Sequence[tuple], bn: str = "dev1"):
        """Buffer ``(n, t, value)`` readings, create keys, flush and distribute them."""
        for n, t, value in readings:
            self.gateway.ingest_reading(bn, n, t, value)
        self.gateway.rotate_keys(self.clock())
        item = self.gateway.flush_device(bn)
        self.gateway.distribute_keys()
        self.network.run_until_idle()
        return item


def make_deployment(
    acl_text: str = ACL_TEXT,
    seed: int = 0,
    services: Sequence[str] = ("srv-a", "srv-b"),
    actuators: Optional[Mapping[str, Mapping[str, str]]] = None,
    key_window_ms: int = DAY_MS,
    journal=None,
) -> Deployment:
    rng = seeded_rng(seed)
    network = SimNetwork()
    clock = SimClock()
    acl = AccessControlList.parse(acl_text)
    directory = PublicKeyDirectory()

    gateway_keys = SigningKeyPair.generate("gw1", rng)
    directory.register("gw1", gateway_keys.public_key)
    registry = ActuatorRegistry(
        actuators if actuators is not None else {"heater": dict(thermostat.DEFAULTS)}, [thermostat]
    )
    gateway = GatewayNode(
        "gw1",
        gateway_keys,
        acl,
        network,
        clock=clock,
        key_window_ms=key_window_ms,
        rng=rng,
        nonce_source=CounterNonceSource(prefix=b"gw01"),
        actuators=registry,
    )
    nodes = {}
    for srv in services:
        keypair = SigningKeyPair.generate(srv, rng)
        directory.register(srv, keypair.public_key)
        nodes[srv] = ServiceNode(srv, keypair, network)
    cloud = CloudNode("cloud", directory, acl, network, journal)
    return Deployment(network, clock, acl, directory, cloud, gateway, nodes)


@pytest.fixture
def rng():
    return seeded_rng(1234)


@pytest.fixture
def gateway_keys(rng):
    return SigningKeyPair.generate("gw1", rng)


@pytest.fixture
def service_keys(rng):
    return SigningKeyPair.generate("srv-a", rng)


@pytest.fixture
def other_service_keys(rng):
    return SigningKeyPair.generate("srv-b", rng)


@pytest.fixture
def directory(gateway_keys, service_keys, other_service_keys):
    return PublicKeyDirectory(
        {
            "gw1": gateway_keys.public_key,
            "srv-a": service_keys.public_key,
            "srv-b": other_service_keys.public_key,
        }
    )


@pytest.fixture
def data_key(rng):
    return DataKey.generate((0, DAY_MS - 1), rng)


@pytest.fixture
def nonces():
    return CounterNonceSource(prefix=b"test")


@pytest.fixture
def acl():
    return AccessControlList.parse(ACL_TEXT)


@pytest.fixture
def deployment():
    return make_deployment()
