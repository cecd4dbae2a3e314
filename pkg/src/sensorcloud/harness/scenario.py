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

"""Declarative scenarios: nodes, an ACL, timed events and assertions, run on a :class:`SimNetwork`.

A scenario file is a JSON object::

    {"seed": "7", "key_window_ms": 86400000,
     "gateways": [{"id": "gw1", "actuators": {"heater": {"power": "off"}}}],
     "services": [{"id": "srv-a"}],
     "acl": ["srv-a gw1 dev1 hum sensitive"],
     "events": [{"at": 0, "do": "ingest", "gw": "gw1", "bn": "dev1", "n": "hum", "value": "40"}],
     "assertions": [{"kind": "items", "label": "q1", "count": 1}]}

Event kinds: ``ingest``, ``rotate``, ``flush``, ``distribute``, ``configure``, ``query``,
``command``, ``grant`` and ``revoke``. Assertion kinds: ``items``, ``values``, ``encrypted``,
``actuator``, ``pending``, ``responses``, ``diagnostics`` and ``deliveries``.
"""

import importlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..acl import AccessControlList, AclEntry
from ..actuators import ActuatorRegistry
from ..codec import parse_wire
from ..errors import AssertionFailed, ScenarioError, SensorCloudError
from ..keys import PublicKeyDirectory
from ..messages import WireInt
from ..nodes import CloudNode, GatewayNode, QueryResult, ServiceNode
from ..security.primitives import CounterNonceSource, SigningKeyPair
from ..settings import DAY_MS
from .network import SimNetwork
from .vectors import seeded_rng

logger = logging.getLogger(__name__)

EventKind = Literal[
    "ingest", "rotate", "flush", "distribute", "configure", "query", "command", "grant", "revoke"
]
AssertionKind = Literal[
    "items", "values", "encrypted", "actuator", "pending", "responses", "diagnostics", "deliveries"
]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GatewaySpec(_Spec):
    id: str
    actuators: Dict[str, Dict[str, str]] = Field(default_factory=dict)
    function_packages: List[str] = Field(default_factory=lambda: ["thermostat"])
    deny_list: List[str] = Field(default_factory=list)


class ServiceSpec(_Spec):
    id: str


class Event(_Spec):
    at: WireInt
    do: EventKind
    gw: Optional[str] = None
    srv: Optional[str] = None
    bn: Optional[str] = None
    n: Optional[str] = None
    t: Optional[WireInt] = None
    value: Optional[str] = None
    js: Optional[str] = None
    bt: Optional[List[WireInt]] = None
    bns: Optional[List[str]] = None
    names: Optional[List[str]] = None
    lim: Optional[WireInt] = None
    off: Optional[WireInt] = None
    label: Optional[str] = None
    fn: Optional[str] = None
    params: Dict[str, str] = Field(default_factory=dict)
    expect_response: bool = True
    entry: Optional[str] = None


class Assertion(_Spec):
    kind: AssertionKind
    label: Optional[str] = None
    node: Optional[str] = None
    gw: Optional[str] = None
    bn: Optional[str] = None
    n: Optional[str] = None
    t: Optional[WireInt] = None
    value: Optional[str] = None
    parameters: Dict[str, str] = Field(default_factory=dict)
    code: Optional[str] = None
    typ: Optional[str] = None
    count: Optional[WireInt] = None


class Scenario(_Spec):
    seed: WireInt = 0
    key_window_ms: WireInt = DAY_MS
    cloud_id: str = "cloud"
    gateways: List[GatewaySpec] = Field(default_factory=list)
    services: List[ServiceSpec] = Field(default_factory=list)
    acl: List[str] = Field(default_factory=list)
    events: List[Event] = Field(default_factory=list)
    assertions: List[Assertion] = Field(default_factory=list)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        return cls.parse_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def parse_text(cls, text: str) -> "Scenario":
        try:
            return cls.model_validate(parse_wire(text))
        except ValidationError as err:
            raise ScenarioError(f"invalid scenario: {err}") from err


class AssertionOutcome(BaseModel):
    index: int
    kind: str
    passed: bool
    detail: str


class ScenarioReport(BaseModel):
    seed: int
    deliveries: List[Dict[str, Any]] = Field(default_factory=list)
    queries: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict)
    nodes: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    assertions: List[AssertionOutcome] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(a.passed for a in self.assertions)

    def first_failure(self) -> Optional[AssertionOutcome]:
        return next((a for a in self.assertions if not a.passed), None)


class SimClock:
    """Simulated milliseconds; the runner advances it to each event's ``at``."""

    def __init__(self, now: int = 0):
        self.now = now

    def __call__(self) -> int:
        return self.now


class ScenarioRunner:
    def __init__(self, scenario: Scenario, journal: Optional[Union[str, Path]] = None):
        self.scenario = scenario
        self.clock = SimClock()
        self.network = SimNetwork()
        self.acl = AccessControlList.parse("\n".join(scenario.acl), source="scenario")
        self.directory = PublicKeyDirectory()
        self.gateways: Dict[str, GatewayNode] = {}
        self.services: Dict[str, ServiceNode] = {}
        self.queries: Dict[str, List[QueryResult]] = {}
        self.__rng = seeded_rng(scenario.seed)

        for spec in scenario.gateways:
            keypair = self.__provision(spec.id)
            self.gateways[spec.id] = GatewayNode(
                spec.id,
                keypair,
                self.acl,
                self.network,
                clock=self.clock,
                key_window_ms=scenario.key_window_ms,
                rng=self.__rng,
                nonce_source=CounterNonceSource(prefix=self.__rng(4)),
                actuators=self.__actuators(spec),
                cloud_id=scenario.cloud_id,
            )
        for spec in scenario.services:
            keypair = self.__provision(spec.id)
            self.services[spec.id] = ServiceNode(spec.id, keypair, self.network, cloud_id=scenario.cloud_id)
        # the directory must be complete before a journal is replayed
        self.cloud = CloudNode(scenario.cloud_id, self.directory, self.acl, self.network, journal)

    def __provision(self, entity: str) -> SigningKeyPair:
        if entity in self.directory or entity == self.scenario.cloud_id:
            raise ScenarioError(f"entity id {entity!r} is used twice")
        keypair = SigningKeyPair.generate(entity, self.__rng)
        self.directory.register(entity, keypair.public_key)
        return keypair

    @staticmethod
    def __actuators(spec: GatewaySpec) -> ActuatorRegistry:
        packages = []
        for name in spec.function_packages:
            try:
                packages.append(importlib.import_module(f"sensorcloud.actuators.{name}"))
            except ImportError as err:
                raise ScenarioError(f"unknown actuator package {name!r}") from err
        return ActuatorRegistry(spec.actuators, packages, deny_list=spec.deny_list)

    def play(self):
        """Apply every event in order, draining the network after each one."""
        last = 0
        for i, event in enumerate(self.scenario.events):
            if event.at < last:
                raise ScenarioError(f"event {i} at {event.at} precedes the previous event at {last}")
            last = event.at
            self.clock.now = event.at
            self.apply(event)
            self.network.run_until_idle()

    def run(self, raise_on_failure: bool = True) -> ScenarioReport:
        self.play()
        report = ScenarioReport(
            seed=self.scenario.seed,
            deliveries=[d.as_dict() for d in self.network.log],
            queries={label: [r.document for r in results] for label, results in self.queries.items()},
            nodes=self.node_states(),
            assertions=[self.check(i, a) for i, a in enumerate(self.scenario.assertions)],
        )
        failure = report.first_failure()
        if failure is not None:
            logger.warning(f"Assertion {failure.index} ({failure.kind}) failed: {failure.detail}")
            if raise_on_failure:
                raise AssertionFailed(
                    f"assertion {failure.index} ({failure.kind}): {failure.detail}", index=failure.index
                )
        return report

    # events

    def apply(self, event: Event):
        logger.debug(f"t={event.at}: {event.do}")
        if event.do == "ingest":
            self.gateway(event.gw).ingest_reading(
                _need(event, "bn"), _need(event, "n"), event.at if event.t is None else event.t, _need(event, "value")
            )
        elif event.do == "rotate":
            self.gateway(event.gw).rotate_keys(event.at)
        elif event.do == "flush":
            gateway = self.gateway(event.gw)
            if event.bn is None:
                gateway.flush_all()
            else:
                gateway.flush_device(event.bn)
        elif event.do == "distribute":
            self.gateway(event.gw).distribute_keys()
        elif event.do == "configure":
            self.gateway(event.gw).emit_configuration(_need(event, "bn"), _need(event, "js"))
        elif event.do == "query":
            service = self.service(event.srv)
            plan = service.request(
                _need(event, "gw"), event.bt, event.bns, event.names, event.lim, event.off
            )
            self.queries[event.label or f"query-{len(self.queries)}"] = service.query(plan)
        elif event.do == "command":
            self.service(event.srv).send_command(
                _need(event, "gw"), _need(event, "bn"), event.params, event.fn, event.expect_response
            )
        elif event.do == "grant":
            self.acl.add(_entry(event))
        elif event.do == "revoke":
            self.acl.remove(_entry(event))

    def gateway(self, gw: Optional[str]) -> GatewayNode:
        if gw not in self.gateways:
            raise ScenarioError(f"unknown gateway {gw!r}")
        return self.gateways[gw]

    def service(self, srv: Optional[str]) -> ServiceNode:
        if srv not in self.services:
            raise ScenarioError(f"unknown service {srv!r}")
        return self.services[srv]

    # assertions

    def check(self, index: int, a: Assertion) -> AssertionOutcome:
        try:
            passed, detail = getattr(self, f"_check_{a.kind}")(a)
        except (SensorCloudError, KeyError) as err:
            passed, detail = False, str(err)
        return AssertionOutcome(index=index, kind=a.kind, passed=passed, detail=detail)

    def __results(self, a: Assertion) -> List[QueryResult]:
        if a.label not in self.queries:
            raise ScenarioError(f"no query labelled {a.label!r}")
        return self.queries[a.label]

    def _check_items(self, a: Assertion):
        found = len(self.__results(a))
        return found == a.count, f"{found} item(s), expected {a.count}"

    def _check_values(self, a: Assertion):
        for result in self.__results(a):
            if a.bn is not None and result.bn != a.bn:
                continue
            for n, t, value in result.readings():
                if n == a.n and (a.t is None or t == a.t):
                    return value == a.value, f"{n}@{t} is {value!r}, expected {a.value!r}"
        return False, f"no reading {a.n}@{a.t} in {a.label}"

    def _check_encrypted(self, a: Assertion):
        found = sum(r.encrypted_count() for r in self.__results(a))
        return found == a.count, f"{found} encrypted scope(s), expected {a.count}"

    def _check_actuator(self, a: Assertion):
        gateway = self.gateways[a.gw]
        parameters = gateway.actuators.actuator(a.bn).parameters
        differing = {k: parameters.get(k) for k, v in a.parameters.items() if parameters.get(k) != v}
        return not differing, f"parameters {parameters}" if differing else "parameters match"

    def _check_pending(self, a: Assertion):
        found = len(self.services[a.node].show_pending())
        return found == a.count, f"{found} pending command(s), expected {a.count}"

    def _check_responses(self, a: Assertion):
        responses = [resp for _, resp in self.services[a.node].responses]
        if a.code is not None:
            responses = [r for r in responses if any(p.n == "err" and p.sv == a.code for p in r.e)]
        return len(responses) == a.count, f"{len(responses)} response(s), expected {a.count}"

    def _check_diagnostics(self, a: Assertion):
        node = self.network.node(a.node)
        found = sum(1 for d in node.diagnostics if a.code is None or d.get("error") == a.code)
        return found == a.count, f"{found} diagnostic(s) {a.code or ''}, expected {a.count}"

    def _check_deliveries(self, a: Assertion):
        found = self.network.count(typ=a.typ, dst=a.node)
        return found == a.count, f"{found} message(s) of type {a.typ}, expected {a.count}"

    # report

    def node_states(self) -> Dict[str, Dict[str, Any]]:
        states: Dict[str, Dict[str, Any]] = {
            self.cloud.id: {
                "items": len(self.cloud.items),
                "wrapped_keys": len(self.cloud.keys),
                "configurations": len(self.cloud.configurations),
                "diagnostics": self.cloud.diagnostics,
            }
        }
        for gw, gateway in self.gateways.items():
            states[gw] = {
                "buffered": gateway.buffered(),
                "keys": gateway.keys.kids(),
                "actuators": {bn: gateway.actuators.actuator(bn).parameters for bn in gateway.actuators.actuators()},
                "diagnostics": gateway.diagnostics,
            }
        for srv, service in self.services.items():
            states[srv] = {
                "pending": sorted(service.show_pending()),
                "responses": len(service.responses),
                "notifications": service.notifications,
                "diagnostics": service.diagnostics,
            }
        return states


def run_scenario(
    scenario: Scenario, raise_on_failure: bool = True, journal: Optional[Union[str, Path]] = None
) -> ScenarioReport:
    """Run ``scenario`` deterministically; raises :class:`AssertionFailed` on the first failing assertion."""
    try:
        return ScenarioRunner(scenario, journal).run(raise_on_failure)
    except (AssertionFailed, ScenarioError):
        raise
    except SensorCloudError as err:
        raise ScenarioError(f"scenario aborted: {err.code}: {err.message}") from err


def _need(event: Event, name: str) -> Any:
    value = getattr(event, name)
    if value is None:
        raise ScenarioError(f"event {event.do!r} at {event.at} needs {name!r}")
    return value


def _entry(event: Event) -> AclEntry:
    acl = AccessControlList.parse(_need(event, "entry"), source="event")
    if len(acl) != 1:
        raise ScenarioError("grant and revoke take exactly one ACL line")
    return acl.entries[0]


def demo_scenario(seed: int = 7) -> Scenario:
    """One gateway with a plain and a sensitive sensor, one authorized and one restricted service."""
    return Scenario(
        seed=seed,
        gateways=[GatewaySpec(id="gw1", actuators={"heater": {"power": "off", "target": "20"}})],
        services=[ServiceSpec(id="srv-a"), ServiceSpec(id="srv-b")],
        acl=[
            "srv-a gw1 dev1 hum sensitive",
            "srv-a gw1 dev1 temp plain",
            "srv-a gw1 heater * plain",
            "srv-b gw1 dev1 temp plain",
        ],
        events=[
            Event(at=0, do="ingest", gw="gw1", bn="dev1", n="temp", value="21.5"),
            Event(at=0, do="ingest", gw="gw1", bn="dev1", n="hum", value="40"),
            Event(at=60_000, do="ingest", gw="gw1", bn="dev1", n="temp", value="21.7"),
            Event(at=60_000, do="rotate", gw="gw1"),
            Event(at=60_000, do="flush", gw="gw1", bn="dev1"),
            Event(at=60_000, do="distribute", gw="gw1"),
            Event(at=120_000, do="query", srv="srv-a", gw="gw1", label="authorized"),
            Event(at=120_000, do="query", srv="srv-b", gw="gw1", label="restricted"),
            Event(at=180_000, do="command", srv="srv-a", gw="gw1", bn="heater", fn="set_target", params={"target": "22"}),
            Event(at=180_000, do="command", srv="srv-a", gw="gw1", bn="heater", params={"power": "off"}),
            Event(at=180_000, do="command", srv="srv-b", gw="gw1", bn="heater", params={"power": "on"}),
        ],
        assertions=[
            Assertion(kind="items", label="authorized", count=1),
            Assertion(kind="values", label="authorized", bn="dev1", n="hum", t=0, value="40"),
            Assertion(kind="values", label="authorized", bn="dev1", n="temp", t=60_000, value="21.7"),
            Assertion(kind="encrypted", label="authorized", count=0),
            Assertion(kind="items", label="restricted", count=1),
            Assertion(kind="values", label="restricted", bn="dev1", n="temp", t=0, value="21.5"),
            Assertion(kind="encrypted", label="restricted", count=1),
            Assertion(kind="actuator", gw="gw1", bn="heater", parameters={"target": "22", "power": "off"}),
            Assertion(kind="pending", node="srv-a", count=0),
            Assertion(kind="responses", node="srv-a", count=2),
            Assertion(kind="responses", node="srv-b", code="unauthorized", count=1),
            Assertion(kind="deliveries", typ="401", count=2),
            Assertion(kind="diagnostics", node="srv-b", code="key_download_failed", count=1),
        ],
    )
