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

from .network import Delivery, SimNetwork
from .scenario import Scenario, ScenarioReport, demo_scenario, run_scenario
from .vectors import emit_conformance_vectors, generate_vectors

__all__ = [
    "Delivery",
    "Scenario",
    "ScenarioReport",
    "SimNetwork",
    "demo_scenario",
    "emit_conformance_vectors",
    "generate_vectors",
    "run_scenario",
]
