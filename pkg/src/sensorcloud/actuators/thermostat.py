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

from typing import Dict

from . import Actuator, actuator_function

DEFAULTS = {"power": "off", "target": "20", "mode": "auto", "boost": "0"}
MIN_TARGET = 5
MAX_TARGET = 30


def within_bounds(target: float) -> tuple:
    """
    Check if the given set point is within the thermostat's range.

    :param target: The requested temperature in degrees Celsius.
    """
    if MIN_TARGET <= target <= MAX_TARGET:
        return True, "Target is within bounds."
    return False, f"{target} is out of bounds. Range is [{MIN_TARGET}, {MAX_TARGET}]."


@actuator_function
def set_target(actuator: Actuator, target: str) -> Dict[str, str]:
    """Set the temperature set point and switch the thermostat on."""
    try:
        value = float(target)
    except ValueError:
        raise ValueError(f"target must be a number, got {target!r}") from None
    in_bounds, message = within_bounds(value)
    if not in_bounds:
        raise ValueError(message)
    actuator.set({"target": target, "power": "on"})
    return {"target": target}


@actuator_function
def boost(actuator: Actuator, minutes: str = "30") -> Dict[str, str]:
    """Run at full power for a number of minutes."""
    if not minutes.isdigit() or int(minutes) > 240:
        raise ValueError("minutes must be an integer between 0 and 240")
    actuator.set({"boost": minutes, "power": "on" if int(minutes) else actuator.get("power", "off")})
    return {"boost": minutes}


@actuator_function
def status(actuator: Actuator) -> Dict[str, str]:
    return actuator.parameters


@actuator_function(name="factory_reset")
def reset(actuator: Actuator) -> Dict[str, str]:
    actuator.set(DEFAULTS)
    return {"mode": DEFAULTS["mode"]}
