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

"""Simulated actuators and the functions an actuator command's ``fn`` may name."""

import inspect
import logging
import threading
from types import ModuleType
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from ..errors import InvalidParameters, UnknownActuator, UnknownFunction

logger = logging.getLogger(__name__)

ACTUATOR_FUNCTION = "__actuator_function__"

ActuatorFunction = Callable[..., Optional[Mapping[str, str]]]


def actuator_function(func: Optional[Callable] = None, *, name: Optional[str] = None):
    """
    Mark a function as remotely callable through the ``fn`` member of an actuator command.

    The function receives the target :class:`Actuator` first and the command's parameters as
    keyword arguments (all strings). It returns a mapping of result names to values, or None.
    """

    def decorator(f):
        setattr(f, ACTUATOR_FUNCTION, name or f.__name__)
        return f

    return decorator(func) if func is not None else decorator


class Actuator:
    """A parameter table (name -> string value) standing in for a device."""

    def __init__(self, bn: str, parameters: Optional[Mapping[str, str]] = None):
        self.bn = bn
        self.__parameters: Dict[str, str] = dict(parameters or {})
        self.__lock = threading.Lock()

    @property
    def parameters(self) -> Dict[str, str]:
        with self.__lock:
            return dict(self.__parameters)

    def get(self, n: str, default: Optional[str] = None) -> Optional[str]:
        with self.__lock:
            return self.__parameters.get(n, default)

    def set(self, params: Mapping[str, str]):
        with self.__lock:
            self.__parameters.update({str(k): str(v) for k, v in params.items()})
        logger.debug(f"Actuator {self.bn} set {dict(params)}")


class ActuatorRegistry:
    def __init__(
        self,
        actuators: Optional[Mapping[str, Mapping[str, str]]] = None,
        function_packages: Optional[Sequence[ModuleType]] = None,
        deny_list: Optional[List[str]] = None,
    ):
        self.__actuators: Dict[str, Actuator] = {}
        self.__functions: Dict[str, ActuatorFunction] = {}
        self.__deny_list = set(deny_list or [])

        for bn, parameters in (actuators or {}).items():
            self.add_actuator(bn, parameters)
        self.add_packages(function_packages or [])

    def add_actuator(self, bn: str, parameters: Optional[Mapping[str, str]] = None) -> Actuator:
        actuator = Actuator(bn, parameters)
        self.__actuators[bn] = actuator
        return actuator

    def actuator(self, bn: str) -> Actuator:
        try:
            return self.__actuators[bn]
        except KeyError:
            raise UnknownActuator(f"no actuator {bn!r} at this gateway", bn=bn) from None

    def actuators(self) -> List[str]:
        return sorted(self.__actuators)

    def functions(self) -> List[str]:
        """Names that commands may invoke; deny-listed functions are not among them."""
        return sorted(n for n in self.__functions if n not in self.__deny_list)

    def add_packages(self, packages: Sequence[ModuleType], deny_list: Optional[List[str]] = None):
        """
        Add the actuator functions of each package.

        :param packages: modules whose public members are scanned for ``@actuator_function``.
        :param deny_list: function names to withhold from remote invocation.
        """
        self.__deny_list.update(deny_list or [])
        for package in packages:
            self.__iterative_add(package)

    def add_functions(self, functions: List[ActuatorFunction]):
        for f in functions:
            self.__add_function(f)

    def __add_function(self, f):
        name = getattr(f, ACTUATOR_FUNCTION, None)
        if name is not None and callable(f):
            self.__functions[name] = f

    def __iterative_add(self, package: ModuleType):
        for member_name in dir(package):
            if not member_name.startswith("_"):
                self.__add_function(getattr(package, member_name))

    def call(self, bn: str, fn: str, params: Mapping[str, str]) -> List[Tuple[str, str]]:
        """Invoke ``fn`` on actuator ``bn``; returns the result as ``(n, sv)`` pairs."""
        actuator = self.actuator(bn)
        func = self.__functions.get(fn)
        if func is None or fn in self.__deny_list:
            raise UnknownFunction(f"no callable function {fn!r}", fn=fn)

        signature = inspect.signature(func)
        try:
            signature.bind(actuator, **params)
        except TypeError as err:
            raise InvalidParameters(f"{fn}: {err}", fn=fn) from err
        try:
            result = func(actuator, **params)
        except ValueError as err:
            raise InvalidParameters(f"{fn}: {err}", fn=fn) from err
        return [(str(k), str(v)) for k, v in (result or {}).items()]
