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

import pathlib

from setuptools import find_packages, setup

here = pathlib.Path(__file__).parent.resolve()
long_description = (here / "README.md").read_text(encoding="utf-8")
sensorcloud_packages = find_packages(where="src")

setup(
    name="sensorcloud-protocol",
    version="1.0.0",
    license="Apache 2.0",
    description="SensorCloud: end-to-end encrypted and signed sensor data between gateways, cloud and services",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Environment :: Console",
        "Intended Audience :: Developers",
        "License :: OSI Approved :: Apache Software License",
        "Natural Language :: English",
        "Operating System :: Unix",
        "Programming Language :: Python :: 3",
        "Topic :: Security :: Cryptography",
        "Topic :: System :: Networking",
    ],
    keywords="IoT, SenML, JOSE, JWE, JWS, Sensor Networks, Cloud, Encryption",
    package_dir={"": "src"},
    packages=sensorcloud_packages,
    python_requires=">=3.9, <4",
    install_requires=[
        "PyYAML>=6.0.1",
        "python-dotenv>=1.0.1",
        "pydantic>=2.0",
        "rich",
        "numpy>=1.21.2",
        "cryptography>=44.0",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": [
            "sensorcloud=sensorcloud.harness.cli:main",
        ],
    },
)
