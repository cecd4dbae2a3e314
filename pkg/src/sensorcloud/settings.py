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

import logging
import os
from typing import Optional

import dotenv
from pydantic import BaseModel, ConfigDict
from rich.console import Console
from rich.logging import RichHandler

DAY_MS = 24 * 60 * 60 * 1000


class Settings(BaseModel):
    """Runtime configuration shared by the nodes and the CLI."""

    model_config = ConfigDict(frozen=True)

    log_level: str = "INFO"
    key_window_ms: int = DAY_MS
    cloud_id: str = "cloud"
    journal: Optional[str] = None
    allow_expired_keys: bool = False


def _flag(value: Optional[str]) -> bool:
    return value is not None and value.strip().lower() in ("1", "true", "yes", "on")


def get_settings() -> Settings:
    """A helper function to read the settings from the environment (and a .env file, if present)."""
    dotenv.load_dotenv(dotenv.find_dotenv(usecwd=True))

    window = os.getenv("SENSORCLOUD_KEY_WINDOW_MS")
    return Settings(
        log_level=os.getenv("SENSORCLOUD_LOG_LEVEL", "INFO").upper(),
        key_window_ms=int(window) if window else DAY_MS,
        cloud_id=os.getenv("SENSORCLOUD_CLOUD_ID", "cloud"),
        journal=os.getenv("SENSORCLOUD_JOURNAL") or None,
        allow_expired_keys=_flag(os.getenv("SENSORCLOUD_ALLOW_EXPIRED_KEYS")),
    )


def configure_logging(level: str = "INFO") -> logging.Logger:
    """Attach a rich handler (on stderr) to the package logger. Safe to call more than once."""
    logger = logging.getLogger("sensorcloud")
    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
    return logger
