"""
shared package

Constants, logging, error types, report payloads and scenario parsing shared
by the library and the runner.
"""

from .exceptions import (
    InvarianceError,
    ScenarioError,
)
from .logger import get_logger

__all__ = [
    "InvarianceError",
    "ScenarioError",
    "get_logger",
]
