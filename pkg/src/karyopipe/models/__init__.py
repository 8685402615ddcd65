"""Model-service contracts: wire formats, classical stubs, ground-truth oracle."""

from .oracle import ORACLE_MODEL_VERSION, OracleBackends, OracleNoise
from .stubs import (
    STUB_MODEL_VERSION,
    StubBackends,
    principal_axis_angle,
    stub_classify,
    stub_instances,
    stub_semseg,
)

__all__ = [
    "ORACLE_MODEL_VERSION",
    "OracleBackends",
    "OracleNoise",
    "STUB_MODEL_VERSION",
    "StubBackends",
    "principal_axis_angle",
    "stub_classify",
    "stub_instances",
    "stub_semseg",
]
