"""Decentralized sequential estimation with level-triggered sampling."""

from .calibrate import CtildeCalibration, calibrate_Ctilde
from .fast import FastResult, SensorArrays, run_decentralized_blocks
from .fusion import (
    DEFAULT_EPSILON,
    FusionState,
    fc_on_d_bit,
    fc_on_event,
    fc_on_v_bit,
    trace_decrement,
)
from .network import (
    IncrementStats,
    NetworkStats,
    correlation_stats,
    default_sensor_config,
    equicorrelated_stats,
    equicorrelation,
    gamma_threshold,
    increment_stats,
    kappa_equicorrelated,
)
from .protocol import (
    D_EVENT,
    V_EVENT,
    ChannelEvent,
    SensorConfig,
    SensorState,
    decode_overshoot,
    encode_overshoot,
    sensor_step,
)
from .simulate import (
    EVENT_LOG_HEADER,
    DecentralizedResult,
    read_event_log,
    replay,
    run_decentralized,
    write_event_log,
)

__all__ = [
    "ChannelEvent", "CtildeCalibration", "D_EVENT", "DEFAULT_EPSILON", "DecentralizedResult",
    "EVENT_LOG_HEADER", "FastResult", "FusionState", "IncrementStats", "NetworkStats",
    "SensorArrays", "SensorConfig", "SensorState", "V_EVENT", "calibrate_Ctilde",
    "correlation_stats", "decode_overshoot", "default_sensor_config", "encode_overshoot",
    "equicorrelated_stats", "equicorrelation", "fc_on_d_bit", "fc_on_event", "fc_on_v_bit",
    "gamma_threshold", "increment_stats", "kappa_equicorrelated", "read_event_log", "replay",
    "run_decentralized", "run_decentralized_blocks", "sensor_step", "trace_decrement",
    "write_event_log",
]
