"""znsim: deterministic discrete-event simulation of a zoned-namespace SSD
with a measurement-calibrated timing profile, plus a workload harness."""

from .device import Admission, DeviceGeometry, Zone, ZnsDevice
from .engine import Completion, ConfigError, Simulator, Trace, run_sim
from .hoststack import MergeScheduler, StackConfig, stack_tax
from .profile import (DeviceProfile, JitterSpec, OccupancyModel,
                      SaturationModel, StationSpec, fit_occupancy_model,
                      load_builtin, load_device_file)
from .report import build_report, percentile, write_report, write_trace_csv
from .workload import (GenOp, Job, JobSpec, ParseError, TokenBucket,
                       ValidationError, generate, load_jobspec,
                       parse_jobspec)

__all__ = [
    "Admission", "Completion", "ConfigError", "DeviceGeometry",
    "DeviceProfile", "GenOp", "JitterSpec", "Job", "JobSpec",
    "MergeScheduler", "OccupancyModel", "ParseError", "SaturationModel",
    "Simulator", "StackConfig", "StationSpec", "TokenBucket", "Trace",
    "ValidationError", "Zone", "ZnsDevice", "build_report",
    "fit_occupancy_model", "generate", "load_builtin", "load_device_file",
    "load_jobspec", "parse_jobspec", "percentile", "run_sim", "stack_tax",
    "write_report", "write_trace_csv",
]

__version__ = "0.1.0"
