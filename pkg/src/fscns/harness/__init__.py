"""Configuration, run orchestration, sweeps and verification."""
from __future__ import annotations

from .config import (RunConfig, SweepPlan, load_config, load_plan, parse_config, parse_plan,
                     serialize_config, serialize_plan)
from .io import CsvWriter, read_csv, read_snapshot, write_csv, write_snapshot
from .mms_verify import MMSReport, mms_verify
from .runner import RunResult, run
from .sweep import SweepReport, state_distance, sweep

__all__ = [
    "RunConfig", "SweepPlan", "load_config", "load_plan", "parse_config", "parse_plan",
    "serialize_config", "serialize_plan", "CsvWriter", "read_csv", "read_snapshot",
    "write_csv", "write_snapshot", "MMSReport", "mms_verify", "RunResult", "run",
    "SweepReport", "state_distance", "sweep",
]
