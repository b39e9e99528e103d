"""Simulation and statistics toolkit for carbon-nanotube liquid-marble devices."""
from .device import (DeviceKind, DeviceParams, DeviceState, default_params, initial_state,
                     resistance, step)
from .harness import (DEFAULT_BOUNDS, PAPER_TARGET, CalibrationResult, CalibrationTarget,
                      DeviceMetrics, EnsembleResult, EnsembleSpec, StatsReport, build_tables,
                      calibrate, calibration_loss, device_metrics, ensemble_from_traces,
                      format_report, run_ensemble, sample_device_params)
from .plots import render_plots
from .protocol import (PhaseSpec, ProtocolSpec, SweepSpec, Trace, concat_protocols, loop_area,
                       paper_protocol, read_trace_csv, run_protocol, run_sweep, voltage_at,
                       write_trace_csv)
from .simplex import nelder_mead, restarted_nelder_mead
from .stats import (PhaseSummary, TestResult, anova_oneway, detect_onset, percentage_change,
                    phase_summary, shapiro_wilk, t_one_sample, t_two_sample)

__version__ = "0.1.0"
