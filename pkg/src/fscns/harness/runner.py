"""Single runs driven by a :class:`RunConfig`."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..diagnostics import (EnergyTracker, ThetaTracker, layer_probe, structural_residuals,
                           taylor_sign)
from ..dynamics.presets import make_initial
from ..dynamics.stepper import Stepper, integrate
from ..errors import HealthError
from ..geometry import check_diffeomorphism
from .io import CsvWriter, write_snapshot

__all__ = ["RunResult", "run", "run_columns", "EXIT_OK", "EXIT_CONFIG", "EXIT_HEALTH",
           "EXIT_VERIFY"]

log = logging.getLogger("fscns")

EXIT_OK, EXIT_CONFIG, EXIT_HEALTH, EXIT_VERIFY = 0, 2, 3, 4

BASE_COLUMNS = ["t", "step", "dt", "min_J", "rho_min", "rho_max", "v_max", "h_max",
                "taylor_sign"]
ENERGY_COLUMNS = ["E_total", "E_kinetic", "E_internal", "E_external", "E_capillary",
                  "dissipation_rate", "dissipation_cum", "bottom_flux_cum", "balance_defect"]
THETA_COLUMNS = ["theta_m", "theta_sup", "theta_int"]
LAYER_COLUMNS = ["eps_dzz_v", "dzz_v", "lap_p_h1", "layer_width", "sn_trace"]
IDENTITY_COLUMNS = ["div_sup", "vort_sup", "zeta_trace"]


def run_columns(cfg):
    d = cfg.diagnostics
    cols = list(BASE_COLUMNS)
    if d["energy"]:
        cols += ENERGY_COLUMNS
    if d["theta"]:
        cols += THETA_COLUMNS
    if d["layer"]:
        cols += LAYER_COLUMNS
    if d["identities"]:
        cols += IDENTITY_COLUMNS
    return cols


@dataclass
class RunResult:
    exit_code: int
    status: str
    final: object
    outputs: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    csv_path: str | None = None
    snapshot_path: str | None = None
    error: Exception | None = None


class _Monitor:
    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params
        d = cfg.diagnostics
        self.energy = EnergyTracker(params) if d["energy"] else None
        self.theta = (ThetaTracker(params, d["m_cap"], d["alpha0_max"], d["weighted"])
                      if d["theta"] else None)
        self.steps = 0
        self.last_dt = 0.0

    def on_step(self, old, new, dt):
        self.steps += 1
        self.last_dt = dt
        if self.energy is not None:
            self.energy.on_step(old, new, dt)

    def row(self, s):
        P = self.params
        row = {
            "t": s.t, "step": self.steps, "dt": self.last_dt,
            "min_J": check_diffeomorphism(s.metric, P.c0_health).min_J,
            "rho_min": float(np.min(s.rho)), "rho_max": float(np.max(s.rho)),
            "v_max": float(np.max(np.abs(s.v))), "h_max": float(np.max(np.abs(s.h))),
            "taylor_sign": taylor_sign(s, P),
        }
        d = self.cfg.diagnostics
        if self.energy is not None:
            led = self.energy.ledger(s)
            row.update(E_total=led.total, E_kinetic=led.kinetic, E_internal=led.internal,
                       E_external=led.external, E_capillary=led.capillary,
                       dissipation_rate=led.dissipation_rate,
                       dissipation_cum=led.cumulative_dissipation,
                       bottom_flux_cum=led.bottom_flux,
                       balance_defect=self.energy.balance_defect())
        if self.theta is not None:
            rep = self.theta.update(s)
            row.update(theta_m=rep.theta_m, theta_sup=rep.sup_instant,
                       theta_int=sum(rep.integrals.values()))
        if d["layer"]:
            lp = layer_probe(s, P)
            row.update(eps_dzz_v=lp.eps_dzz_v, dzz_v=lp.dzz_v, lap_p_h1=lp.delta_p_norm,
                       layer_width=lp.layer_width, sn_trace=lp.sn_trace)
        if d["identities"]:
            res = structural_residuals(s, P)
            row.update(div_sup=res["div_sup"], vort_sup=res["vort_sup"],
                       zeta_trace=res["zeta_trace"])
        return row


def _write_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def run(cfg, output_dir=None, quiet=True, keep_states=False, forcing=None, initial=None):
    """Execute one run.

    Parameters
    ----------
    cfg : RunConfig
    output_dir : str, optional
        Receives ``<name>.csv``, ``<name>_final.fscn`` (or
        ``<name>_last_good.fscn`` after a health abort) and
        ``<name>_report.json``. Nothing is written when omitted.
    quiet : bool
        Suppress per-output log lines.
    keep_states : bool
        Keep every output state in ``RunResult.outputs``.
    forcing : Forcing, optional
    initial : FlowState, optional
        Overrides the preset.

    Returns
    -------
    RunResult
        ``exit_code`` is 0 on success and 3 after a health abort.
    """
    grid = cfg.build_grid()
    params = cfg.build_params()
    scfg = cfg.build_stepper_config()
    name = cfg.run["name"]
    state = initial if initial is not None else make_initial(cfg.preset, grid, params,
                                                              **cfg.preset_kwargs())
    stepper = Stepper(grid, params, scfg, forcing)
    mon = _Monitor(cfg, params)
    cols = run_columns(cfg)
    writer = None
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        writer = CsvWriter(os.path.join(output_dir, f"{name}.csv"), cols)
    result = RunResult(EXIT_OK, "ok", None)
    if writer is not None:
        result.csv_path = writer.path

    def on_output(s):
        row = mon.row(s)
        result.rows.append(row)
        if keep_states:
            result.outputs.append(s)
        if writer is not None:
            writer.write(row)
        if not quiet:
            log.info("t=%.6g step=%d min_J=%.4g v_max=%.4g", s.t, mon.steps, row["min_J"],
                     row["v_max"])

    try:
        final, _ = integrate(state, stepper, on_output=on_output, on_step=mon.on_step,
                             max_steps=cfg.run["max_steps"])
        result.final = final
        if not result.rows or result.rows[-1]["step"] != mon.steps:
            # stopped by max_steps between output times
            on_output(final)
        snap_name = f"{name}_final.fscn"
    except HealthError as err:
        final = err.state if err.state is not None else state
        result.final = final
        result.exit_code = EXIT_HEALTH
        result.status = f"health:{err.kind}"
        result.error = err
        snap_name = f"{name}_last_good.fscn"
        log.error("health monitor tripped: %s", err)
    finally:
        if writer is not None:
            writer.close()
    result.report = {
        "name": name, "status": result.status, "exit_code": result.exit_code,
        "steps": mon.steps, "t_final": float(result.final.t),
        "grid": grid.describe(), "seed": cfg.seed,
        "message": str(result.error) if result.error else "",
    }
    if mon.theta is not None and mon.theta.last_addends is not None:
        rep = mon.theta.report()
        result.report["theta"] = {"theta_m": rep.theta_m, "addends": rep.addends,
                                  "integrals": rep.integrals, "m_cap": rep.m_cap}
    if output_dir is not None:
        if cfg.run["snapshots"] or result.exit_code:
            result.snapshot_path = os.path.join(output_dir, snap_name)
            write_snapshot(result.snapshot_path, result.final)
        _write_report(os.path.join(output_dir, f"{name}_report.json"), result.report)
    return result
