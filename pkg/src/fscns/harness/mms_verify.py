"""Refinement studies against manufactured solutions."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dynamics.mms import ManufacturedSolution
from ..dynamics.stepper import Stepper, StepperConfig, integrate
from ..errors import ContractError, HealthError
from ..geometry import build_grid
from .io import write_csv
from .runner import EXIT_HEALTH, EXIT_OK, EXIT_VERIFY
from .sweep import loglog_slope

__all__ = ["MMSReport", "mms_verify", "MMS_COLUMNS"]

log = logging.getLogger("fscns")

MMS_COLUMNS = ["N_z", "dz_max", "steps", "err_rho", "err_v", "err_h"]
ZERO_FLOOR = 1e-11


@dataclass
class MMSReport:
    solution: str
    table: list = field(default_factory=list)
    orders: dict = field(default_factory=dict)
    pair_orders: dict = field(default_factory=dict)
    passed: bool = False
    exit_code: int = EXIT_VERIFY
    min_order: float = 1.5

    def as_dict(self):
        return asdict(self)


def mms_verify(cfg, solution_id="moving_surface", resolutions=(12, 24, 48), output_dir=None,
               min_order=1.5, quiet=True):
    """Run the manufactured solution at several vertical resolutions.

    The horizontal grid, chart slope and time step stay fixed; errors are
    sup norms at the final time. The observed order per variable is the
    least-squares slope of ``log err`` against ``log dz_max``.

    Parameters
    ----------
    cfg : RunConfig
        Supplies the grid (``d_h = 1``, ``L = 2 pi``), physics and stepper.
        A fixed ``stepper.dt`` is used when given, otherwise ``2e-3``.
    solution_id : str
    resolutions : sequence of int
        At least three vertical resolutions.

    Returns
    -------
    MMSReport
        ``exit_code`` is 0 when every order reaches ``min_order`` (or all
        errors sit below the round-off floor), 4 otherwise.
    """
    res = sorted(int(n) for n in resolutions)
    if len(res) < 3:
        raise ContractError("mms_verify needs at least three resolutions")
    params = cfg.build_params()
    sc = dict(cfg.stepper)
    if sc.get("dt") is None:
        sc["dt"] = 2e-3
    sc["check_dt"] = False
    sc["output_every"] = sc["t_end"]
    scfg = StepperConfig(**sc)
    report = MMSReport(solution_id, min_order=min_order)
    A = cfg.preset_params.get("A", 1.0)
    A = 1.0 if A == "auto" else float(A)
    for nz in res:
        grid = build_grid(**{**cfg.grid, "N_z": nz})
        ms = ManufacturedSolution(grid, params, A=A, solution_id=solution_id)
        st = Stepper(grid, params, scfg, forcing=ms)
        try:
            final, steps = integrate(ms.exact(0.0), st)
        except HealthError as err:
            log.error("manufactured run at N_z=%d aborted: %s", nz, err)
            report.exit_code = EXIT_HEALTH
            return _finish(report, output_dir)
        ex = ms.exact(final.t)
        row = {"N_z": nz, "dz_max": float(np.max(np.diff(grid.z_nodes))), "steps": steps,
               "err_rho": float(np.max(np.abs(final.rho - ex.rho))),
               "err_v": float(np.max(np.abs(final.v - ex.v))),
               "err_h": float(np.max(np.abs(final.h - ex.h)))}
        report.table.append(row)
        if not quiet:
            log.info("N_z=%d err_rho=%.3e err_v=%.3e err_h=%.3e", nz, row["err_rho"],
                     row["err_v"], row["err_h"])
    dz = [r["dz_max"] for r in report.table]
    ok = True
    for var in ("rho", "v", "h"):
        err = [r[f"err_{var}"] for r in report.table]
        if max(err) <= ZERO_FLOOR:
            report.orders[var] = float("inf")
            report.pair_orders[var] = []
            continue
        report.orders[var] = loglog_slope(dz, err)
        report.pair_orders[var] = [float(np.log(e0 / e1) / np.log(d0 / d1))
                                   for e0, e1, d0, d1 in zip(err, err[1:], dz, dz[1:])]
        ok &= bool(report.orders[var] >= min_order)
    report.passed = ok
    report.exit_code = EXIT_OK if ok else EXIT_VERIFY
    return _finish(report, output_dir)


def _finish(report, output_dir):
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        write_csv(os.path.join(output_dir, "mms.csv"), MMS_COLUMNS, report.table)
        with open(os.path.join(output_dir, "mms_report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
    return report
