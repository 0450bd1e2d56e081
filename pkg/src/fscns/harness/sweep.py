"""Parameter sweeps and limit comparisons."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..geometry import hderiv
from .runner import EXIT_OK, run

__all__ = ["SweepReport", "sweep", "state_distance", "loglog_slope"]

log = logging.getLogger("fscns")


def state_distance(a, b):
    """Sup-norm distances of ``rho``, ``v`` and the ``W^{1,inf}`` distance of ``h``."""
    dh = a.h - b.h
    grad = max(float(np.max(np.abs(hderiv(dh, a.grid, k, surface=True))))
               for k in range(a.grid.d_h))
    return {"rho": float(np.max(np.abs(a.rho - b.rho))),
            "v": float(np.max(np.abs(a.v - b.v))),
            "h": float(np.max(np.abs(dh))) + grad}


def _sup_distance(run_a, run_b):
    out = {"rho": 0.0, "v": 0.0, "h": 0.0}
    for sa, sb in zip(run_a.outputs, run_b.outputs):
        for k, v in state_distance(sa, sb).items():
            out[k] = max(out[k], v)
    return out


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``; nan if undefined."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _ratio(vals):
    vals = [v for v in vals if np.isfinite(v)]
    if len(vals) < 2 or min(vals) <= 0:
        return float("nan")
    return max(vals) / min(vals)


def _named(cfg, name):
    return replace(cfg, run={**cfg.run, "name": name})


def _strictly_decreasing(seq):
    return len(seq) >= 2 and all(b < a for a, b in zip(seq, seq[1:]))


@dataclass
class SweepReport:
    axis: str
    values: list
    members: list = field(default_factory=list)
    aligned: bool = True
    cauchy: dict = field(default_factory=dict)
    vs_limit: dict = field(default_factory=dict)
    theta_ratio: float = float("nan")
    layer: dict = field(default_factory=dict)
    exit_code: int = 0

    def as_dict(self):
        return asdict(self)


def _member_summary(value, res):
    rows = res.rows
    summ = {"value": value, "status": res.status, "exit_code": res.exit_code,
            "t_final": float(res.final.t)}
    if rows and "theta_m" in rows[-1]:
        summ["theta_m"] = rows[-1]["theta_m"]
    for key in ("eps_dzz_v", "dzz_v", "lap_p_h1"):
        if rows and key in rows[0]:
            summ[key] = max(r[key] for r in rows)
    if rows and "layer_width" in rows[-1]:
        summ["layer_width"] = rows[-1]["layer_width"]
    return summ


def sweep(plan, output_dir=None, quiet=True):
    """Run every member of ``plan`` and compare them.

    Members share the grid, stepper and preset; only the swept parameter
    changes. A member that aborts is marked and excluded from the
    comparisons. With ``plan.limit`` an extra run at axis value 0 serves
    as the reference of the ``vs_limit`` distances.

    Returns
    -------
    SweepReport
    """
    results = []
    values = list(plan.values)
    for i, val in enumerate(values):
        cfg = _named(plan.member(val), f"{plan.base.run['name']}_{plan.axis}{i}")
        sub = None if output_dir is None else os.path.join(output_dir, f"member{i}")
        if not quiet:
            log.info("sweep member %s = %g", plan.axis, val)
        results.append(run(cfg, sub, quiet=quiet, keep_states=True))
    limit = None
    if plan.limit and len(values) > 1:
        cfg = _named(plan.member(0.0), f"{plan.base.run['name']}_{plan.axis}_limit")
        sub = None if output_dir is None else os.path.join(output_dir, "limit")
        limit = run(cfg, sub, quiet=quiet, keep_states=True)

    rep = SweepReport(plan.axis, values)
    rep.members = [_member_summary(v, r) for v, r in zip(values, results)]
    ok = [(v, r) for v, r in zip(values, results) if r.exit_code == EXIT_OK]
    rep.exit_code = 0 if len(ok) == len(results) else 3
    times = [tuple(s.t for s in r.outputs) for _, r in ok]
    rep.aligned = all(t == times[0] for t in times) if times else True
    if len(values) == 1:
        return _finish(rep, output_dir)

    comp = plan.comparison
    if "cauchy_sup_norm" in comp and len(ok) >= 2:
        pairs = [_sup_distance(a[1], b[1]) for a, b in zip(ok, ok[1:])]
        rep.cauchy = {k: [p[k] for p in pairs] for k in ("rho", "v", "h")}
        rep.cauchy["decreasing"] = {k: _strictly_decreasing(rep.cauchy[k])
                                    for k in ("rho", "v", "h")}
        if limit is not None and limit.exit_code == EXIT_OK:
            d = [_sup_distance(r, limit) for _, r in ok]
            rep.vs_limit = {k: [x[k] for x in d] for k in ("rho", "v", "h")}
            rep.vs_limit["decreasing"] = {k: _strictly_decreasing(rep.vs_limit[k])
                                          for k in ("rho", "v", "h")}
    summ = [m for m in rep.members if m["exit_code"] == EXIT_OK]
    if "theta_boundedness" in comp and summ and "theta_m" in summ[0]:
        rep.theta_ratio = _ratio([m["theta_m"] for m in summ])
    if "layer_scaling" in comp and summ and "dzz_v" in summ[0]:
        x = [m["value"] for m in summ]
        rep.layer = {
            "dzz_v_ratio": _ratio([m["dzz_v"] for m in summ]),
            "eps_dzz_v_ratio": _ratio([m["eps_dzz_v"] for m in summ]),
            "lap_p_h1_ratio": _ratio([m["lap_p_h1"] for m in summ]),
            "dzz_v_growth": summ[-1]["dzz_v"] / summ[0]["dzz_v"] if summ[0]["dzz_v"] else
            float("nan"),
            "eps_dzz_v_slope": loglog_slope(x, [m["eps_dzz_v"] for m in summ]),
            "layer_width_slope": loglog_slope(x, [m["layer_width"] for m in summ]),
        }
    return _finish(rep, output_dir)


def _finish(rep, output_dir):
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "sweep_report.json"), "w", encoding="utf-8") as fh:
            json.dump(rep.as_dict(), fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
    return rep
