"""Storage physics as MILP rows (SOC recursion, bounds, exclusivity, cost)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import BINARY, EQ, GE, LE, LinearModel, LinExpr
from .model import StorageSchedule, StorageSpec


@dataclass
class StorageVars:
    p_ch: list
    p_dis: list
    x: list
    y: list
    soc: list
    op_cost: LinExpr

    def schedule(self, spec: StorageSpec, values) -> StorageSchedule:
        """Extract a schedule; SOC is replayed from the powers so the recursion is exact."""
        x = [int(round(values[i])) for i in self.x]
        y = [int(round(values[i])) for i in self.y]
        p_ch = [min(max(values[i], 0.0), spec.p_ch_max) * f for i, f in zip(self.p_ch, x)]
        p_dis = [min(max(values[i], 0.0), spec.p_dis_max) * f for i, f in zip(self.p_dis, y)]
        p_ch = [_snap(v) for v in p_ch]
        p_dis = [_snap(v) for v in p_dis]
        sched = StorageSchedule.from_powers(spec, p_ch, p_dis)
        return StorageSchedule(sched.p_ch, sched.p_dis, x, y, sched.soc)


def _snap(v, tol=1e-10):
    # LP noise around zero
    return 0.0 if abs(v) < tol else float(v)


def add_storage_block(model: LinearModel, spec: StorageSpec, horizon: int,
                      prefix: str = "esf") -> StorageVars:
    """Add charge/discharge powers, flags, SOC and the flag-gated operation cost.

    The cost ``C * dt * sum(x*p_ch + y*p_dis)`` is linearised with the exact
    envelope ``z <= P_max*x, z <= p, z >= p - P_max*(1-x), z >= 0``.
    """
    T = horizon
    p_ch, p_dis, xs, ys, soc = [], [], [], [], []
    cost = LinExpr()
    for t in range(T):
        c = model.add_var(f"{prefix}.p_ch[{t}]", 0.0, spec.p_ch_max)
        d = model.add_var(f"{prefix}.p_dis[{t}]", 0.0, spec.p_dis_max)
        x = model.add_var(f"{prefix}.x[{t}]", 0.0, 1.0, BINARY)
        y = model.add_var(f"{prefix}.y[{t}]", 0.0, 1.0, BINARY)
        s = model.add_var(f"{prefix}.soc[{t}]", spec.soc_min, spec.soc_max)
        model.add_constraint(f"{prefix}.ch_max[{t}]", {c: 1.0, x: -spec.p_ch_max}, LE, 0.0)
        model.add_constraint(f"{prefix}.ch_min[{t}]", {c: 1.0, x: -spec.p_ch_min}, GE, 0.0)
        model.add_constraint(f"{prefix}.dis_max[{t}]", {d: 1.0, y: -spec.p_dis_max}, LE, 0.0)
        model.add_constraint(f"{prefix}.dis_min[{t}]", {d: 1.0, y: -spec.p_dis_min}, GE, 0.0)
        model.add_constraint(f"{prefix}.excl[{t}]", {x: 1.0, y: 1.0}, LE, 1.0)
        soc_row = {s: 1.0, c: -spec.delta_t * spec.eta_ch, d: spec.delta_t / spec.eta_dis}
        if t == 0:
            model.add_constraint(f"{prefix}.soc_dyn[{t}]", soc_row, EQ, spec.soc_initial)
        else:
            soc_row[soc[-1]] = -1.0
            model.add_constraint(f"{prefix}.soc_dyn[{t}]", soc_row, EQ, 0.0)
        if spec.cost_coeff > 0:
            for label, p, flag, cap in (("ch", c, x, spec.p_ch_max), ("dis", d, y, spec.p_dis_max)):
                z = model.add_var(f"{prefix}.z_{label}[{t}]", 0.0, cap)
                model.add_constraint(f"{prefix}.mc1_{label}[{t}]", {z: 1.0, flag: -cap}, LE, 0.0)
                model.add_constraint(f"{prefix}.mc2_{label}[{t}]", {z: 1.0, p: -1.0}, LE, 0.0)
                model.add_constraint(f"{prefix}.mc3_{label}[{t}]", {z: 1.0, p: -1.0, flag: -cap},
                                     GE, -cap)
                cost.add_term(z, spec.cost_coeff * spec.delta_t)
        p_ch.append(c)
        p_dis.append(d)
        xs.append(x)
        ys.append(y)
        soc.append(s)
    model.add_constraint(f"{prefix}.cyclic", {soc[-1]: 1.0}, EQ, spec.soc_initial)
    return StorageVars(p_ch, p_dis, xs, ys, soc, cost)


def direct_operation_cost(spec: StorageSpec, values, sv: StorageVars) -> float:
    v = np.asarray(values)
    return spec.cost_coeff * spec.delta_t * float(
        np.dot(np.round(v[sv.x]), v[sv.p_ch]) + np.dot(np.round(v[sv.y]), v[sv.p_dis]))
