"""
Tidy CSV bundles comparing the initial simulation, the MILP solution and the
final simulation, plus batch aggregates.
"""
import logging
import os

import numpy as np
import pandas as pd

from app.utils.helpers import write_csv

logger = logging.getLogger(__name__)

SOURCES = ("initial", "milp", "final")
HISTOGRAM_BINS = 10


def _unit_rows(source, schedule, network):
    """Expand group controls to units; running units are the highest-numbered."""
    rows = []
    for g, group in enumerate(network.pump_groups):
        for k in range(schedule.horizon):
            n_on = int(schedule.n_active[g, k])
            speed = float(schedule.speed[g, k])
            for u, pump_id in enumerate(group.pump_ids, start=1):
                on = u > group.n_pumps - n_on
                rows.append({"source": source, "k": k + 1, "pump_id": pump_id,
                             "status": int(on), "speed": speed if on else 0.0})
    return rows


def schedule_frame(report):
    rows = _unit_rows("initial", report.baseline.schedule, report.network)
    extracted = report.extracted
    for i, pump_id in enumerate(extracted.pump_ids):
        for k in range(report.network.horizon):
            rows.append({"source": "milp", "k": k + 1, "pump_id": pump_id,
                         "status": int(extracted.statuses[i, k]),
                         "speed": float(extracted.speeds[i, k])})
    rows.extend(_unit_rows("final", report.final.schedule, report.network))
    return pd.DataFrame(rows, columns=["source", "k", "pump_id", "status", "speed"])


def _wide(series_by_source, key_name, keys, horizon):
    rows = []
    for key in keys:
        for k in range(horizon):
            row = {"k": k + 1, key_name: key}
            for source in SOURCES:
                row[source] = float(series_by_source[source][key][k])
            rows.append(row)
    return pd.DataFrame(rows, columns=["k", key_name, *SOURCES])


def flows_frame(report):
    network = report.network
    extracted = report.extracted
    keys = [p.id for p in network.pipes] + [g.id for g in network.pump_groups]
    milp = dict(extracted.pipe_flows)
    milp.update({g.id: extracted.group_flow(g) for g in network.pump_groups})
    series = {
        "initial": {key: report.baseline.flow_of(key) for key in keys},
        "milp": milp,
        "final": {key: report.final.flow_of(key) for key in keys},
    }
    return _wide(series, "element", keys, network.horizon)


def _sim_heads(sim):
    heads = {node_id: sim.heads[i] for i, node_id in enumerate(sim.calc_nodes)}
    heads.update({tank_id: sim.tank_heads[t] for t, tank_id in enumerate(sim.tank_ids)})
    return heads


def heads_frame(report):
    keys = list(report.extracted.heads)
    series = {
        "initial": _sim_heads(report.baseline),
        "milp": report.extracted.heads,
        "final": _sim_heads(report.final),
    }
    return _wide(series, "node", keys, report.network.horizon)


def tank_level_frame(report):
    network = report.network
    keys = [t.node_id for t in network.tanks]
    elevation = {t.node_id: network.node(t.node_id).elevation for t in network.tanks}
    series = {
        "initial": {t: report.baseline.tank_levels[i] for i, t in enumerate(report.baseline.tank_ids)},
        "milp": {t: report.extracted.heads[t] - elevation[t] for t in keys},
        "final": {t: report.final.tank_levels[i] for i, t in enumerate(report.final.tank_ids)},
    }
    return _wide(series, "tank", keys, network.horizon)


def cost_tariff_frame(report):
    network = report.network
    dt = network.inputs.dt_hours
    tariff = np.asarray(network.inputs.tariff, dtype=float)
    milp_power = report.extracted.power.sum(axis=0)
    return pd.DataFrame({
        "k": np.arange(1, network.horizon + 1),
        "tariff": tariff,
        "initial_power": report.baseline.power.sum(axis=0),
        "milp_power": milp_power,
        "final_power": report.final.power.sum(axis=0),
        "initial_cost": report.baseline.step_cost,
        "milp_cost": tariff * dt * milp_power,
        "final_cost": report.final.step_cost,
    })


PLOT_FRAMES = {
    "schedule": schedule_frame,
    "flows": flows_frame,
    "heads": heads_frame,
    "tank_level": tank_level_frame,
    "cost_tariff": cost_tariff_frame,
}


def emit_plots_data(report, out_dir):
    """Write one CSV per comparison family; returns {family: path}."""
    paths = {}
    for family, build in PLOT_FRAMES.items():
        path = os.path.join(out_dir, f"{family}.csv")
        write_csv(path, build(report))
        paths[family] = path
    logger.info(f"Wrote {len(paths)} comparison tables to {out_dir}")
    return paths


# Batch aggregates

def histogram_frame(values, bins=HISTOGRAM_BINS):
    values = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if len(values) == 0:
        return pd.DataFrame(columns=["bin_low", "bin_high", "count"])
    counts, edges = np.histogram(values, bins=bins)
    return pd.DataFrame({"bin_low": edges[:-1], "bin_high": edges[1:], "count": counts})


def cost_surface_frame(summary):
    solved = summary[summary["solved"]]
    columns = ["tank_diameter", "tank_elevation", "demand_mean", "level_offset",
               "optimized_cost", "resimulated_cost"]
    return solved[columns].sort_values(columns[:4]).reset_index(drop=True)


def ordering_checks(summary, parameters=("tank_elevation", "demand_mean", "level_offset"),
                    value="optimized_cost"):
    """Pairwise checks that ``value`` does not decrease as each parameter grows.

    Pairs are scenarios that differ in that parameter only and are adjacent
    in its grid.
    """
    keys = ["tank_elevation", "level_offset", "demand_mean", "tank_diameter",
            "demand_profile", "tariff_profile"]
    solved = summary[summary["solved"]]
    rows = []
    for parameter in parameters:
        others = [k for k in keys if k != parameter]
        pairs = held = 0
        for _, group in solved.groupby(others, dropna=False):
            ordered = group.sort_values(parameter)[value].to_numpy()
            for lower, higher in zip(ordered[:-1], ordered[1:]):
                pairs += 1
                held += int(higher >= lower - 1e-9 * max(1.0, abs(lower)))
        rows.append({"parameter": parameter, "pairs": pairs, "held": held,
                     "ok": pairs == held})
    return pd.DataFrame(rows, columns=["parameter", "pairs", "held", "ok"])


def emit_batch_data(summary, out_dir):
    """Write the batch summary and its aggregates; returns {name: path}."""
    solved = summary[summary["solved"]]
    frames = {
        "batch_summary": summary,
        "cost_surface": cost_surface_frame(summary),
        "time_histogram": histogram_frame(solved["wall_time"]),
        "mae_histogram": histogram_frame(solved["tank_level_mae"]),
        "ordering_checks": ordering_checks(summary),
    }
    paths = {}
    for name, frame in frames.items():
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(path, frame)
        paths[name] = path
    return paths
