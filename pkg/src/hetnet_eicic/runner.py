"""Batch orchestration: one simulation per (case, seed), then KPIs and files."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from . import metrics
from .config import ExperimentConfig
from .flowsim import simulate
from .layout import build_layout
from .traffic import ServiceArea

log = logging.getLogger(__name__)


def run_case(config: ExperimentConfig, seed: int, layout=None, area=None, record_events=False):
    layout = layout or build_layout(config.scenario())
    area = area or ServiceArea(layout)
    event_log = simulate(layout, config.traffic_config(), config.son_config(), config.duration_s, seed,
                         area=area, record_events=record_events)
    return event_log, metrics.compute_kpis(event_log, layout, config.warmup_s)


def run_experiment(config: ExperimentConfig, write_events: bool = False) -> dict:
    """Simulate every seed, write per-run outputs and return the batch summary.

    Layout: ``<output_dir>/<case>/seed_<n>/`` holds ``kpis.json`` plus the
    CSV tables; ``<output_dir>/<case>/summary.json`` aggregates the seeds.
    """
    layout = build_layout(config.scenario())
    area = ServiceArea(layout)
    case_dir = Path(config.output_dir) / config.case
    reports = []
    runs = {}
    for seed in config.seeds:
        log.info("case %s seed %d: simulating %.0f s", config.case, seed, config.duration_s)
        event_log, report = run_case(config, seed, layout, area, record_events=write_events)
        run_dir = case_dir / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        metrics.export(report, run_dir / "kpis.json", "json")
        metrics.export(report, run_dir, "csv")
        if write_events:
            event_log.write_ndjson(run_dir / "events.ndjson")
        reports.append(report)
        runs[str(seed)] = {"mut_bps": report.mut, "cet_bps": report.cet, "max_load_macro": report.max_load_macro,
                           "max_load_small": report.max_load_small, "n_flows": report.n_flows,
                           "sim": event_log.summary}
    summary = {"case": config.case, "config": config.to_dict(), "runs": runs,
               "aggregate": metrics.aggregate(reports)}
    with open(case_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return summary
