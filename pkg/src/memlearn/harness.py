"""Experiment driver: validated JSON configs in, metrics reports out.

A config names an experiment kind (prefetch / offchip / hss), a trace
(inline generator spec or a trace file), a policy list, and optional
parameter overrides. The driver expands the policy x MTPS matrix
sequentially, runs each cell with a seed derived from (seed, cell index),
and assembles one MetricsReport whose text renderings are byte-stable:
the same config and seed always produce identical output files.

Report formats: an aligned table, a structured JSON document, and
plot-ready CSV series (one row per metric, one column per policy).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from . import __version__
from .hermes import (HermesConfig, IdealPredictor, NeverPredictor,
                     PopetPredictor, TtpPredictor)
from .hss import (FastOnly, HssConfig, OracleOffline, RecencyHeuristic,
                  SlowOnly, run_hss)
from .memsim import MemSimConfig, StridePrefetcher, run
from .prng import derive_seed
from .pythia import PythiaConfig, PythiaPrefetcher, RewardLevels
from .sibyl import SibylAgent, SibylConfig
from .trace import (TraceSpec, generate_memory_trace, generate_storage_trace,
                    read_trace)

SCHEMA_VERSION = 1

PREFETCH_POLICIES = ("none", "stride", "pythia")
OFFCHIP_POLICIES = ("none", "ttp", "popet", "ideal")
HSS_POLICIES = ("slow_only", "fast_only", "oracle", "recency", "sibyl")

_TOP_KEYS = {"version", "kind", "seed", "trace", "policies", "sim",
             "pythia", "hermes", "sibyl", "devices", "matrix"}
_TRACE_KEYS = {"path", "generator", "length", "seed", "params"}
_SIM_KEYS = {"dram_base_latency", "mtps", "core_ghz", "bw_window_cycles",
             "bw_high_threshold", "prefetch_trigger", "prefetch_fill_level"}
_PYTHIA_KEYS = {"features", "offsets", "alpha", "gamma", "epsilon",
                "epsilon_final", "epsilon_decay_steps", "eq_capacity",
                "qvstore_max_entries", "fill_level", "rewards"}
_REWARD_KEYS = {"r_at", "r_al", "r_cl", "r_in_low", "r_in_high",
                "r_np_low", "r_np_high"}
_HERMES_KEYS = {"features", "tau_act", "t_pos", "t_neg", "weight_bits",
                "issue_latency", "enabled", "shadow_capacity"}
_SIBYL_KEYS = {"hidden", "learning_rate", "gamma", "epsilon", "epsilon_final",
               "epsilon_decay_steps", "batch_size", "buffer_capacity",
               "sync_period", "train_freq", "reward_gain"}
_DEVICE_KEYS = {"fast", "slow"}
_DEVICE_FIELDS = {"capacity_pages", "read_fixed_us", "read_per_page_us",
                  "write_fixed_us", "write_per_page_us"}
_MATRIX_KEYS = {"mtps"}


class ConfigError(ValueError):
    """Unknown keys or invalid values in an experiment config."""


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def validate_config(config: dict) -> None:
    _check_keys(config, _TOP_KEYS, "config")
    if config.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"config version must be {SCHEMA_VERSION}")
    kind = config.get("kind")
    if kind not in ("prefetch", "offchip", "hss"):
        raise ConfigError("kind must be prefetch|offchip|hss")
    if not isinstance(config.get("seed"), int):
        raise ConfigError("an integer seed is mandatory")
    trace = config.get("trace")
    if trace is None:
        raise ConfigError("a trace section is mandatory")
    _check_keys(trace, _TRACE_KEYS, "trace")
    if ("path" in trace) == ("generator" in trace):
        raise ConfigError("trace needs exactly one of path|generator")
    policies = config.get("policies")
    known = {"prefetch": PREFETCH_POLICIES, "offchip": OFFCHIP_POLICIES,
             "hss": HSS_POLICIES}[kind]
    if not isinstance(policies, list):
        raise ConfigError("policies must be a list")
    for p in policies:
        if p not in known:
            raise ConfigError(f"unknown policy {p!r} for kind {kind!r}")
    if "sim" in config:
        _check_keys(config["sim"], _SIM_KEYS, "sim")
    if "pythia" in config:
        _check_keys(config["pythia"], _PYTHIA_KEYS, "pythia")
        if "rewards" in config["pythia"]:
            _check_keys(config["pythia"]["rewards"], _REWARD_KEYS,
                        "pythia.rewards")
    if "hermes" in config:
        _check_keys(config["hermes"], _HERMES_KEYS, "hermes")
    if "sibyl" in config:
        _check_keys(config["sibyl"], _SIBYL_KEYS, "sibyl")
    if "devices" in config:
        _check_keys(config["devices"], _DEVICE_KEYS, "devices")
        for side in config["devices"].values():
            _check_keys(side, _DEVICE_FIELDS, "devices entry")
    if "matrix" in config:
        _check_keys(config["matrix"], _MATRIX_KEYS, "matrix")


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _load_trace(config: dict):
    t = config["trace"]
    if "path" in t:
        return read_trace(t["path"])
    spec = TraceSpec(generator=t["generator"], length=int(t["length"]),
                     seed=int(t.get("seed", derive_seed(config["seed"], 0))),
                     params=dict(t.get("params", {})))
    if t["generator"] in ("hot_cold", "sequential_burst"):
        return generate_storage_trace(spec)
    return generate_memory_trace(spec)


def _sim_config(config: dict, mtps=None) -> MemSimConfig:
    kw = dict(config.get("sim", {}))
    if mtps is not None:
        kw["mtps"] = mtps
    return MemSimConfig(**kw)


def _pythia_config(config: dict) -> PythiaConfig:
    kw = dict(config.get("pythia", {}))
    if "features" in kw:
        kw["features"] = tuple(kw["features"])
    if "offsets" in kw:
        kw["offsets"] = tuple(kw["offsets"])
    if "rewards" in kw:
        kw["rewards"] = RewardLevels(**kw["rewards"])
    return PythiaConfig(**kw)


def _hermes_config(config: dict) -> tuple[HermesConfig, bool, int]:
    kw = dict(config.get("hermes", {}))
    enabled = bool(kw.pop("enabled", True))
    kw.pop("shadow_capacity", None)
    if "features" in kw:
        kw["features"] = tuple((n, s) for n, s in kw["features"])
    cfg = HermesConfig(**kw)
    return cfg, enabled, cfg.issue_latency


def _hss_config(config: dict) -> HssConfig:
    dv = config.get("devices")
    if not dv:
        return HssConfig()
    base = HssConfig()
    fast = replace(base.fast, **dv.get("fast", {}))
    slow = replace(base.slow, **dv.get("slow", {}))
    return HssConfig(fast=fast, slow=slow)


@dataclass
class ReportRow:
    policy: str
    mtps: float | None
    metrics: dict


@dataclass
class MetricsReport:
    meta: dict
    columns: list
    rows: list = field(default_factory=list)

    def to_structured(self) -> str:
        doc = {"meta": self.meta, "columns": self.columns,
               "rows": [{"policy": r.policy, "mtps": r.mtps,
                         "metrics": r.metrics} for r in self.rows]}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @staticmethod
    def from_structured(text: str) -> "MetricsReport":
        doc = json.loads(text)
        rows = [ReportRow(r["policy"], r.get("mtps"), r["metrics"])
                for r in doc["rows"]]
        return MetricsReport(meta=doc["meta"], columns=doc["columns"],
                             rows=rows)

    def to_table(self) -> str:
        headers = ["policy"]
        if any(r.mtps is not None for r in self.rows):
            headers.append("mtps")
        headers += self.columns
        grid = [headers]
        for r in self.rows:
            row = [r.policy]
            if "mtps" in headers:
                row.append(_fmt(r.mtps))
            row += [_fmt(r.metrics.get(c)) for c in self.columns]
            grid.append(row)
        widths = [max(len(row[i]) for row in grid) for i in range(len(headers))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                 for row in grid]
        meta = "  ".join(f"{k}={v}" for k, v in self.meta.items())
        return "# " + meta + "\n" + "\n".join(lines) + "\n"

    def to_plotdata(self) -> str:
        """CSV: one row per (metric[, mtps]), one column per policy in
        config order."""
        mtps_values = sorted({r.mtps for r in self.rows if r.mtps is not None})
        policies = list(dict.fromkeys(r.policy for r in self.rows))
        out = []
        if mtps_values:
            out.append("metric,mtps," + ",".join(policies))
            for metric in self.columns:
                for m in mtps_values:
                    cells = []
                    for p in policies:
                        row = next((r for r in self.rows
                                    if r.policy == p and r.mtps == m), None)
                        cells.append(_fmt(row.metrics.get(metric)) if row else "")
                    out.append(f"{metric},{_fmt(m)}," + ",".join(cells))
        else:
            out.append("metric," + ",".join(policies))
            for metric in self.columns:
                cells = []
                for p in policies:
                    row = next((r for r in self.rows if r.policy == p), None)
                    cells.append(_fmt(row.metrics.get(metric)) if row else "")
                out.append(f"{metric}," + ",".join(cells))
        return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# -- per-kind runners ----------------------------------------------------------


def _run_prefetch_cell(config, trace, policy, mtps, seed):
    sim_cfg = _sim_config(config, mtps)
    prefetcher = None
    if policy == "stride":
        prefetcher = StridePrefetcher(fill_level=sim_cfg.prefetch_fill_level)
    elif policy == "pythia":
        prefetcher = PythiaPrefetcher(_pythia_config(config), seed=seed)
    hier, _ = run(sim_cfg, trace, prefetcher=prefetcher)
    m = hier.metrics
    out = {
        "demands": m.demand_accesses,
        "coverage": m.coverage(),
        "overprediction_rate": m.overprediction_rate(),
        "off_chip_rate": (m.off_chip_loads / m.demand_accesses
                          if m.demand_accesses else 0.0),
        "mean_load_cycles": m.mean_load_cycles(),
        "prefetches_issued": m.prefetches_issued,
        "prefetch_useful": m.prefetch_useful,
        "prefetch_unused": m.prefetch_unused,
        "prefetch_redundant": m.prefetch_redundant,
        "np_fraction": None,
        "modal_offset": None,
    }
    if policy == "pythia":
        out["np_fraction"] = prefetcher.stats.no_prefetch_fraction()
        out["modal_offset"] = prefetcher.modal_offset()
    return out


def _run_offchip_cell(config, trace, policy, mtps, seed):
    sim_cfg = _sim_config(config, mtps)
    h_cfg, enabled, issue_latency = _hermes_config(config)
    if policy == "none":
        predictor, enabled = NeverPredictor(), False
    elif policy == "ttp":
        predictor = TtpPredictor(
            config.get("hermes", {}).get("shadow_capacity", 32768))
    elif policy == "ideal":
        predictor = IdealPredictor()
    else:
        predictor = PopetPredictor(h_cfg)
    hier, _ = run(sim_cfg, trace, offchip=predictor, hermes_enabled=enabled,
                  hermes_issue_latency=issue_latency)
    m = hier.metrics
    acc, acc_flag = predictor.stats.accuracy()
    cov, cov_flag = predictor.stats.coverage()
    return {
        "loads": predictor.stats.loads,
        "offchip_accuracy": acc,
        "accuracy_zero_denominator": acc_flag,
        "offchip_coverage": cov,
        "off_chip_rate": (m.off_chip_loads / m.demand_accesses
                          if m.demand_accesses else 0.0),
        "mean_load_cycles": m.mean_load_cycles(),
        "hermes_issued": m.hermes_issued,
        "hermes_consumed": m.hermes_consumed,
    }


def _run_hss_cell(config, trace, policy, seed, fast_only_mean):
    hss_cfg = _hss_config(config)
    if policy == "slow_only":
        pol = SlowOnly()
    elif policy == "fast_only":
        pol = FastOnly()
    elif policy == "oracle":
        pol = OracleOffline(trace, hss_cfg.fast.capacity_pages)
    elif policy == "recency":
        pol = RecencyHeuristic()
    else:
        skw = dict(config.get("sibyl", {}))
        pol = SibylAgent(SibylConfig(**skw), seed=seed)
    sim = run_hss(trace, pol, hss_cfg)
    m = sim.metrics
    mean = m.mean_request_latency_us()
    return {
        "requests": m.requests,
        "mean_request_latency_us": mean,
        "normalized_latency_vs_fast_only": (mean / fast_only_mean
                                            if fast_only_mean else None),
        "fast_served_fraction": (m.fast_served / m.requests
                                 if m.requests else 0.0),
        "evictions": m.evictions,
        "evicted_pages": m.evicted_pages,
    }


_COLUMNS = {
    "prefetch": ["demands", "coverage", "overprediction_rate", "off_chip_rate",
                 "mean_load_cycles", "prefetches_issued", "prefetch_useful",
                 "prefetch_unused", "prefetch_redundant", "np_fraction",
                 "modal_offset"],
    "offchip": ["loads", "offchip_accuracy", "accuracy_zero_denominator",
                "offchip_coverage", "off_chip_rate", "mean_load_cycles",
                "hermes_issued", "hermes_consumed"],
    "hss": ["requests", "mean_request_latency_us",
            "normalized_latency_vs_fast_only", "fast_served_fraction",
            "evictions", "evicted_pages"],
}


def run_experiment(config: dict) -> MetricsReport:
    """Run every (policy, mtps) cell of the config; deterministic in
    (config, seed)."""
    validate_config(config)
    kind = config["kind"]
    seed = config["seed"]
    trace = _load_trace(config)
    mtps_list = config.get("matrix", {}).get("mtps", [None])

    report = MetricsReport(
        meta={"schema_version": SCHEMA_VERSION, "kind": kind, "seed": seed,
              "config_hash": config_hash(config), "package": __version__},
        columns=_COLUMNS[kind])

    fast_only_mean = None
    if kind == "hss":
        ref = run_hss(trace, FastOnly(), _hss_config(config))
        fast_only_mean = ref.metrics.mean_request_latency_us()

    index = 0
    for mtps in mtps_list:
        for policy in config["policies"]:
            cell_seed = derive_seed(seed, index + 1)
            if kind == "prefetch":
                metrics = _run_prefetch_cell(config, trace, policy, mtps,
                                             cell_seed)
            elif kind == "offchip":
                metrics = _run_offchip_cell(config, trace, policy, mtps,
                                            cell_seed)
            else:
                metrics = _run_hss_cell(config, trace, policy, cell_seed,
                                        fast_only_mean)
            report.rows.append(ReportRow(policy=policy, mtps=mtps,
                                         metrics=metrics))
            index += 1
    return report


def emit(report: MetricsReport, fmt: str, out_dir, render_figures=None):
    """Write the report in one format; plotdata also renders figures.

    Returns the list of written paths.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if fmt == "table":
        p = os.path.join(out_dir, "report.txt")
        _write(p, report.to_table())
        paths.append(p)
    elif fmt == "structured":
        p = os.path.join(out_dir, "report.json")
        _write(p, report.to_structured())
        paths.append(p)
    elif fmt == "plotdata":
        p = os.path.join(out_dir, "plotdata.csv")
        _write(p, report.to_plotdata())
        paths.append(p)
        if render_figures is None or render_figures:
            from .plots import render_report
            paths.extend(render_report(report, out_dir))
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    return paths


def _write(path, text):
    with open(path, "w") as f:
        f.write(text)


def compare(reports: list[MetricsReport], baseline: str) -> str:
    """Per-metric ratios of every policy row against the baseline policy
    of the same report. Missing metrics are flagged with '-'."""
    lines = []
    for ri, rep in enumerate(reports):
        base_rows = [r for r in rep.rows if r.policy == baseline]
        if not base_rows:
            raise ConfigError(
                f"baseline policy {baseline!r} absent from report {ri}")
        lines.append(f"# report {ri}: kind={rep.meta.get('kind')} "
                     f"hash={rep.meta.get('config_hash')} baseline={baseline}")
        header = ["policy"] + [c for c in rep.columns]
        grid = [header]
        for row in rep.rows:
            base = next((b for b in base_rows if b.mtps == row.mtps),
                        base_rows[0])
            cells = [row.policy]
            for c in rep.columns:
                v, bv = row.metrics.get(c), base.metrics.get(c)
                if (isinstance(v, (int, float)) and not isinstance(v, bool)
                        and isinstance(bv, (int, float))
                        and not isinstance(bv, bool) and bv != 0):
                    cells.append(_fmt(v / bv))
                else:
                    cells.append("-")
            grid.append(cells)
        widths = [max(len(r[i]) for r in grid) for i in range(len(header))]
        for r in grid:
            lines.append("  ".join(c.ljust(w)
                                   for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
