"""Config-driven pipeline: build a space, verify its hypotheses, minimize, certify.

Reports are JSON with every float written as 17 significant digits, so the
same config and seed give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .builders import BUILDERS, IfsSpec, build_pcf
from .errors import ConfigValidationError, HypothesisViolation, IncompleteReportError
from .functionals import ProductVariant, uncertainty_product
from .optimizer import OptimizerOptions, minimize_product
from .space import METRIC_SOURCES, MetricMeasureSpace, load_space
from .verifier import NASH_THEOREMS, THEOREMS, theorem_gamma, theorem_lower_bound, verify_space

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_DEGENERATE = 4
EXIT_CERTIFICATION = 5

C0_THEOREMS = ("resistance_bounded", "resistance_graph", "poincare_bounded")
CONFIG_KEYS = {"space", "metric_source", "theorems", "gamma", "theta", "C0", "k",
               "optimizer", "output", "seed", "sweep", "nash_restarts"}
OPTIMIZER_KEYS = {"starts", "max_iters", "tol"}
OUTPUT_KEYS = {"dir", "report", "residuals", "series"}


@dataclass
class ExperimentConfig:
    """Parsed experiment description; see ``validate_config`` for the rules."""

    space: dict
    theorems: list
    metric_source: Optional[str] = None
    gamma: Any = "auto"
    theta: Optional[float] = None
    C0: Any = None
    k: float = 2.0
    optimizer: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    sweep: Optional[dict] = None
    nash_restarts: int = 16

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        problems = validate_config(data)
        if problems:
            raise ConfigValidationError(problems)
        known = {k: v for k, v in data.items() if k in CONFIG_KEYS}
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "space": self.space, "metric_source": self.metric_source, "theorems": list(self.theorems),
            "gamma": self.gamma, "theta": self.theta, "C0": self.C0, "k": self.k,
            "optimizer": self.optimizer, "output": self.output, "seed": self.seed,
            "sweep": self.sweep, "nash_restarts": self.nash_restarts,
        }


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_config(config) -> list:
    """Every violated rule as a human-readable string; empty when valid."""
    if isinstance(config, ExperimentConfig):
        config = config.to_dict()
    if not isinstance(config, dict):
        return ["config must be a JSON object"]
    problems = []
    for key in sorted(set(config) - CONFIG_KEYS):
        problems.append(f"{key}: unknown field")

    space = config.get("space")
    if not isinstance(space, dict):
        problems.append("space: required object with 'builder' or 'path'")
    else:
        has_builder, has_path = "builder" in space, "path" in space
        if has_builder == has_path:
            problems.append("space: exactly one of 'builder' and 'path' is required")
        if has_builder and space["builder"] not in BUILDERS and space["builder"] != "pcf":
            problems.append(f"space.builder: unknown builder {space['builder']!r}")
        if "params" in space and not isinstance(space["params"], dict):
            problems.append("space.params: must be an object")

    ms = config.get("metric_source")
    if ms is not None and ms not in METRIC_SOURCES:
        problems.append(f"metric_source: must be one of {', '.join(METRIC_SOURCES)}")

    theorems = config.get("theorems")
    if not isinstance(theorems, list) or not theorems:
        problems.append("theorems: non-empty list required")
        theorems = []
    for t in theorems:
        if t not in THEOREMS:
            problems.append(f"theorems: unknown theorem {t!r}")

    gamma = config.get("gamma", "auto")
    if gamma != "auto" and not (_is_number(gamma) and gamma > 0):
        problems.append("gamma: must be 'auto' or a positive number")
    theta = config.get("theta")
    if theta is not None and not (_is_number(theta) and theta > 0):
        problems.append("theta: must be a positive number")
    if theta is None and any(t in NASH_THEOREMS for t in theorems):
        problems.append("theta: required by the selected Nash theorems")
    c0 = config.get("C0")
    if c0 is not None and c0 != "min_spacing" and not (_is_number(c0) and c0 > 0):
        problems.append("C0: must be a positive number or 'min_spacing'")
    if c0 is None and any(t in C0_THEOREMS for t in theorems):
        problems.append("C0: required by the selected bounded or graph theorems")
    k = config.get("k", 2.0)
    if not (_is_number(k) and k > 1):
        problems.append("k: must be a number greater than 1")

    opt = config.get("optimizer", {})
    if not isinstance(opt, dict):
        problems.append("optimizer: must be an object")
        opt = {}
    for key in sorted(set(opt) - OPTIMIZER_KEYS):
        problems.append(f"optimizer.{key}: unknown field")
    if "starts" in opt and not (_is_int(opt["starts"]) and opt["starts"] >= 0):
        problems.append("optimizer.starts: must be a nonnegative integer")
    if "max_iters" in opt and not (_is_int(opt["max_iters"]) and opt["max_iters"] >= 1):
        problems.append("optimizer.max_iters: must be a positive integer")
    if "tol" in opt and not (_is_number(opt["tol"]) and opt["tol"] > 0):
        problems.append("optimizer.tol: must be a positive number")

    out = config.get("output", {})
    if not isinstance(out, dict):
        problems.append("output: must be an object")
        out = {}
    for key in sorted(set(out) - OUTPUT_KEYS):
        problems.append(f"output.{key}: unknown field")
    for key in sorted(set(out) & OUTPUT_KEYS):
        if not isinstance(out[key], str):
            problems.append(f"output.{key}: must be a string")

    if not _is_int(config.get("seed", 0)):
        problems.append("seed: must be an integer")
    if not (_is_int(config.get("nash_restarts", 16)) and config.get("nash_restarts", 16) >= 0):
        problems.append("nash_restarts: must be a nonnegative integer")
    sweep = config.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or not isinstance(sweep.get("param"), str) \
                or not isinstance(sweep.get("values"), list) or not sweep["values"]:
            problems.append("sweep: needs 'param' (string) and a non-empty 'values' list")
        elif isinstance(space, dict) and "path" in space:
            problems.append("sweep: only valid with a builder space source")
    return problems


# ---------------------------------------------------------------- serialization

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, ProductVariant):
        return obj.value
    return obj


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if not obj:
        return "[]"
    if all(not isinstance(v, (dict, list)) for v in obj):
        return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
    items = [pad + _emit(v, indent, level + 1) for v in obj]
    return "[\n" + ",\n".join(items) + "\n" + end + "]"


def dumps(obj, indent: int = 1) -> str:
    """JSON text with floats at 17 significant digits; non-finite floats become null."""
    return _emit(_plain(obj), indent, 0) + "\n"


def write_residuals_csv(rows, fh, extra=None) -> None:
    """Residual table ``center,r,mu_ball,ratio``, optionally prefixed by one extra column."""
    w = csv.writer(fh, lineterminator="\n")
    head = ["center", "r", "mu_ball", "ratio"]
    w.writerow(([extra[0]] if extra else []) + head)
    for row in rows:
        prefix, (c, r, m, q) = (row[0], row[1:]) if extra else (None, row)
        vals = [str(c), format(r, ".17g"), format(m, ".17g"), format(q, ".17g")]
        w.writerow(([str(prefix)] if extra else []) + vals)


# ---------------------------------------------------------------- pipeline

def build_space(spec: dict, metric_source: Optional[str] = None) -> MetricMeasureSpace:
    """Space from a config ``space`` entry."""
    if "path" in spec:
        space = load_space(spec["path"])
    else:
        params = dict(spec.get("params", {}))
        if spec["builder"] == "pcf":
            space = build_pcf(IfsSpec.from_dict(params.pop("ifs")), **params)
        else:
            space = BUILDERS[spec["builder"]](**params)
    if metric_source is not None and metric_source != space.metric_source:
        space = space.with_metric(metric_source)
    return space


def space_summary(space: MetricMeasureSpace) -> dict:
    return {
        "n_vertices": space.n_vertices,
        "n_edges": int(space.edges.shape[0]),
        "metric_source": space.metric_source,
        "total_measure": space.total_measure,
        "diameter": space.diameter,
        "min_spacing": space.min_spacing(),
        "boundary_size": len(space.boundary),
        "metadata": space.metadata,
    }


def _resolve_c0(cfg, space):
    if cfg.C0 == "min_spacing":
        return space.min_spacing()
    return cfg.C0


def run_single(cfg: ExperimentConfig, space: MetricMeasureSpace) -> dict:
    """Verify one space and evaluate every selected theorem on it."""
    gamma_override = None if cfg.gamma == "auto" else float(cfg.gamma)
    rep = verify_space(space, gamma=gamma_override, k=cfg.k, theta=cfg.theta,
                       C0=_resolve_c0(cfg, space), restarts=cfg.nash_restarts, seed=cfg.seed)
    opts = dict(cfg.optimizer)
    rows = []
    for name in cfg.theorems:
        variant = THEOREMS[name]
        row = {"theorem": name, "variant": variant.value}
        try:
            bound = theorem_lower_bound(rep, name)
        except (HypothesisViolation, IncompleteReportError) as exc:
            bound, row["bound_error"] = None, str(exc)
        gamma = gamma_override if gamma_override is not None else theorem_gamma(rep, name)
        res = minimize_product(space, gamma, variant, OptimizerOptions(seed=cfg.seed, **opts))
        if bound is not None:
            res.attach_bound(bound)
        row.update({
            "gamma": gamma,
            "theorem_bound": bound,
            "product": res.product,
            "gap_ratio": res.gap_ratio,
            "certified": bound is not None and res.product >= bound,
            "degenerate": res.degenerate,
            "result": res.to_dict(),
        })
        rows.append(row)
    return {"space": space_summary(space), "hypotheses": rep.to_dict(), "theorems": rows,
            "residuals": rep.residuals}


def exit_code_for(runs) -> int:
    """4 when any minimum is degenerate, else 5 when any bound is violated, else 0."""
    rows = [row for run in runs for row in run["theorems"]]
    if any(row["degenerate"] for row in rows):
        return EXIT_DEGENERATE
    if any(row["theorem_bound"] is not None and not row["certified"] for row in rows):
        return EXIT_CERTIFICATION
    return EXIT_OK


def run_experiment(config, out_dir: Optional[str] = None) -> tuple:
    """Run the full pipeline and write the report files.

    Args:
        config: an ``ExperimentConfig`` or a plain dict.
        out_dir: overrides ``config.output.dir``.

    Returns:
        ``(report, exit_code, paths)``.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    problems = validate_config(cfg)
    if problems:
        raise ConfigValidationError(problems)
    out = {"dir": ".", "report": "report.json", "residuals": "residuals.csv", "series": "series.csv"}
    out.update(cfg.output)
    if out_dir is not None:
        out["dir"] = out_dir
    os.makedirs(out["dir"], exist_ok=True)

    runs = []
    values = cfg.sweep["values"] if cfg.sweep else [None]
    for value in values:
        spec = json.loads(json.dumps(cfg.space))
        if value is not None:
            spec.setdefault("params", {})[cfg.sweep["param"]] = value
        run = run_single(cfg, build_space(spec, cfg.metric_source))
        run["sweep_value"] = value
        runs.append(run)

    code = exit_code_for(runs)
    report = {
        "config": cfg.to_dict(),
        "runs": [{k: v for k, v in run.items() if k != "residuals"} for run in runs],
        "exit_code": code,
    }
    paths = {"report": os.path.join(out["dir"], out["report"]),
             "residuals": os.path.join(out["dir"], out["residuals"])}
    with open(paths["report"], "w") as fh:
        fh.write(dumps(report))
    with open(paths["residuals"], "w", newline="") as fh:
        if cfg.sweep:
            rows = [(run["sweep_value"],) + tuple(r) for run in runs for r in run["residuals"]]
            write_residuals_csv(rows, fh, extra=(cfg.sweep["param"],))
        else:
            write_residuals_csv(runs[0]["residuals"], fh)
    if cfg.sweep:
        paths["series"] = os.path.join(out["dir"], out["series"])
        with open(paths["series"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([cfg.sweep["param"], "theorem", "product", "theorem_bound", "gap_ratio", "certified"])
            for run in runs:
                for row in run["theorems"]:
                    fmt = [format(row[k], ".17g") if row[k] is not None else ""
                           for k in ("product", "theorem_bound", "gap_ratio")]
                    w.writerow([run["sweep_value"], row["theorem"], *fmt, str(row["certified"]).lower()])
    return report, code, paths


def recheck_certified(report: dict, space_for_run) -> list:
    """Recompute each certified row's product from its serialized minimizer.

    Args:
        report: a loaded report dict.
        space_for_run: callable mapping a run entry to its space.

    Returns:
        ``(theorem, product, bound)`` for every certified row that fails.
    """
    bad = []
    for run in report["runs"]:
        space = space_for_run(run)
        for row in run["theorems"]:
            if not row["certified"]:
                continue
            u = np.asarray(row["result"]["minimizer"], dtype=float)
            value = uncertainty_product(space, u, row["gamma"], row["variant"])
            if value < row["theorem_bound"]:
                bad.append((row["theorem"], value, row["theorem_bound"]))
    return bad
