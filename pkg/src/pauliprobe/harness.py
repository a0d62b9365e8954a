"""Batch experiment runner: configuration, seeded execution and artifacts."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .channel import check_assumptions, min_eigenvalue
from .covering import MUB_CAP
from .errors import AssumptionFailure, CapExceeded, ConfigError
from .estimators import (
    DEFAULT_KAPPA,
    estimate_subset,
    reconstruct_group,
    sample_budget_group,
    sample_budget_sparse,
    tree_reconstruction,
)
from .factor_field import NU_BAR_CAP, canonical_estimator_pipeline, independent_set_schedule
from .io import decay_csv, dumps, graph_from_dict, model_from_dicts, records_jsonl
from .pauli import PauliGroup, PauliString, StabilizerGroup, parse_paulis
from .simulator import NoiseModel, ShotSampler

MODES = ("simulate", "estimate-group", "estimate-subset", "tree", "factored")
EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_ASSUMPTION = 0, 1, 2, 3
GROUP_QUBIT_CAP = 6
# rough single-core cost of one simulated shot, used only for runtime predictions
SECONDS_PER_SHOT = 2e-7
THREADS_ENV = "PAULI_PROBE_THREADS"


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment. ``channel``, ``spam`` and ``graph`` hold parsed JSON."""

    mode: str
    channel: dict
    spam: dict | None = None
    epsilon: float = 0.1
    delta: float = 0.05
    seed: int = 0
    workers: int = 1
    out: str | None = None
    force: bool = False
    graph: dict | None = None
    qubits: tuple[int, ...] | None = None
    targets: tuple[str, ...] | None = None
    m: int = 0
    shots: int | None = None
    u: int = 16
    s: int = 4
    records: bool = False

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if not (0 < self.epsilon <= 1) or not (0 < self.delta < 1):
            raise ConfigError("epsilon must lie in (0, 1] and delta in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned value")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.m < 0 or (self.shots is not None and self.shots < 1):
            raise ConfigError("m must be non-negative and shots positive")
        if self.u < 1 or self.s < 1 or self.s > self.u:
            raise ConfigError("need 1 <= s <= u")
        if self.mode == "factored" and self.graph is None:
            raise ConfigError("factored mode needs a factor graph")
        if self.mode == "estimate-subset" and not self.targets:
            raise ConfigError("estimate-subset needs targets")

    def hash(self) -> str:
        """Digest of every field that can change the results."""
        body = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("workers", "out", "force")}
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=list).encode()).hexdigest()

    def provenance(self) -> dict:
        return {"toolkit": "pauliprobe", "version": __version__, "config_hash": self.hash(), "mode": self.mode, "seed": self.seed}


@dataclass
class Artifacts:
    report: dict
    budget: dict
    decay: list[dict] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)

    def files(self) -> dict[str, str]:
        return {
            "report.json": dumps(self.report),
            "budget.json": dumps(self.budget),
            "decay.csv": decay_csv(self.decay),
            "records.jsonl": records_jsonl(self.records),
        }

    def write(self, out: str | Path) -> list[Path]:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in self.files().items():
            p = out / name
            p.write_text(text)
            paths.append(p)
        return paths


def _model(cfg: ExperimentConfig) -> NoiseModel:
    return model_from_dicts(cfg.channel, cfg.spam)


def _qubits(cfg: ExperimentConfig, n: int) -> tuple[int, ...]:
    qs = tuple(range(n)) if cfg.qubits is None else tuple(cfg.qubits)
    if not qs or any(q < 0 or q >= n for q in qs) or len(set(qs)) != len(qs):
        raise ConfigError("qubits must be distinct indices inside the register")
    return tuple(sorted(qs))


def _targets(cfg: ExperimentConfig, n: int) -> list[PauliString]:
    out = []
    for label in cfg.targets or ():
        if label == "weight1":
            out += [PauliString.single(n, q, c) for q in range(n) for c in "XYZ"]
        else:
            out.append(label)
    try:
        xs = parse_paulis(out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if any(p.n != n for p in xs):
        raise ConfigError("target length differs from the channel size")
    return list(dict.fromkeys(xs))


def _spam_floor(model: NoiseModel) -> list[float] | None:
    """Lower bound on the SPAM coefficients from the prep and measurement channels."""
    if model.prep is None and model.meas is None:
        return None
    a = 1.0
    for ch in (model.prep, model.meas):
        if ch is not None:
            a *= min_eigenvalue(ch)[0]
    return [a]


def assumptions(cfg: ExperimentConfig, model: NoiseModel) -> dict:
    rep = check_assumptions(model.gate, _spam_floor(model))
    out = dataclasses.asdict(rep)
    out["ok"] = rep.ok
    return out


def _require_assumptions(cfg: ExperimentConfig, model: NoiseModel) -> dict:
    rep = assumptions(cfg, model)
    if not rep["ok"] and not cfg.force:
        raise AssumptionFailure("noise is not 1/2-weak or SPAM is not 1/2-stable; pass --force to run anyway")
    return rep


def predict(cfg: ExperimentConfig) -> dict:
    """Sample budget implied by the configuration, without running anything."""
    cfg.check()
    model = _model(cfg)
    n = model.n
    k = DEFAULT_KAPPA
    if cfg.mode == "simulate":
        shots = cfg.shots or 1000
        out = {"t": shots, "kappa": 1, "rounds": 1, "total_measurements": shots}
    elif cfg.mode == "estimate-group":
        qs = _qubits(cfg, n)
        if len(qs) > GROUP_QUBIT_CAP or len(qs) > MUB_CAP:
            raise CapExceeded(f"estimate-group limited to {GROUP_QUBIT_CAP} qubits")
        groups = 2 ** len(qs) + 1
        out = sample_budget_group(cfg.epsilon, cfg.delta, 4 ** len(qs) - 1, k, groups).as_dict()
        out["groups"] = groups
    elif cfg.mode == "estimate-subset":
        probes, t = sample_budget_sparse(cfg.epsilon, cfg.delta, len(_targets(cfg, n)), k)
        out = {"t": t, "kappa": k, "probes": probes, "rounds": probes * k, "total_measurements": probes * k * t}
    elif cfg.mode == "tree":
        t = cfg.shots or sample_budget_group(cfg.epsilon, cfg.delta, cfg.u, k).t
        levels = max(1, math.ceil(math.log2(n))) + 1 if n > 1 else 1
        probes = n * cfg.u * 2
        out = {"t": t, "kappa": k, "levels": levels, "rounds_upper": probes * k, "total_measurements_upper": probes * k * t}
    else:
        graph = graph_from_dict(cfg.graph)
        if graph.n != n:
            raise ConfigError("graph and channel sizes differ")
        if graph.nu_bar > NU_BAR_CAP:
            raise CapExceeded(f"closure size {graph.nu_bar} exceeds cap {NU_BAR_CAP}")
        batches = len(independent_set_schedule(graph))
        t = sample_budget_group(cfg.epsilon / graph.N, cfg.delta, 4**graph.nu_bar - 1, k).t
        rounds = batches * (2**graph.nu_bar + 1) * k
        out = {"t": t, "kappa": k, "batches": batches, "rounds": rounds, "total_measurements": rounds * t}
    total = out.get("total_measurements") or out.get("total_measurements_upper")
    out["predicted_seconds"] = total * SECONDS_PER_SHOT * max(1.0, n / 8)
    return out


def validate(cfg: ExperimentConfig) -> dict:
    budget = predict(cfg)
    model = _model(cfg)
    return {"budget": budget, "assumptions": assumptions(cfg, model), "provenance": cfg.provenance()}


def _local_label(p: PauliString, qubits) -> str:
    return p.restrict(qubits).label


def _flag_counts(flags: dict) -> dict[str, int]:
    out: dict[str, int] = {}
    for f in flags.values():
        out[f] = out.get(f, 0) + 1
    return dict(sorted(out.items()))


def _pauli_entries(p_hat: dict[PauliString, float], res, label=str) -> dict[str, dict]:
    """Per-Pauli report rows; ``r_hat`` is null for Paulis that were not measured."""
    out = {}
    for p, v in p_hat.items():
        measured = p in res.r_hat
        if p.is_identity():
            out[label(p)] = {"p_hat": float(v), "r_hat": 0.0, "m_used": 0, "flags": "identity"}
            continue
        out[label(p)] = {
            "p_hat": float(v),
            "r_hat": res.r_hat[p] if measured else None,
            "m_used": res.m_used[p] if measured else None,
            "flags": res.flags[p] if measured else None,
        }
    return out


def _ratio_budget(res, sampler) -> dict:
    b = res.budget.as_dict()
    b["instrumented_measurements"] = sampler.measurements
    b["instrumented_rounds"] = sampler.rounds
    return b


def run(cfg: ExperimentConfig) -> Artifacts:
    """Run one experiment and return its artifacts (nothing is written)."""
    cfg.check()
    model = _model(cfg)
    n = model.n
    report: dict[str, Any] = {"provenance": cfg.provenance(), "n": n}
    if cfg.mode != "simulate":
        report["assumptions"] = _require_assumptions(cfg, model)
        predict(cfg)
    sampler = ShotSampler(model, seed=cfg.seed, record=cfg.records)
    decay: list[dict] = []

    if cfg.mode == "simulate":
        if cfg.targets:
            try:
                group = StabilizerGroup(parse_paulis(cfg.targets), n=n)
            except ValueError as exc:
                raise ConfigError(f"invalid stabilizer generators: {exc}") from exc
        else:
            group = StabilizerGroup([PauliString.single(n, q, "Z") for q in _qubits(cfg, n)], n=n)
        hist = sampler.histogram(group, group, cfg.m, cfg.shots or 1000, stream=(0,))
        report.update({"generators": [str(g) for g in group.basis], "m": cfg.m, "shots": hist.shots, "histogram": hist.labels()})
        budget = {"t": hist.shots, "rounds": sampler.rounds, "total_measurements": sampler.measurements}

    elif cfg.mode == "estimate-group":
        qs = _qubits(cfg, n)
        group = PauliGroup.full(n, qs)
        rec = reconstruct_group(group, sampler, epsilon=cfg.epsilon, delta=cfg.delta, workers=cfg.workers)
        table = rec.marginal.local_table(qs)
        labels = [PauliString.from_index(len(qs), i).label for i in range(len(table))]
        res = rec.ratio
        report.update(
            {
                "qubits": list(qs),
                "p_hat": dict(zip(labels, table.tolist())),
                "paulis": _pauli_entries(
                    {p.embed(n, qs): v for p, v in zip(map(PauliString.from_label, labels), table.tolist())},
                    res,
                    lambda p: _local_label(p, qs),
                ),
                "f_hat": {_local_label(p, qs): float(v) for p, v in zip(rec.f_hat.support, rec.f_hat.values)},
                "r_inf": rec.r_inf,
                "flags": _flag_counts(res.flags),
                "group_kappa": [list(k) for k in res.group_kappa],
            }
        )
        decay, budget = res.curve, _ratio_budget(res, sampler)

    elif cfg.mode == "estimate-subset":
        targets = _targets(cfg, n)
        sub = estimate_subset(targets, cfg.epsilon, cfg.delta, sampler, workers=cfg.workers)
        res = sub.ratio
        report.update(
            {
                "p_hat": {str(p): v for p, v in sub.p_hat.items()},
                "paulis": _pauli_entries(sub.p_hat, res),
                "probes": len(sub.probes),
                "flags": _flag_counts(res.flags),
            }
        )
        decay, budget = res.curve, _ratio_budget(res, sampler)
        budget["probes"] = len(sub.probes)

    elif cfg.mode == "tree":
        t = cfg.shots or sample_budget_group(cfg.epsilon, cfg.delta, cfg.u, DEFAULT_KAPPA).t
        tree = tree_reconstruction(n, cfg.u, cfg.s, t, sampler, workers=cfg.workers)
        report.update(
            {
                "u": cfg.u,
                "s": cfg.s,
                "t": t,
                "selected": [str(p) for p in tree.selected],
                "p_hat": {str(p): v for p, v in sorted(tree.p_hat.items(), key=lambda kv: kv[0].index)},
                "levels": [{"sets": len(lv.sets), "probes": lv.probes, "measurements": lv.measurements} for lv in tree.levels],
            }
        )
        budget = {"t": t, "rounds": sampler.rounds, "total_measurements": tree.measurements, "instrumented_measurements": sampler.measurements}

    else:
        graph = graph_from_dict(cfg.graph)
        if graph.n != n:
            raise ConfigError("graph and channel sizes differ")
        pipe = canonical_estimator_pipeline(graph, cfg.epsilon, cfg.delta, sampler, estimate_p0=True, workers=cfg.workers)
        report.update(pipe.estimate.as_dict())
        report.update(
            {
                "graph": graph.as_dict(),
                "schedule": [[list(c) for c in batch] for batch in pipe.schedule],
                "diagnostics": pipe.diagnostics.as_dict(),
                "clamped": pipe.estimate.clamped,
            }
        )
        budget = {"t": pipe.t, "rounds": sampler.rounds, "total_measurements": pipe.measurements, "instrumented_measurements": sampler.measurements}

    report["budget"] = dict(budget)
    budget = dict(budget, provenance=cfg.provenance())
    return Artifacts(report=_plain(report), budget=_plain(budget), decay=decay, records=sampler.sorted_records())


def _plain(obj):
    """Recursively convert numpy scalars so the JSON encoder accepts them."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
