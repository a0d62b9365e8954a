"""JSON, CSV and JSON-lines formats for channels, graphs and reports.

Channel specification::

    {"n": 4, "type": "factored", "depolarizing": 0.01,
     "factors": [{"qubits": [0, 1], "rates": {"ZZ": 0.02}},
                 {"qubits": [2], "probs": [0.97, 0.01, 0.01, 0.01]}]}
    {"n": 2, "type": "dense", "probs": [...16 values...]}
    {"n": 50, "type": "sparse", "rates": {"XII...": 0.01}}
    {"n": 8, "type": "chain", "pair": {"rates": {"ZZ": 0.01}, "depolarizing": 0.005}}

``"repr"`` is accepted as an alias of ``"type"``. The ``chain`` type builds a
stationary Markov chain from a two-qubit pair channel (dense, ``n <= 10``).

SPAM specification: ``{"prep": <channel>, "meas": <channel>}``, both optional.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .channel import DenseChannel, FactoredChannel, LocalTable, PauliChannel, SparseChannel, depolarizing, local_rates
from .errors import ConfigError
from .factor_field import FactorGraph, chain_field
from .simulator import NoiseModel

CSV_FIELDS = ("pauli", "m", "v_hat", "t", "group_id")


def _need(spec: Mapping, key: str):
    if key not in spec:
        raise ConfigError(f"missing key {key!r}")
    return spec[key]


def _local(entry: Mapping) -> LocalTable:
    qubits = tuple(int(q) for q in _need(entry, "qubits"))
    if "probs" in entry:
        return LocalTable(qubits, np.asarray(entry["probs"], float))
    return local_rates(qubits, {str(k): float(v) for k, v in _need(entry, "rates").items()})


def _pair_table(spec: Mapping) -> np.ndarray:
    factors = [_local({"qubits": [0, 1], **{k: v for k, v in spec.items() if k in ("rates", "probs")}})]
    if spec.get("depolarizing"):
        factors += list(depolarizing(2, float(spec["depolarizing"])).factors)
    return FactoredChannel(2, factors).dense_rates().reshape(4, 4)


def channel_from_dict(spec: Mapping) -> PauliChannel:
    """Build a channel from its JSON form; raises :class:`ConfigError` on bad input."""
    try:
        n = int(_need(spec, "n"))
        kind = spec.get("type", spec.get("repr", "factored"))
        if kind == "dense":
            return DenseChannel(n, np.asarray(_need(spec, "probs"), float))
        if kind == "sparse":
            return SparseChannel(n, {str(k): float(v) for k, v in _need(spec, "rates").items()})
        if kind == "factored":
            factors = [_local(e) for e in spec.get("factors", [])]
            if spec.get("depolarizing"):
                factors += list(depolarizing(n, float(spec["depolarizing"])).factors)
            if not factors:
                factors = list(depolarizing(n, 0.0).factors)
            return FactoredChannel(n, factors)
        if kind == "chain":
            return chain_field(n, _pair_table(_need(spec, "pair"))).to_channel()
        raise ConfigError(f"unknown channel type {kind!r}")
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid channel specification: {exc}") from exc


def channel_to_dict(ch: PauliChannel) -> dict:
    if isinstance(ch, FactoredChannel):
        return {
            "n": ch.n,
            "type": "factored",
            "factors": [{"qubits": list(f.qubits), "probs": f.probs.tolist()} for f in ch.factors],
        }
    if isinstance(ch, SparseChannel):
        return {"n": ch.n, "type": "sparse", "rates": {str(p): float(r) for p, r in zip(ch.support, ch.probs)}}
    return {"n": ch.n, "type": "dense", "probs": ch.dense_rates().tolist()}


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def load_channel(path: str | Path) -> PauliChannel:
    return channel_from_dict(load_json(path))


def model_from_dicts(channel: Mapping, spam: Mapping | None = None) -> NoiseModel:
    gate = channel_from_dict(channel)
    spam = spam or {}
    prep = channel_from_dict(spam["prep"]) if spam.get("prep") else None
    meas = channel_from_dict(spam["meas"]) if spam.get("meas") else None
    for ch in (prep, meas):
        if ch is not None and ch.n != gate.n:
            raise ConfigError("SPAM channels act on a different number of qubits")
    return NoiseModel(gate, prep, meas)


def graph_from_dict(spec: Mapping) -> FactorGraph:
    try:
        return FactorGraph(int(_need(spec, "n")), tuple(tuple(int(v) for v in c) for c in _need(spec, "factors")))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid factor graph: {exc}") from exc


def graph_to_dict(graph: FactorGraph) -> dict:
    return graph.as_dict()


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=1, separators=(",", ": "), allow_nan=True) + "\n"


def decay_csv(rows: Iterable[Mapping]) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(r[k])) if k == "v_hat" else r[k]) for k in CSV_FIELDS})
    return buf.getvalue()


def read_decay_csv(text: str) -> list[dict]:
    out = []
    for r in csv.DictReader(_io.StringIO(text)):
        out.append({"pauli": r["pauli"], "m": int(r["m"]), "v_hat": float(r["v_hat"]), "t": int(r["t"]), "group_id": int(r["group_id"])})
    return out


def records_jsonl(records: Iterable[Mapping]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def read_records_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
