"""JSON-Lines compound datasets.

One compound per line::

    {"id": "c1", "smiles": "CCO", "label": 1}
    {"id": "c2", "graph": {"atoms": [...], "bonds": [[0, 1, "single"]]}, "activity": 6.2}

Each line needs ``id``, one of ``smiles``/``graph`` and at least one of
``label`` (0/1) or ``activity`` (real).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .graph import GraphError, MolecularGraph
from .smiles import SmilesError, parse_smiles


class DatasetError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class DuplicateId(DatasetError):
    pass


@dataclass(frozen=True)
class CompoundRecord:
    id: str
    graph: MolecularGraph
    label: int | None = None
    activity: float | None = None
    smiles: str | None = None

    def __post_init__(self):
        if self.label is None and self.activity is None:
            raise DatasetError(f"record {self.id!r} has neither label nor activity")
        if self.label is not None and self.label not in (0, 1):
            raise DatasetError(f"record {self.id!r}: label must be 0 or 1, got {self.label!r}")

    def with_label(self, label: int) -> "CompoundRecord":
        return CompoundRecord(self.id, self.graph, label, self.activity, self.smiles)

    def to_json(self) -> dict:
        obj = {"id": self.id}
        if self.smiles is not None:
            obj["smiles"] = self.smiles
        else:
            obj["graph"] = self.graph.to_json()
        if self.label is not None:
            obj["label"] = self.label
        if self.activity is not None:
            obj["activity"] = self.activity
        return obj


def record_from_json(obj, line=None) -> CompoundRecord:
    if not isinstance(obj, dict):
        raise DatasetError("expected a JSON object", line)
    if "id" not in obj:
        raise DatasetError("missing 'id'", line)
    smiles = obj.get("smiles")
    try:
        if smiles is not None:
            graph = parse_smiles(smiles)
        elif "graph" in obj:
            graph = MolecularGraph.from_json(obj["graph"])
        else:
            raise DatasetError("needs 'smiles' or 'graph'", line)
    except (SmilesError, GraphError) as exc:
        raise DatasetError(str(exc), line) from exc
    label = obj.get("label")
    activity = obj.get("activity")
    if label is not None:
        if label not in (0, 1) or isinstance(label, bool):
            raise DatasetError(f"label must be 0 or 1, got {label!r}", line)
        label = int(label)
    if activity is not None:
        try:
            activity = float(activity)
        except (TypeError, ValueError):
            raise DatasetError(f"activity must be numeric, got {activity!r}", line) from None
    if label is None and activity is None:
        raise DatasetError("needs 'label' or 'activity'", line)
    return CompoundRecord(str(obj["id"]), graph, label, activity, smiles)


def load_dataset(path) -> list[CompoundRecord]:
    records, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"malformed JSON ({exc.msg})", lineno) from None
            rec = record_from_json(obj, lineno)
            if rec.id in seen:
                raise DuplicateId(f"duplicate id {rec.id!r}", lineno)
            seen.add(rec.id)
            records.append(rec)
    return records


def dumps_dataset(records) -> str:
    return "".join(json.dumps(r.to_json(), separators=(",", ":")) + "\n" for r in records)


def write_dataset(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_dataset(records))
