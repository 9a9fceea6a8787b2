"""Interaction logs, behavior windows, chronological splits, negative sampling.

File formats:
  interactions  TSV  user_id <tab> item_id <tab> timestamp <tab> label
  profiles      TSV  entity_kind <tab> entity_id <tab> field_id <tab> kind <tab> value
  instances     JSON Lines, one instance per line

All functions are pure over their inputs and return deterministically
ordered results (user id ascending, then timestamp, then input order).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SPARSE = "sparse"
NUMERICAL = "numerical"


class SchemaError(ValueError):
    """A data file row violates its schema; carries line/field location."""

    def __init__(self, path, line_no, field_no, message):
        super().__init__(f"{path}: line {line_no}, field {field_no}: {message}")
        self.line_no = line_no
        self.field_no = field_no


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    timestamp: int
    label: int


@dataclass(frozen=True)
class FeatureValue:
    field_id: str
    kind: str  # SPARSE or NUMERICAL
    value: str | float

    def to_json(self) -> dict:
        return {"field": self.field_id, "kind": self.kind, "value": self.value}

    @staticmethod
    def from_json(obj: dict) -> "FeatureValue":
        return FeatureValue(obj["field"], obj["kind"], obj["value"])


@dataclass
class Instance:
    """One labeled (user, target item) example with its behavior window."""

    user: str
    target: str
    behaviors: list[str]
    label: int
    user_features: list[FeatureValue] = field(default_factory=list)
    target_features: list[FeatureValue] = field(default_factory=list)
    timestamp: int = 0

    def to_json(self) -> dict:
        return {
            "user": self.user,
            "target": self.target,
            "behaviors": list(self.behaviors),
            "label": self.label,
            "user_features": [f.to_json() for f in self.user_features],
            "target_features": [f.to_json() for f in self.target_features],
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_json(obj: dict) -> "Instance":
        return Instance(
            user=obj["user"],
            target=obj["target"],
            behaviors=list(obj["behaviors"]),
            label=int(obj["label"]),
            user_features=[FeatureValue.from_json(f) for f in obj.get("user_features", [])],
            target_features=[FeatureValue.from_json(f) for f in obj.get("target_features", [])],
            timestamp=int(obj.get("timestamp", 0)),
        )


@dataclass
class Dataset:
    instances: list[Instance]
    role: str  # "train" | "test" | "graph-source"


def parse_interactions(path) -> list[Interaction]:
    """Read an interactions TSV; malformed rows raise, they are never skipped."""
    out: list[Interaction] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line == "":
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise SchemaError(path, line_no, len(parts), f"expected 4 tab-separated fields, got {len(parts)}")
            user, item, ts_raw, label_raw = parts
            if not user:
                raise SchemaError(path, line_no, 1, "empty user id")
            if not item:
                raise SchemaError(path, line_no, 2, "empty item id")
            try:
                ts = int(ts_raw)
            except ValueError:
                raise SchemaError(path, line_no, 3, f"timestamp {ts_raw!r} is not an integer") from None
            if ts < 0:
                raise SchemaError(path, line_no, 3, f"timestamp {ts} is negative")
            if label_raw not in ("0", "1"):
                raise SchemaError(path, line_no, 4, f"label {label_raw!r} is not 0 or 1")
            out.append(Interaction(user, item, ts, int(label_raw)))
    return out


def write_interactions(path, interactions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in interactions:
            fh.write(f"{it.user}\t{it.item}\t{it.timestamp}\t{it.label}\n")


@dataclass
class ProfileStore:
    """Per-entity feature lists plus the per-kind field schema (sorted field ids)."""

    user_features: dict[str, list[FeatureValue]]
    item_features: dict[str, list[FeatureValue]]
    user_fields: list[str]
    item_fields: list[str]

    def features_for(self, entity_kind: str, entity_id: str) -> list[FeatureValue]:
        table = self.user_features if entity_kind == "user" else self.item_features
        return table.get(entity_id, [])


def parse_profiles(path) -> ProfileStore:
    users: dict[str, dict[str, FeatureValue]] = {}
    items: dict[str, dict[str, FeatureValue]] = {}
    user_fields: set[str] = set()
    item_fields: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line == "":
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise SchemaError(path, line_no, len(parts), f"expected 5 tab-separated fields, got {len(parts)}")
            entity_kind, entity_id, field_id, kind, value = parts
            if entity_kind not in ("user", "item"):
                raise SchemaError(path, line_no, 1, f"unknown entity kind {entity_kind!r}")
            if kind not in (SPARSE, NUMERICAL):
                raise SchemaError(path, line_no, 4, f"unknown feature kind {kind!r}")
            if kind == NUMERICAL:
                try:
                    parsed: str | float = float(value)
                except ValueError:
                    raise SchemaError(path, line_no, 5, f"numerical value {value!r} is not a number") from None
                if not np.isfinite(parsed):
                    raise SchemaError(path, line_no, 5, f"numerical value {value!r} is not finite")
            else:
                parsed = value
            table, fields = (users, user_fields) if entity_kind == "user" else (items, item_fields)
            table.setdefault(entity_id, {})[field_id] = FeatureValue(field_id, kind, parsed)
            fields.add(field_id)
    return ProfileStore(
        user_features={e: [fv for _, fv in sorted(d.items())] for e, d in users.items()},
        item_features={e: [fv for _, fv in sorted(d.items())] for e, d in items.items()},
        user_fields=sorted(user_fields),
        item_fields=sorted(item_fields),
    )


def write_profiles(path, rows) -> None:
    """rows: iterable of (entity_kind, entity_id, field_id, kind, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        for entity_kind, entity_id, field_id, kind, value in rows:
            fh.write(f"{entity_kind}\t{entity_id}\t{field_id}\t{kind}\t{value}\n")


def build_instances(log, max_behaviors: int = 10, profiles: ProfileStore | None = None) -> list[Instance]:
    """One instance per log row; behaviors are the user's most recent clicks.

    The window holds at most ``max_behaviors`` items the user clicked
    (label 1) strictly before the row's timestamp, oldest first, never
    including the row's own target item. Timestamp ties break by input order.
    """
    by_user: dict[str, list[tuple[int, int, Interaction]]] = {}
    for pos, it in enumerate(log):
        by_user.setdefault(it.user, []).append((it.timestamp, pos, it))

    out: list[Instance] = []
    for user in sorted(by_user):
        rows = sorted(by_user[user])
        clicks: list[tuple[int, str]] = []  # (timestamp, item), in row order
        for ts, _pos, it in rows:
            window = [item for (cts, item) in clicks if cts < ts and item != it.item]
            out.append(
                Instance(
                    user=user,
                    target=it.item,
                    behaviors=window[-max_behaviors:],
                    label=it.label,
                    user_features=profiles.features_for("user", user) if profiles else [],
                    target_features=profiles.features_for("item", it.item) if profiles else [],
                    timestamp=ts,
                )
            )
            if it.label == 1:
                clicks.append((ts, it.item))
    return out


def chronological_split(instances, test_tail: int, train_window: int):
    """Per user: last ``test_tail`` to test, preceding ``train_window`` to train,
    the rest (and all of any user with fewer than ``test_tail`` instances) to
    graph-source."""
    by_user: dict[str, list[Instance]] = {}
    for inst in instances:
        by_user.setdefault(inst.user, []).append(inst)

    train: list[Instance] = []
    test: list[Instance] = []
    graph_source: list[Instance] = []
    for user in sorted(by_user):
        rows = by_user[user]
        if len(rows) < test_tail:
            graph_source.extend(rows)
            continue
        test.extend(rows[len(rows) - test_tail:])
        head = rows[: len(rows) - test_tail]
        train.extend(head[max(0, len(head) - train_window):])
        graph_source.extend(head[: max(0, len(head) - train_window)])
    return Dataset(train, "train"), Dataset(test, "test"), Dataset(graph_source, "graph-source")


@dataclass
class NegativeSamplingResult:
    instances: list[Instance]  # positives interleaved with their negatives
    exhausted_pools: int  # positives whose eligible pool was smaller than ratio


def negative_sample(
    positives,
    item_pool,
    ratio: int,
    seed: int,
    interacted_by_user: dict[str, set[str]] | None = None,
    item_features: dict[str, list[FeatureValue]] | None = None,
) -> NegativeSamplingResult:
    """For each positive, draw ``ratio`` distinct negative targets the user never
    interacted with, copying the positive's profile and behavior window."""
    if ratio < 1:
        raise ValueError(f"negative sampling ratio must be >= 1, got {ratio}")
    rng = np.random.default_rng(seed)
    pool = sorted(item_pool)
    interacted_by_user = interacted_by_user or {}
    item_features = item_features or {}

    out: list[Instance] = []
    exhausted = 0
    for pos in positives:
        blocked = interacted_by_user.get(pos.user, set())
        eligible = [i for i in pool if i not in blocked and i != pos.target]
        n = min(ratio, len(eligible))
        if n < ratio:
            exhausted += 1
        out.append(pos)
        if n == 0:
            continue
        picks = rng.choice(len(eligible), size=n, replace=False)
        for k in sorted(int(p) for p in picks):
            item = eligible[k]
            out.append(
                Instance(
                    user=pos.user,
                    target=item,
                    behaviors=list(pos.behaviors),
                    label=0,
                    user_features=list(pos.user_features),
                    target_features=item_features.get(item, []),
                    timestamp=pos.timestamp,
                )
            )
    return NegativeSamplingResult(out, exhausted)


def write_instances(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), separators=(",", ":")) + "\n")


def read_instances(path) -> list[Instance]:
    out: list[Instance] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Instance.from_json(json.loads(line)))
    return out
