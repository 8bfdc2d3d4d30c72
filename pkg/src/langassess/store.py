"""Append-only entity store: JSON-lines log plus periodic snapshots.

Every mutation is appended to ``log.jsonl`` before it is acknowledged, so a
crash can never lose an acknowledged write.  ``snapshot()`` persists the full
state together with the log offset it covers; reopening loads the snapshot
and replays only the log suffix.  A torn trailing record stops recovery at
the last valid record and reports the offset of the damage.

In deterministic mode, ids and timestamps come from a logical counter instead
of the wall clock, which makes two runs of the same operation sequence
produce byte-identical stores.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable


class StoreError(Exception):
    """Base class for persistence failures."""


class NotFoundError(StoreError):
    pass


class IdCollisionError(StoreError):
    pass


class ConflictError(StoreError):
    """Compare-and-set version mismatch."""


@dataclass(frozen=True)
class EntityEnvelope:
    entity_id: str
    kind: str
    version: int
    payload: Any
    created: float
    updated: float

    def __post_init__(self) -> None:
        if self.version < 1:
            raise ValueError("version must be >= 1")

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "kind": self.kind,
            "version": self.version,
            "payload": self.payload,
            "created": self.created,
            "updated": self.updated,
        }

    @staticmethod
    def from_dict(record: dict) -> "EntityEnvelope":
        return EntityEnvelope(
            entity_id=str(record["entity_id"]),
            kind=str(record["kind"]),
            version=int(record["version"]),
            payload=record["payload"],
            created=float(record["created"]),
            updated=float(record["updated"]),
        )


def _canonical(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class Store:
    """Keyed entity storage with an append-only log and snapshot recovery."""

    SNAPSHOT = "snapshot.json"
    LOG = "log.jsonl"

    def __init__(self, root: str | Path | None = None, *, deterministic: bool = False):
        self._root = Path(root) if root is not None else None
        self.deterministic = deterministic
        self._entities: dict[str, EntityEnvelope] = {}
        self._seq = 0
        self._log_offset = 0
        self.recovered_offset: int | None = None
        self._lock = threading.RLock()
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- clock and ids ----------------------------------------------------

    def _tick(self) -> int:
        self._seq += 1
        return self._seq

    def _now(self, seq: int) -> float:
        return float(seq) if self.deterministic else time.time()

    def _new_id(self, seq: int) -> str:
        if self.deterministic:
            return f"e{seq:010d}"
        # millisecond prefix for time ordering, sequence for sub-millisecond
        # ordering, random suffix for uniqueness across store instances
        return f"{int(time.time() * 1000):013d}-{seq:08d}-{secrets.token_hex(4)}"

    def next_timestamp(self) -> float:
        """Logical timestamp source for collaborators (review decisions etc.)."""
        with self._lock:
            return self._now(self._tick())

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        snapshot_path = self._root / self.SNAPSHOT
        if snapshot_path.exists():
            snapshot = json.loads(snapshot_path.read_text(encoding="utf-8"))
            self._entities = {
                e["entity_id"]: EntityEnvelope.from_dict(e) for e in snapshot["entities"]
            }
            self._seq = int(snapshot["seq"])
            self._log_offset = int(snapshot["log_offset"])
        log_path = self._root / self.LOG
        if not log_path.exists():
            self._log_offset = 0
            return
        with log_path.open("rb") as fh:
            fh.seek(self._log_offset)
            position = self._log_offset
            while True:
                line = fh.readline()
                if not line:
                    break
                if not line.endswith(b"\n"):
                    # torn trailing write
                    self.recovered_offset = position
                    break
                try:
                    record = json.loads(line.decode("utf-8"))
                    envelope = EntityEnvelope.from_dict(record["envelope"])
                    seq = int(record["seq"])
                except (ValueError, KeyError, UnicodeDecodeError):
                    self.recovered_offset = position
                    break
                self._entities[envelope.entity_id] = envelope
                self._seq = max(self._seq, seq)
                position += len(line)
            self._log_offset = position

    def _append(self, seq: int, envelope: EntityEnvelope) -> None:
        if self._root is None:
            return
        line = _canonical({"seq": seq, "envelope": envelope.to_dict()}) + "\n"
        with (self._root / self.LOG).open("ab") as fh:
            fh.write(line.encode("utf-8"))
            fh.flush()
        self._log_offset += len(line.encode("utf-8"))

    def snapshot(self) -> None:
        """Persist the full state; subsequent reopens replay only newer log records."""
        if self._root is None:
            return
        with self._lock:
            payload = {
                "entities": [e.to_dict() for e in self._ordered()],
                "seq": self._seq,
                "log_offset": self._log_offset,
            }
            tmp = self._root / (self.SNAPSHOT + ".tmp")
            tmp.write_text(_canonical(payload) + "\n", encoding="utf-8")
            tmp.replace(self._root / self.SNAPSHOT)

    # -- operations -------------------------------------------------------

    def put(self, kind: str, payload: Any, entity_id: str | None = None) -> EntityEnvelope:
        """Create a new entity; supplying an existing id is a collision error."""
        json.dumps(payload)  # payload must be serializable up front
        with self._lock:
            seq = self._tick()
            eid = entity_id if entity_id is not None else self._new_id(seq)
            if eid in self._entities:
                raise IdCollisionError(f"entity id {eid!r} already exists")
            now = self._now(seq)
            envelope = EntityEnvelope(eid, kind, 1, payload, now, now)
            self._entities[eid] = envelope
            self._append(seq, envelope)
            return envelope

    def update(
        self, entity_id: str, payload: Any, expect_version: int | None = None
    ) -> EntityEnvelope:
        """Replace an entity's payload; versions advance by exactly one."""
        json.dumps(payload)
        with self._lock:
            current = self._entities.get(entity_id)
            if current is None:
                raise NotFoundError(f"no entity {entity_id!r}")
            if expect_version is not None and current.version != expect_version:
                raise ConflictError(
                    f"version conflict on {entity_id!r}: "
                    f"have {current.version}, caller expected {expect_version}"
                )
            seq = self._tick()
            envelope = EntityEnvelope(
                entity_id=current.entity_id,
                kind=current.kind,
                version=current.version + 1,
                payload=payload,
                created=current.created,
                updated=self._now(seq),
            )
            self._entities[entity_id] = envelope
            self._append(seq, envelope)
            return envelope

    def get(self, entity_id: str) -> EntityEnvelope:
        with self._lock:
            envelope = self._entities.get(entity_id)
            if envelope is None:
                raise NotFoundError(f"no entity {entity_id!r}")
            return envelope

    def exists(self, entity_id: str) -> bool:
        with self._lock:
            return entity_id in self._entities

    def _ordered(self) -> list[EntityEnvelope]:
        return [self._entities[k] for k in sorted(self._entities)]

    def list(
        self, kind: str | None = None, after: str | None = None, limit: int | None = None
    ) -> list[EntityEnvelope]:
        """Entities sorted by id; ``after`` and ``limit`` give stable pagination."""
        with self._lock:
            out = [
                e
                for e in self._ordered()
                if (kind is None or e.kind == kind) and (after is None or e.entity_id > after)
            ]
        return out[:limit] if limit is not None else out

    def state_bytes(self) -> bytes:
        """Canonical serialization of the full state, for equivalence checks."""
        with self._lock:
            return (
                _canonical({"entities": [e.to_dict() for e in self._ordered()], "seq": self._seq})
            ).encode("utf-8")


def put_many(store: Store, kind: str, payloads: Iterable[Any]) -> list[EntityEnvelope]:
    return [store.put(kind, p) for p in payloads]
