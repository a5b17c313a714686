"""Vehicle owner registry backed by a CSV file (plate,owner_name,phone,email,vehicle_details)."""

from __future__ import annotations

import csv
import threading
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

FIELDS = ("plate", "owner_name", "phone", "email", "vehicle_details")


class RegistryError(ValueError):
    pass


class NotFound(KeyError):
    pass


def canonical_plate(plate: str) -> str:
    return "".join(plate.upper().split()).replace("-", "")


@dataclass(frozen=True)
class RegistryEntry:
    plate: str
    owner_name: str
    phone: str
    email: str = ""
    vehicle_details: str = ""

    def __post_init__(self):
        if not self.phone.strip():
            raise RegistryError(f"registry entry for {self.plate!r} has no phone number")

    def to_dict(self) -> dict[str, str]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Registry:
    """Read-mostly plate -> owner map. `reload` swaps in a new snapshot atomically."""

    def __init__(self, entries: Iterable[RegistryEntry] = (), path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._snapshot: Mapping[str, RegistryEntry] = self._index(entries)

    @staticmethod
    def _index(entries: Iterable[RegistryEntry]) -> Mapping[str, RegistryEntry]:
        table: dict[str, RegistryEntry] = {}
        for e in entries:
            key = canonical_plate(e.plate)
            if key in table:
                raise RegistryError(f"duplicate plate {key!r} in registry")
            table[key] = e
        return MappingProxyType(table)

    def __len__(self) -> int:
        return len(self._snapshot)

    def __iter__(self):
        return iter(self._snapshot.values())

    def lookup(self, plate: str) -> RegistryEntry:
        try:
            return self._snapshot[canonical_plate(plate)]
        except KeyError:
            raise NotFound(plate) from None

    def get(self, plate: str) -> RegistryEntry | None:
        return self._snapshot.get(canonical_plate(plate))

    @classmethod
    def load(cls, path: str | Path) -> "Registry":
        return cls(read_entries(path), path=path)

    def reload(self) -> None:
        if self.path is None:
            raise RegistryError("registry was not loaded from a file")
        snapshot = self._index(read_entries(self.path))
        with self._lock:
            self._snapshot = snapshot

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(FIELDS)
            for e in self._snapshot.values():
                writer.writerow(astuple(e))


def read_entries(path: str | Path) -> list[RegistryEntry]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames[: len(FIELDS)]) != list(FIELDS):
            raise RegistryError(f"{path}: header must be {','.join(FIELDS)}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            try:
                entries.append(RegistryEntry(**{k: row[k] or "" for k in FIELDS}))
            except RegistryError as exc:
                raise RegistryError(f"{path}:{lineno}: {exc}") from None
        return entries


def lookup_owner(plate: str, registry: Registry) -> RegistryEntry:
    return registry.lookup(plate)
