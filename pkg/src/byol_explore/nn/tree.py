"""Named collections of float64 arrays."""

from __future__ import annotations

from typing import Callable, Iterator, Mapping

import numpy as np

from byol_explore.errors import ConfigurationError


class ParameterTree(Mapping[str, np.ndarray]):
    """Flat mapping from slash-separated names to float64 arrays.

    Hierarchy lives in the names (``"encoder/l0/w"``); ``sub`` and ``scope``
    give prefix views. Arrays are treated as immutable: every update builds a
    new tree, so holding a reference to an old tree is always safe.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[str, np.ndarray] | None = None):
        self._entries: dict[str, np.ndarray] = {}
        for name, value in (entries or {}).items():
            self._entries[name] = np.asarray(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._entries[name]
        except KeyError:
            raise ConfigurationError(f"no parameter named {name!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}{list(v.shape)}" for k, v in self._entries.items())
        return f"ParameterTree({shapes})"

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self._entries.values()))

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._entries.items()}

    def is_congruent(self, other: Mapping[str, np.ndarray]) -> bool:
        if set(self._entries) != set(other):
            return False
        return all(np.shape(other[k]) == v.shape for k, v in self._entries.items())

    def check_congruent(self, other: Mapping[str, np.ndarray], what: str = "trees") -> None:
        mine, theirs = set(self._entries), set(other)
        if mine != theirs:
            diff = sorted(mine.symmetric_difference(theirs))
            raise ConfigurationError(f"{what} are not congruent: names differ at {diff[:5]}")
        for k, v in self._entries.items():
            if np.shape(other[k]) != v.shape:
                raise ConfigurationError(
                    f"{what} are not congruent: {k!r} has shape {np.shape(other[k])}, expected {v.shape}"
                )

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> ParameterTree:
        return ParameterTree({k: fn(v) for k, v in self._entries.items()})

    def zip_map(self, other: Mapping[str, np.ndarray], fn) -> ParameterTree:
        self.check_congruent(other)
        return ParameterTree({k: fn(v, other[k]) for k, v in self._entries.items()})

    def zeros_like(self) -> ParameterTree:
        return self.map(np.zeros_like)

    def copy(self) -> ParameterTree:
        return self.map(np.copy)

    def sub(self, prefix: str) -> ParameterTree:
        """Entries under ``prefix/`` with the prefix stripped (arrays shared)."""
        head = prefix.rstrip("/") + "/"
        return ParameterTree({k[len(head):]: v for k, v in self._entries.items() if k.startswith(head)})

    def with_prefix(self, prefix: str) -> ParameterTree:
        head = prefix.rstrip("/") + "/"
        return ParameterTree({head + k: v for k, v in self._entries.items()})

    def replace(self, updates: Mapping[str, np.ndarray]) -> ParameterTree:
        """New tree with some entries swapped; shapes must be preserved."""
        entries = dict(self._entries)
        for k, v in updates.items():
            if k not in entries:
                raise ConfigurationError(f"no parameter named {k!r}")
            if np.shape(v) != entries[k].shape:
                raise ConfigurationError(f"shape change for {k!r}: {np.shape(v)} vs {entries[k].shape}")
            entries[k] = v
        return ParameterTree(entries)

    def flatten(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._entries.values()])

    def unflatten(self, flat: np.ndarray) -> ParameterTree:
        out, i = {}, 0
        for k, v in self._entries.items():
            out[k] = np.asarray(flat[i:i + v.size], dtype=np.float64).reshape(v.shape)
            i += v.size
        if i != flat.size:
            raise ConfigurationError(f"flat vector has {flat.size} entries, tree needs {i}")
        return ParameterTree(out)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self._entries.values())

    def equal(self, other: Mapping[str, np.ndarray]) -> bool:
        """Bitwise equality of names, shapes and values."""
        return self.is_congruent(other) and all(
            np.array_equal(v, other[k]) for k, v in self._entries.items()
        )

    @staticmethod
    def merge(parts: Mapping[str, Mapping[str, np.ndarray]]) -> ParameterTree:
        entries: dict[str, np.ndarray] = {}
        for prefix, tree in parts.items():
            for k, v in tree.items():
                entries[f"{prefix}/{k}"] = v
        return ParameterTree(entries)


class Scope:
    """Prefix view over any name->array mapping (trees or taped variables)."""

    __slots__ = ("mapping", "prefix")

    def __init__(self, mapping, prefix: str = ""):
        self.mapping = mapping
        self.prefix = prefix

    def _key(self, name: str) -> str:
        return f"{self.prefix}/{name}" if self.prefix else name

    def __getitem__(self, name: str):
        key = self._key(name)
        try:
            return self.mapping[key]
        except KeyError:
            raise ConfigurationError(f"no parameter named {key!r}") from None

    def __contains__(self, name: str) -> bool:
        return self._key(name) in self.mapping

    def child(self, name: str) -> Scope:
        return Scope(self.mapping, self._key(name))

    def __repr__(self) -> str:
        return f"Scope({self.prefix!r})"
