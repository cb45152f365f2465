from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from subnet_forge.exceptions import LayoutError, ShapeError

EntryLayout = Tuple[str, Tuple[int, ...], bool]


class ParameterStore:
    """Ordered, named collection of parameter arrays (θ).

    Scalars are enumerated globally by entry insertion order and then row-major
    within each entry, which gives the flat index used for tie-breaking and
    serialization.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._entries: Dict[str, np.ndarray] = {}
        self._prunable: Dict[str, bool] = {}

    def add(self, name: str, values, prunable: bool = True) -> None:
        if name in self._entries:
            raise LayoutError(f"Duplicate parameter name: {name}")
        array = np.array(values, dtype=self.dtype, copy=True)
        if array.ndim == 0 or 0 in array.shape:
            raise ShapeError(f"Parameter {name} needs positive extents, got shape {array.shape}")
        self._entries[name] = array
        self._prunable[name] = bool(prunable)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> List[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def is_prunable(self, name: str) -> bool:
        return self._prunable[name]

    def prunable_names(self) -> List[str]:
        return [name for name in self._entries if self._prunable[name]]

    def set(self, name: str, values: np.ndarray) -> None:
        current = self._entries[name]
        if values.shape != current.shape:
            raise ShapeError(f"Cannot replace {name}: shape {values.shape} != {current.shape}")
        self._entries[name] = np.asarray(values, dtype=self.dtype)

    @property
    def size(self) -> int:
        return sum(values.size for values in self._entries.values())

    @property
    def layout(self) -> Tuple[EntryLayout, ...]:
        return tuple((name, values.shape, self._prunable[name]) for name, values in self._entries.items())

    def offset(self, name: str) -> int:
        position = 0
        for entry, values in self._entries.items():
            if entry == name:
                return position
            position += values.size
        raise KeyError(name)

    def flat_index(self, name: str, index) -> int:
        values = self._entries[name]
        if not isinstance(index, (int, np.integer)):
            index = int(np.ravel_multi_index(tuple(index), values.shape))
        if not 0 <= index < values.size:
            raise IndexError(f"Index {index} outside {name} of size {values.size}")
        return self.offset(name) + int(index)

    def locate(self, flat: int) -> Tuple[str, Tuple[int, ...]]:
        """Inverse of flat_index."""
        if flat < 0:
            raise IndexError(flat)
        remaining = flat
        for name, values in self._entries.items():
            if remaining < values.size:
                return name, tuple(int(i) for i in np.unravel_index(remaining, values.shape))
            remaining -= values.size
        raise IndexError(f"Flat index {flat} outside store of size {self.size}")

    def flatten(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate([values.reshape(-1) for values in self._entries.values()])

    def copy(self) -> 'ParameterStore':
        clone = ParameterStore(self.dtype)
        for name, values in self._entries.items():
            clone._entries[name] = values.copy()
            clone._prunable[name] = self._prunable[name]
        return clone

    def astype(self, dtype) -> 'ParameterStore':
        converted = ParameterStore(dtype)
        for name, values in self._entries.items():
            converted.add(name, values, self._prunable[name])
        return converted

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {name: np.zeros_like(values) for name, values in self._entries.items()}

    def bit_equal(self, other: 'ParameterStore', names: Optional[List[str]] = None) -> bool:
        """Byte-level equality, so -0.0 and 0.0 differ and NaN payloads count."""
        if self.layout != other.layout or self.dtype != other.dtype:
            return False
        for name in names if names is not None else self.names():
            if self._entries[name].tobytes() != other._entries[name].tobytes():
                return False
        return True

    def check_layout(self, layout: Tuple[EntryLayout, ...]) -> None:
        if self.layout != tuple(layout):
            raise LayoutError("Parameter layout does not match: {a} vs {b}".format(a=self.layout, b=tuple(layout)))

    def __repr__(self):
        return "ParameterStore(entries={n}, scalars={s}, dtype={d})".format(n=len(self), s=self.size, d=self.dtype)
