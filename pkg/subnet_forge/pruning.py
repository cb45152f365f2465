import logging
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.constants import *
from subnet_forge.exceptions import LayoutError, PruningError

logger = logging.getLogger(__name__)

WORD_BITS = 64
WORD_DTYPE = np.dtype('<u8')
UNION_OWNER = 'union'


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Flat bool array -> little-endian 64-bit words, bit i of the entry at bit i % 64 of word i // 64."""
    packed = np.packbits(np.asarray(bits, dtype=bool).reshape(-1), bitorder='little')
    padding = (-packed.size) % WORD_DTYPE.itemsize
    if padding:
        packed = np.concatenate([packed, np.zeros(padding, dtype=np.uint8)])
    return packed.view(WORD_DTYPE)


def unpack_bits(words: np.ndarray, count: int) -> np.ndarray:
    words = np.asarray(words, dtype=WORD_DTYPE)
    if words.size != word_count(count):
        raise LayoutError(f"{words.size} words cannot hold exactly {count} bits")
    return np.unpackbits(words.view(np.uint8), bitorder='little', count=count).astype(bool)


def word_count(bits: int) -> int:
    return -(-bits // WORD_BITS)


class MaskLayout:
    """
    Names and shapes of the prunable entries of a parameter layout, in store order.

    The non-prunable entries are listed too: they are never masked but count
    towards the total parameter count of Param%.
    """

    def __init__(self, entries: List[Tuple[str, Tuple[int, ...]]],
                 fixed_entries: Optional[List[Tuple[str, Tuple[int, ...]]]] = None):
        self.entries = tuple((name, tuple(shape)) for name, shape in entries)
        self.fixed_entries = tuple((name, tuple(shape)) for name, shape in fixed_entries or [])
        self.sizes = {name: int(np.prod(shape)) for name, shape in self.entries}

    @classmethod
    def from_store(cls, store: ParameterStore) -> 'MaskLayout':
        return cls([(name, shape) for name, shape, prunable in store.layout if prunable],
                   [(name, shape) for name, shape, prunable in store.layout if not prunable])

    def names(self) -> List[str]:
        return [name for name, _ in self.entries]

    def shape(self, name: str) -> Tuple[int, ...]:
        return dict(self.entries)[name]

    @property
    def size(self) -> int:
        return sum(self.sizes.values())

    @property
    def fixed_size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.fixed_entries)

    @property
    def total_size(self) -> int:
        return self.size + self.fixed_size

    def check_store(self, store: ParameterStore):
        if MaskLayout.from_store(store) != self:
            raise LayoutError("Mask layout does not match the entries of the parameter store")

    def __eq__(self, other):
        return (isinstance(other, MaskLayout) and self.entries == other.entries
                and self.fixed_entries == other.fixed_entries)

    def __hash__(self):
        return hash((self.entries, self.fixed_entries))

    def __repr__(self):
        return f"MaskLayout(entries={len(self.entries)}, scalars={self.size}, fixed={self.fixed_size})"


class PruningMask:
    """
    Immutable binary keep-mask (1 = keep) over the prunable entries of θ.

    Bits are held packed, one word array per entry. Entries outside the layout
    (non-prunable parameters) are implicitly kept.
    """

    def __init__(self, layout: MaskLayout, owner: str, words: Dict[str, np.ndarray]):
        if set(words) != set(layout.names()):
            raise LayoutError(f"Mask words for {sorted(words)} do not match layout {layout.names()}")
        self.layout = layout
        self.owner = owner
        self._words = {}
        self._bits = {}
        for name in layout.names():
            packed = np.array(words[name], dtype=WORD_DTYPE, copy=True)
            if packed.size != word_count(layout.sizes[name]):
                raise LayoutError(f"Mask entry {name} needs {word_count(layout.sizes[name])} words, "
                                  f"got {packed.size}")
            # padding bits beyond the entry size must stay zero
            if pack_bits(unpack_bits(packed, layout.sizes[name])).tobytes() != packed.tobytes():
                raise LayoutError(f"Mask entry {name} has nonzero padding bits")
            packed.setflags(write=False)
            self._words[name] = packed

    @classmethod
    def from_bits(cls, layout: MaskLayout, owner: str, bits: Dict[str, np.ndarray]) -> 'PruningMask':
        words = {}
        for name in layout.names():
            entry = np.asarray(bits[name], dtype=bool)
            if entry.shape != layout.shape(name):
                raise LayoutError(f"Mask bits for {name} have shape {entry.shape}, expected {layout.shape(name)}")
            words[name] = pack_bits(entry)
        return cls(layout, owner, words)

    @classmethod
    def from_flat(cls, layout: MaskLayout, owner: str, flat: np.ndarray) -> 'PruningMask':
        if flat.size != layout.size:
            raise LayoutError(f"{flat.size} mask bits for a layout of {layout.size} scalars")
        bits = {}
        start = 0
        for name, shape in layout.entries:
            bits[name] = flat[start:start + layout.sizes[name]].reshape(shape)
            start += layout.sizes[name]
        return cls.from_bits(layout, owner, bits)

    @classmethod
    def from_packed(cls, layout: MaskLayout, owner: str, words: Dict[str, np.ndarray]) -> 'PruningMask':
        return cls(layout, owner, words)

    @classmethod
    def ones(cls, layout: MaskLayout, owner: str) -> 'PruningMask':
        return cls.from_bits(layout, owner, {name: np.ones(shape, dtype=bool) for name, shape in layout.entries})

    def packed(self, name: str) -> np.ndarray:
        return self._words[name]

    def bits(self, name: str) -> np.ndarray:
        if name not in self._bits:
            bits = unpack_bits(self._words[name], self.layout.sizes[name]).reshape(self.layout.shape(name))
            bits.setflags(write=False)
            self._bits[name] = bits
        return self._bits[name]

    def flat_bits(self) -> np.ndarray:
        if not self.layout.entries:
            return np.zeros(0, dtype=bool)
        return np.concatenate([self.bits(name).reshape(-1) for name in self.layout.names()])

    def surviving_count(self) -> int:
        return int(self.flat_bits().sum())

    def prunable_count(self) -> int:
        return self.layout.size

    @property
    def sparsity(self) -> float:
        return 1.0 - self.surviving_count() / self.prunable_count()

    def is_subset_of(self, other: 'PruningMask') -> bool:
        return not (self.flat_bits() & ~other.flat_bits()).any()

    def with_owner(self, owner: str) -> 'PruningMask':
        return PruningMask(self.layout, owner, self._words)

    def __eq__(self, other):
        return (isinstance(other, PruningMask) and self.layout == other.layout and self.owner == other.owner
                and all(self._words[n].tobytes() == other._words[n].tobytes() for n in self.layout.names()))

    def __repr__(self):
        return f"PruningMask(owner={self.owner}, sparsity={self.sparsity:.4f})"


class MaskSet:
    """Ordered task id -> PruningMask map over one shared layout."""

    def __init__(self, masks: Optional[List[PruningMask]] = None):
        self._masks: Dict[str, PruningMask] = {}
        self.layout: Optional[MaskLayout] = None
        for mask in masks or []:
            self.add(mask)

    def add(self, mask: PruningMask):
        if self.layout is None:
            self.layout = mask.layout
        elif mask.layout != self.layout:
            raise LayoutError(f"Mask of {mask.owner} uses a different layout")
        self._masks[mask.owner] = mask

    def __getitem__(self, task_id: str) -> PruningMask:
        if task_id not in self._masks:
            raise PruningError(f"No mask for task {task_id}; masks exist for {self.task_ids}")
        return self._masks[task_id]

    def __contains__(self, task_id: str) -> bool:
        return task_id in self._masks

    def __iter__(self) -> Iterator[str]:
        return iter(self._masks)

    def __len__(self) -> int:
        return len(self._masks)

    def items(self):
        return self._masks.items()

    def values(self):
        return self._masks.values()

    @property
    def task_ids(self) -> List[str]:
        return list(self._masks)

    def union(self) -> PruningMask:
        if not self._masks:
            raise PruningError("Union of an empty mask set")
        flat = np.zeros(self.layout.size, dtype=bool)
        for mask in self._masks.values():
            flat |= mask.flat_bits()
        return PruningMask.from_flat(self.layout, UNION_OWNER, flat)


def _prunable_magnitudes(theta: ParameterStore, layout: MaskLayout) -> np.ndarray:
    return np.concatenate([np.abs(theta[name]).reshape(-1) for name in layout.names()])


def global_magnitude_prune(theta: ParameterStore, mask: PruningMask, p: float) -> PruningMask:
    """
    Remove the floor(p * survivors) smallest-magnitude surviving scalars, ranked globally
    over all prunable entries. Equal magnitudes are pruned lowest flat index first.
    """
    if not 0.0 < p < 1.0:
        raise PruningError(f"Prune rate must lie in (0, 1), got {p}")
    mask.layout.check_store(theta)
    keep = mask.flat_bits().copy()
    survivors = np.flatnonzero(keep)
    if survivors.size == 0:
        raise PruningError(f"Mask of {mask.owner} has no surviving scalars left to prune")
    count = math.floor(p * survivors.size)
    magnitudes = _prunable_magnitudes(theta, mask.layout)[survivors]
    # stable sort keeps ascending flat index among equal magnitudes
    order = np.argsort(magnitudes, kind='stable')
    keep[survivors[order[:count]]] = False
    pruned = PruningMask.from_flat(mask.layout, mask.owner, keep)
    logger.debug("Pruned %d of %d survivors for %s", count, survivors.size, mask.owner)
    return pruned


def expected_sparsity(p: float, rounds: int) -> float:
    return 1.0 - (1.0 - p) ** rounds


def expected_survivors(n: int, p: float, rounds: int) -> int:
    """Survivor count after `rounds` floor-rounded prunes of n scalars."""
    for _ in range(rounds):
        n -= math.floor(p * n)
    return n


def apply_mask(theta: ParameterStore, mask: PruningMask) -> ParameterStore:
    """Effective parameters θ ⊙ m; masked scalars are exactly 0.0, theta is not modified."""
    mask.layout.check_store(theta)
    masked = theta.copy()
    for name in mask.layout.names():
        masked.set(name, np.where(mask.bits(name), theta[name], 0.0).astype(theta.dtype, copy=False))
    return masked


def mask_gradients(grads: Dict[str, np.ndarray], mask: PruningMask) -> Dict[str, np.ndarray]:
    masked = dict(grads)
    for name in mask.layout.names():
        if name in grads:
            masked[name] = np.where(mask.bits(name), grads[name], 0.0).astype(grads[name].dtype, copy=False)
    return masked


def overlap(mask_i: PruningMask, mask_j: PruningMask) -> float:
    """Jaccard similarity of the kept sets."""
    if mask_i.layout != mask_j.layout:
        raise LayoutError(f"Masks of {mask_i.owner} and {mask_j.owner} use different layouts")
    a = mask_i.flat_bits()
    b = mask_j.flat_bits()
    union = int((a | b).sum())
    if union == 0:
        raise PruningError(f"Overlap of two empty masks ({mask_i.owner}, {mask_j.owner}) is undefined")
    return int((a & b).sum()) / union


def overlap_matrix(masks: MaskSet) -> pd.DataFrame:
    task_ids = masks.task_ids
    values = np.ones((len(task_ids), len(task_ids)))
    for i, a in enumerate(task_ids):
        for j in range(i + 1, len(task_ids)):
            values[i, j] = values[j, i] = overlap(masks[a], masks[task_ids[j]])
    return pd.DataFrame(values, index=task_ids, columns=task_ids)


def param_percent(masks: MaskSet, mode: str, task_id: Optional[str] = None) -> float:
    """
    Nonzero-parameter percentage of the whole model.

    Surviving prunable scalars plus every non-prunable scalar, over all
    scalars of θ. one: the given task's subnetwork; all-multitask: the union
    of all task subnetworks living in one model; all-singletask: the sum over
    tasks, each subnetwork living in its own model.
    """
    if mode == PARAM_MODE_ONE:
        if task_id is None:
            raise PruningError(f"Mode {mode} needs a task id")
        return _nonzero_percent(masks[task_id])
    if mode == PARAM_MODE_ALL_MULTITASK:
        return _nonzero_percent(masks.union())
    if mode == PARAM_MODE_ALL_SINGLETASK:
        return sum(param_percent(masks, PARAM_MODE_ONE, t) for t in masks.task_ids)
    raise PruningError(f"Unknown Param% mode: {mode}")


def _nonzero_percent(mask: PruningMask) -> float:
    layout = mask.layout
    if layout.total_size == 0:
        raise PruningError("Param% of an empty parameter layout")
    return 100.0 * (mask.surviving_count() + layout.fixed_size) / layout.total_size
