"""
Binary checkpoint file.

Layout, all integers little-endian::

    "STSN" | u32 version | u32 record count | records...
    record: u32 name length | UTF-8 name | u8 kind | u32 rank | u64 extent * rank | payload

Record kinds: 0 float64 tensor, 1 float32 tensor, 2 mask bits packed in 64-bit
words, 3 UTF-8 JSON metadata (rank 1, extent = byte length).
"""
import json
import logging
import struct
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from subnet_forge.autodiff.optimizer import OptimizerState
from subnet_forge.autodiff.parameter_store import ParameterStore
from subnet_forge.exceptions import CheckpointError, LayoutError
from subnet_forge.pruning import WORD_DTYPE, MaskLayout, MaskSet, PruningMask, word_count

logger = logging.getLogger(__name__)

MAGIC = b'STSN'
VERSION = 1

KIND_F64 = 0
KIND_F32 = 1
KIND_MASK = 2
KIND_JSON = 3
TENSOR_KINDS = {KIND_F64: np.dtype('<f8'), KIND_F32: np.dtype('<f4')}

STORE_THETA = 'theta'
STORE_THETA0 = 'theta0'
META_LAYOUT = 'layout'
MASK_PREFIX = 'mask'
ADAM_FIRST = 'adam_m'
ADAM_SECOND = 'adam_v'
META_PREFIX = 'meta'


def task_store_name(task_id: str) -> str:
    """Name of the per-task parameter store of a single-task run."""
    return f"{STORE_THETA}@{task_id}"


class Checkpoint:
    """Named parameter stores, task masks, optimizer state and JSON metadata of one run."""

    def __init__(self,
                 stores: Optional[Dict[str, ParameterStore]] = None,
                 masks: Optional[MaskSet] = None,
                 metadata: Optional[Dict[str, Any]] = None,
                 optimizer_state: Optional[OptimizerState] = None,
                 version: int = VERSION):
        self.version = version
        self.stores = dict(stores or {})
        self.masks = masks
        self.metadata = dict(metadata or {})
        self.optimizer_state = optimizer_state

    @property
    def layout(self):
        for store in self.stores.values():
            return store.layout
        return None

    def store(self, name: str) -> ParameterStore:
        if name not in self.stores:
            raise CheckpointError(f"Checkpoint has no parameter store '{name}'; it has {sorted(self.stores)}")
        return self.stores[name]


def _record(name: str, kind: int, extents: Tuple[int, ...], payload: bytes) -> bytes:
    encoded = name.encode('utf-8')
    header = struct.pack('<I', len(encoded)) + encoded + struct.pack('<BI', kind, len(extents))
    header += struct.pack(f"<{len(extents)}Q", *extents)
    return header + payload


def _tensor_record(name: str, values: np.ndarray) -> bytes:
    kind = KIND_F32 if values.dtype == np.float32 else KIND_F64
    return _record(name, kind, values.shape, np.ascontiguousarray(values, dtype=TENSOR_KINDS[kind]).tobytes())


def _json_record(name: str, value) -> bytes:
    payload = json.dumps(value, sort_keys=True).encode('utf-8')
    return _record(name, KIND_JSON, (len(payload),), payload)


def _check_name_part(part: str):
    if '/' in part or not part:
        raise CheckpointError(f"Record name part '{part}' must be non-empty and free of '/'")


def to_bytes(checkpoint: Checkpoint) -> bytes:
    records: List[bytes] = []
    layout = checkpoint.layout
    for store_name, store in checkpoint.stores.items():
        _check_name_part(store_name)
        if store.layout != layout:
            raise LayoutError(f"Store {store_name} does not share the checkpoint's parameter layout")
        for entry, values in store.items():
            records.append(_tensor_record(f"{store_name}/{entry}", values))
    if checkpoint.masks is not None:
        for task_id, mask in checkpoint.masks.items():
            _check_name_part(task_id)
            for entry in mask.layout.names():
                records.append(_record(f"{MASK_PREFIX}/{task_id}/{entry}", KIND_MASK, mask.layout.shape(entry),
                                       mask.packed(entry).astype(WORD_DTYPE).tobytes()))
    state = checkpoint.optimizer_state
    if state is not None:
        for entry, values in state.first_moment.items():
            records.append(_tensor_record(f"{ADAM_FIRST}/{entry}", values))
        for entry, values in state.second_moment.items():
            records.append(_tensor_record(f"{ADAM_SECOND}/{entry}", values))
    metadata = dict(checkpoint.metadata)
    if layout is not None:
        metadata[META_LAYOUT] = [[name, list(shape), prunable] for name, shape, prunable in layout]
    elif checkpoint.masks is not None:
        mask_layout = checkpoint.masks.layout
        metadata[META_LAYOUT] = ([[name, list(shape), True] for name, shape in mask_layout.entries]
                                 + [[name, list(shape), False] for name, shape in mask_layout.fixed_entries])
    if state is not None:
        metadata['optimizer_step'] = state.step
    for key, value in metadata.items():
        _check_name_part(key)
        records.append(_json_record(f"{META_PREFIX}/{key}", value))
    header = MAGIC + struct.pack('<II', checkpoint.version, len(records))
    return header + b''.join(records)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise CheckpointError(f"Truncated checkpoint: {what} needs {count} bytes at byte {self.offset}, "
                                  f"{len(self.data) - self.offset} left")
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read_records(data: bytes) -> List[Tuple[str, int, Tuple[int, ...], bytes, int]]:
    reader = _Reader(data)
    magic = reader.take(len(MAGIC), 'magic')
    if magic != MAGIC:
        raise CheckpointError(f"Bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    version, count = reader.unpack('<II', 'header')
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} at byte 4, expected {VERSION}")
    records = []
    for _ in range(count):
        start = reader.offset
        (name_length,) = reader.unpack('<I', 'name length')
        try:
            name = reader.take(name_length, 'name').decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointError(f"Record name at byte {start + 4} is not UTF-8") from e
        kind, rank = reader.unpack('<BI', f"kind of {name}")
        extents = reader.unpack(f"<{rank}Q", f"extents of {name}")
        if kind in TENSOR_KINDS:
            size = int(np.prod(extents, dtype=np.int64)) * TENSOR_KINDS[kind].itemsize
        elif kind == KIND_MASK:
            size = word_count(int(np.prod(extents, dtype=np.int64))) * WORD_DTYPE.itemsize
        elif kind == KIND_JSON:
            if rank != 1:
                raise CheckpointError(f"JSON record {name} at byte {start} must have rank 1, got {rank}")
            size = extents[0]
        else:
            raise CheckpointError(f"Unknown record kind {kind} for {name} at byte {start}")
        payload_offset = reader.offset
        records.append((name, kind, tuple(extents), reader.take(size, f"payload of {name}"), payload_offset))
    if reader.offset != len(data):
        raise CheckpointError(f"{len(data) - reader.offset} trailing bytes at byte {reader.offset}")
    return records


def from_bytes(data: bytes) -> Checkpoint:
    records = _read_records(data)
    metadata = {}
    tensors: Dict[str, Dict[str, np.ndarray]] = {}
    mask_words: Dict[str, Dict[str, np.ndarray]] = {}
    for name, kind, extents, payload, offset in records:
        prefix, _, rest = name.partition('/')
        if not rest:
            raise CheckpointError(f"Record name '{name}' at byte {offset} has no '/' separator")
        if kind == KIND_JSON:
            if prefix != META_PREFIX:
                raise CheckpointError(f"JSON record {name} at byte {offset} outside '{META_PREFIX}/'")
            try:
                metadata[rest] = json.loads(payload.decode('utf-8'))
            except ValueError as e:
                raise CheckpointError(f"Invalid JSON in {name} at byte {offset}: {e}") from e
        elif kind == KIND_MASK:
            task_id, _, entry = rest.partition('/')
            if prefix != MASK_PREFIX or not entry:
                raise CheckpointError(f"Mask record name '{name}' at byte {offset} is not mask/<task>/<entry>")
            mask_words.setdefault(task_id, {})[entry] = np.frombuffer(payload, dtype=WORD_DTYPE).copy()
        else:
            values = np.frombuffer(payload, dtype=TENSOR_KINDS[kind]).reshape(extents)
            tensors.setdefault(prefix, {})[rest] = values.astype(values.dtype.newbyteorder('='))

    layout = metadata.pop(META_LAYOUT, None)
    if (tensors or mask_words) and layout is None:
        raise CheckpointError(f"Checkpoint has tensors or masks but no '{META_PREFIX}/{META_LAYOUT}' record")
    stores = {}
    state = None
    optimizer_step = metadata.pop('optimizer_step', None)
    for prefix, entries in tensors.items():
        if prefix in (ADAM_FIRST, ADAM_SECOND):
            continue
        stores[prefix] = _build_store(prefix, entries, layout)
    if ADAM_FIRST in tensors or ADAM_SECOND in tensors:
        state = OptimizerState()
        state.first_moment = dict(tensors.get(ADAM_FIRST, {}))
        state.second_moment = dict(tensors.get(ADAM_SECOND, {}))
        state.step = int(optimizer_step or 0)

    masks = None
    if mask_words:
        mask_layout = MaskLayout([(name, tuple(shape)) for name, shape, prunable in layout if prunable],
                                 [(name, tuple(shape)) for name, shape, prunable in layout if not prunable])
        try:
            masks = MaskSet([PruningMask.from_packed(mask_layout, task_id, words)
                             for task_id, words in mask_words.items()])
        except LayoutError as e:
            raise CheckpointError(f"Mask records do not match the stored layout: {e}") from e
    return Checkpoint(stores, masks, metadata, state)


def _build_store(prefix: str, entries: Dict[str, np.ndarray], layout) -> ParameterStore:
    names = [name for name, _, _ in layout]
    if sorted(entries) != sorted(names):
        raise CheckpointError(f"Store {prefix} has entries {sorted(entries)}, layout lists {sorted(names)}")
    dtypes = {values.dtype for values in entries.values()}
    if len(dtypes) != 1:
        raise CheckpointError(f"Store {prefix} mixes precisions {dtypes}")
    store = ParameterStore(dtypes.pop())
    for name, shape, prunable in layout:
        if entries[name].shape != tuple(shape):
            raise CheckpointError(f"Entry {prefix}/{name} has shape {entries[name].shape}, layout says {shape}")
        store.add(name, entries[name], prunable)
    return store


def save_checkpoint(file_path: str, checkpoint: Checkpoint) -> None:
    data = to_bytes(checkpoint)
    with open(file_path, 'wb') as outfile:
        outfile.write(data)
    logger.info("Saved checkpoint %s (%d bytes)", file_path, len(data))


def load_checkpoint(file_path: str) -> Checkpoint:
    try:
        with open(file_path, 'rb') as in_file:
            data = in_file.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {file_path}: {e}") from e
    return from_bytes(data)
