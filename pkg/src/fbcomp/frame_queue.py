"""Frame queue: fixed slots cycling through FREE/UPDATING/READY/DRAWING.

Exactly one producer party and one consumer party per queue, possibly in
different address spaces. The producer owns FREE->UPDATING->READY, the
consumer owns READY->DRAWING->FREE plus READY->FREE when flushing. All
cross-party state lives in the status/sequence records inside the shared
buffer, so a view can be rebuilt on either side at any time.

Status records are 16 bytes each, 16-byte aligned:
  +0  status   u32 LE   (FREE=0, UPDATING=1, READY=2, DRAWING=3)
  +8  sequence u64 LE   (set once per submission, strictly increasing)
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

from .errors import ProtocolViolation
from .pixel import PixelFormat, Surface, SurfaceGeometry

STATUS_RECORD_SIZE = 16
_STATUS = struct.Struct("<I")
_SEQ = struct.Struct("<Q")


class FrameState(enum.IntEnum):
    FREE = 0
    UPDATING = 1
    READY = 2
    DRAWING = 3


class QueueMode(enum.Enum):
    ORDERED = "ordered"
    FLUSH = "flush"


@dataclass
class FrameHandle:
    index: int
    sequence: int
    surface: Surface


class FrameQueue:
    """View over the queue storage embedded in a region buffer.

    `buf` holds the status records (writable); `pixel_buf` holds the
    frame pixel blocks and may be a read-only mapping on the consumer
    side. Both default to the same buffer.
    """

    def __init__(self, buf, *, status_offset: int, data_offset: int,
                 frame_stride: int, depth: int,
                 geometry: SurfaceGeometry, fmt: PixelFormat,
                 pixel_buf=None):
        if depth < 1:
            raise ValueError("queue depth must be at least 1")
        if frame_stride < geometry.frame_bytes:
            raise ValueError("frame stride smaller than one frame")
        self._buf = memoryview(buf)
        self._pix = memoryview(pixel_buf) if pixel_buf is not None else self._buf
        self._status_offset = status_offset
        self._data_offset = data_offset
        self._stride = frame_stride
        self.depth = depth
        self.geometry = geometry
        self.format = PixelFormat(fmt)
        # Sequences never reset, so the producer counter is recoverable
        # from the buffer after a reattach.
        self._next_seq = max(self.sequence(i) for i in range(depth)) + 1

    # -- record access ----------------------------------------------------

    def _rec(self, index: int) -> int:
        if not 0 <= index < self.depth:
            raise IndexError(f"slot {index} out of range")
        return self._status_offset + index * STATUS_RECORD_SIZE

    def status(self, index: int) -> FrameState:
        return FrameState(_STATUS.unpack_from(self._buf, self._rec(index))[0])

    def sequence(self, index: int) -> int:
        return _SEQ.unpack_from(self._buf, self._rec(index) + 8)[0]

    def _set_status(self, index: int, state: FrameState) -> None:
        _STATUS.pack_into(self._buf, self._rec(index), int(state))

    def _set_sequence(self, index: int, seq: int) -> None:
        _SEQ.pack_into(self._buf, self._rec(index) + 8, seq)

    def statuses(self) -> tuple:
        return tuple(self.status(i) for i in range(self.depth))

    def surface(self, index: int) -> Surface:
        self._rec(index)
        return Surface(self._pix, self.geometry, self.format,
                       offset=self._data_offset + index * self._stride)

    # -- producer side ----------------------------------------------------

    def acquire_frame(self) -> Optional[FrameHandle]:
        """Move one FREE slot to UPDATING; None when no slot is FREE."""
        for i in range(self.depth):
            if self.status(i) == FrameState.FREE:
                self._set_status(i, FrameState.UPDATING)
                return FrameHandle(i, 0, self.surface(i))
        return None

    def submit_frame(self, handle: FrameHandle) -> None:
        """Publish an UPDATING slot: assign the next sequence, mark READY.

        The sequence write precedes the status write so any party that
        observes READY also observes the frame's pixels and sequence.
        """
        if self.status(handle.index) != FrameState.UPDATING:
            raise ProtocolViolation(
                f"slot {handle.index} is {self.status(handle.index).name}, not UPDATING"
            )
        seq = self._next_seq
        self._set_sequence(handle.index, seq)
        self._set_status(handle.index, FrameState.READY)
        self._next_seq = seq + 1
        handle.sequence = seq

    # -- consumer side ----------------------------------------------------

    def take_for_display(self, mode: QueueMode) -> Optional[FrameHandle]:
        """ORDERED: oldest READY slot. FLUSH: newest, freeing the rest."""
        ready = [(self.sequence(i), i) for i in range(self.depth)
                 if self.status(i) == FrameState.READY]
        if not ready:
            return None
        if mode == QueueMode.ORDERED:
            seq, idx = min(ready)
        else:
            seq, idx = max(ready)
            for _, stale in ready:
                if stale != idx:
                    self._set_status(stale, FrameState.FREE)
        self._set_status(idx, FrameState.DRAWING)
        return FrameHandle(idx, seq, self.surface(idx))

    def release_frame(self, handle: FrameHandle) -> None:
        if self.status(handle.index) != FrameState.DRAWING:
            raise ProtocolViolation(
                f"slot {handle.index} is {self.status(handle.index).name}, not DRAWING"
            )
        self._set_status(handle.index, FrameState.FREE)
