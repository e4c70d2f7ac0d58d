"""Exception types shared across the compositing stack.

Plain invalid arguments (bad rectangle, zero width, non-power-of-two
alignment) raise ValueError; everything protocol- or session-shaped gets
its own class so callers can react per failure mode.
"""


class FramebufferError(Exception):
    """Base class for all stack-specific failures."""


class ProtocolViolation(FramebufferError):
    """A frame slot was driven through an illegal state transition."""


class RegionTooSmall(FramebufferError):
    def __init__(self, required: int, actual: int):
        super().__init__(
            f"shared region too small: need {required} bytes, have {actual}"
        )
        self.required = required
        self.actual = actual


class IncompatibleProtocol(FramebufferError):
    """Region magic does not match the protocol constant."""


class CorruptRegion(FramebufferError):
    """Region header fails structural validation."""


class ServerUnavailable(FramebufferError):
    """Server never published the region within the attach timeout."""


class UsageError(FramebufferError):
    """Client API called out of order (nested begin, end without begin)."""


class SessionLost(FramebufferError):
    """The server has disconnected this session."""


class PlacementConflict(FramebufferError):
    """Requested placement overlaps an active client."""


class ClientNotFound(FramebufferError):
    pass


class AlreadyConnected(FramebufferError):
    pass


class PresentFailure(FramebufferError):
    """The output sink rejected a frame."""
