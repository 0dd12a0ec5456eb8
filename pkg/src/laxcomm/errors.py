"""Exception types shared across the package."""


class LaxcommError(Exception):
    """Base class for all laxcomm errors."""


class DuctClosed(LaxcommError):
    """The other end of the duct was closed or destroyed."""


class WouldBlockForever(LaxcommError):
    """A blocking call was made where no other party can ever make progress.

    Raised instead of deadlocking, e.g. put() on a full intra-thread duct
    whose only consumer is the calling worker itself.
    """


class TransportError(LaxcommError):
    """Socket-level failure on an inter-process duct."""


class AddressUnreachable(TransportError):
    """An inter-process endpoint failed to bind or resolve."""


class PayloadTooLarge(LaxcommError):
    """Payload exceeds the single-datagram cap."""


class BarrierBroken(LaxcommError):
    """A barrier participant exited early; waiters are released with this error."""


class InvalidDimensions(LaxcommError):
    """Torus dimensions must be positive."""


class InvalidTopology(LaxcommError):
    """The workload rejects this topology (e.g. self-conflicting 1-wide torus)."""


class NoUpdatesElapsed(LaxcommError):
    """A metric over a window with zero elapsed updates is undefined."""


class NoSendsAttempted(LaxcommError):
    """Delivery failure rate over a window with zero attempted sends is undefined."""


class EmptyInput(LaxcommError):
    """An aggregate was requested over zero reports."""


class ConfigError(LaxcommError):
    """Invalid or contradictory run configuration; message names the offending key."""


class LaunchError(LaxcommError):
    """A worker process or thread failed to launch."""
