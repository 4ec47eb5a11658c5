class DriverError(Exception):
    pass


class CorpusMissingError(DriverError):
    pass


class TokenizerExtensionConflictError(DriverError):
    pass


class EmptyTokenListError(DriverError):
    pass


class OutOfMemoryError(DriverError):
    """Wraps allocator failures with batch-size guidance."""
