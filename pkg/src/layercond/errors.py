"""Exception hierarchy shared by every subpackage."""


class LayercondError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LayercondError, ValueError):
    pass


class ContractError(LayercondError, ValueError):
    """A precondition of an operation was violated."""


class VocabularyError(LayercondError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class LengthError(LayercondError, ValueError):
    pass


class DataError(LayercondError, ValueError):
    pass


class ConfigurationError(LayercondError, ValueError):
    pass


class IntegrityError(LayercondError):
    """Checksums, hashes or digests do not match."""


class StrategyIndexError(LayercondError, IndexError):
    pass
