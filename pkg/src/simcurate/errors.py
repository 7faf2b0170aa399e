"""Exception taxonomy shared across the toolkit.

ContractError maps to CLI exit code 1 (caller misuse), the others to exit
code 2 (environment trouble: files, network, backend).
"""


class ContractError(ValueError):
    """A documented precondition or invariant was violated by the caller."""


class DataError(RuntimeError):
    """A dataset file is missing, malformed, or inconsistent."""


class BackendError(RuntimeError):
    """The generation/captioning backend returned an unusable response."""


class BackendRetryableError(BackendError):
    """Transient backend failure (timeout, 503); safe to retry."""
