"""Exception types shared across the package."""


class HiersteerError(Exception):
    """Base class for all package errors."""


class EmptyDocument(HiersteerError):
    pass


class ZeroVector(HiersteerError):
    pass


class DocNotInTree(HiersteerError):
    pass


class NodeNotFound(HiersteerError):
    pass


class TooFewDocuments(HiersteerError):
    pass


class TooFewSharedDocs(HiersteerError):
    pass


class SchemaViolation(HiersteerError):
    """Raised on malformed tree/KB/corpus documents.

    ``path`` is a JSON-pointer-ish location of the offending field.
    """

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path


class EmptyKb(HiersteerError):
    pass


class NoProjectedDocuments(HiersteerError):
    pass


class DegenerateWalk(HiersteerError):
    pass


class MissingProvenance(HiersteerError):
    pass


class FocusNotFound(HiersteerError):
    pass


class EmptyCorpus(HiersteerError):
    pass


class IllegalMerge(HiersteerError):
    pass


class JobAlreadyRunning(HiersteerError):
    pass
