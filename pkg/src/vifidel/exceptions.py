"""Exception hierarchy shared by all vifidel modules."""


class VifidelError(Exception):
    """Base class for every error raised by this package."""


class DomainError(VifidelError, ValueError):
    """An argument lies outside the domain of the operation."""


class EmbeddingFormatError(VifidelError):
    """An embedding file does not follow the word2vec layout."""


class EmbeddingParseError(EmbeddingFormatError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class EmbeddingLookupError(VifidelError, KeyError):
    """No vector could be resolved for a token."""

    def __init__(self, token):
        self.token = token
        super().__init__(token)

    def __str__(self):
        return f"no embedding for {self.token!r}"


class DataFormatError(VifidelError):
    """A JSONL/TSV input line is malformed or inconsistent."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}"
        if lineno is not None:
            where = f"{where}:{lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyDistributionError(VifidelError, ValueError):
    """A bag-of-words distribution has no mass."""


class InfeasibleProblemError(VifidelError, ValueError):
    """Supply and demand of a transportation problem do not balance."""


class NoReferencesError(VifidelError, ValueError):
    """No usable reference remains after filtering."""


class AlignmentError(VifidelError, ValueError):
    """Two score/judgment collections are not aligned on their ids."""


class MissingAssetError(VifidelError, KeyError):
    """Detections or references are missing for an image."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing asset"
