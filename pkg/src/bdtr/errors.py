"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BDTRError(Exception):
    """Base class for every error raised by this package."""


class DataError(BDTRError):
    """Problem with an input data file."""


class MalformedRecord(DataError):
    def __init__(self, line_number: int, reason: str, path: str | None = None) -> None:
        self.line_number = line_number
        self.reason = reason
        self.path = path
        where = f"{path}:{line_number}" if path else f"line {line_number}"
        super().__init__(f"malformed record at {where}: {reason}")


class DuplicateId(DataError):
    def __init__(self, doc_id: str) -> None:
        self.doc_id = doc_id
        super().__init__(f"duplicate document id {doc_id!r}")


class EmptyAnswers(DataError):
    def __init__(self, sample_id: str) -> None:
        self.sample_id = sample_id
        super().__init__(f"sample {sample_id!r} has no gold answers")


class UnknownId(DataError, KeyError):
    def __init__(self, doc_id: str) -> None:
        self.doc_id = doc_id
        super().__init__(f"unknown document id {doc_id!r}")

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return self.args[0]


class IoFailure(DataError):
    pass


class EmptyCorpus(BDTRError):
    pass


class RetrieverContractError(BDTRError):
    """A retriever returned a list that violates the ranked-list contract."""


class PromptError(BDTRError):
    """A prompt template is missing placeholders or uses unknown ones."""


class GatewayFailure(BDTRError):
    """Transport-level or empty-content failure of a generation call.

    ``kind`` is a short machine-readable tag such as ``"Timeout"``,
    ``"EmptyResponse"``, ``"HTTPStatus"`` or ``"MissingScript"``.
    """

    def __init__(self, kind: str, message: str = "") -> None:
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class GatewayConfigError(BDTRError):
    pass


class UnparseableThoughts(BDTRError):
    pass


class MissingTrace(BDTRError):
    def __init__(self, sample_id: str) -> None:
        self.sample_id = sample_id
        super().__init__(f"no trace for sample {sample_id!r}")


class MalformedTrace(BDTRError):
    def __init__(self, line_number: int, reason: str) -> None:
        self.line_number = line_number
        super().__init__(f"malformed trace at line {line_number}: {reason}")


class SampleSetMismatch(BDTRError):
    pass
