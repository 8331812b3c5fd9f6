"""Exception types shared across the package."""


class MedcoderError(Exception):
    """Base class for all package errors."""


class MalformedLine(MedcoderError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}: {reason}")


class InvalidCodeFormat(MedcoderError):
    def __init__(self, code: str):
        self.code = code
        super().__init__(f"invalid ICD-10 code format: {code!r}")


class DuplicateCode(MedcoderError):
    def __init__(self, code: str):
        self.code = code
        super().__init__(f"duplicate code: {code}")


class UnknownSynonymCode(MedcoderError):
    def __init__(self, code: str):
        self.code = code
        super().__init__(f"synonym refers to unknown code: {code}")


class EmptyQuery(MedcoderError):
    pass


class EmptyText(MedcoderError):
    pass


class EmptyOntology(MedcoderError):
    pass


class DimensionMismatch(MedcoderError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"vector dimension mismatch: index has {expected}, query has {got}")


class ProviderUnavailable(MedcoderError):
    pass


class FixtureMiss(MedcoderError):
    def __init__(self, request_hash: str):
        self.request_hash = request_hash
        super().__init__(f"no fixture for request hash {request_hash}")


class MalformedResponse(MedcoderError):
    pass


class RateLimited(MedcoderError):
    pass


class TemplateMissingPlaceholder(MedcoderError):
    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(f"prompt template is missing placeholder {placeholder}")


class NoJsonFound(MedcoderError):
    pass


class SchemaViolation(MedcoderError):
    def __init__(self, where, field: str, reason: str = ""):
        self.where = where
        self.field = field
        super().__init__(f"schema violation at {where}, field {field!r}: {reason}")


class EmptyCandidates(MedcoderError):
    pass


class ManifestMismatch(MedcoderError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"manifest mismatch: expected {expected}, found {found}")


class MissingK(MedcoderError):
    def __init__(self, k: int):
        self.k = k
        super().__init__(f"no predictions available for k={k}")


class IndexFormatError(MedcoderError):
    pass
