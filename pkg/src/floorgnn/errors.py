"""Exception types. Every error carries a stable ``code`` used by the CLI."""


class FloorGNNError(Exception):
    code = "E_GENERIC"

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class IOFailure(FloorGNNError):
    code = "E_IO"


class SchemaError(FloorGNNError):
    code = "E_SCHEMA"


class BadSplitError(FloorGNNError):
    code = "E_BAD_SPLIT"


class BadConfigError(FloorGNNError):
    code = "E_BAD_CONFIG"


class DegenerateError(FloorGNNError):
    code = "E_DEGENERATE"


class UnknownCategoryError(FloorGNNError):
    code = "E_UNKNOWN_CATEGORY"


class EmptyEdgesError(FloorGNNError):
    code = "E_EMPTY_EDGES"


class EmptyBatchError(FloorGNNError):
    code = "E_EMPTY_BATCH"


class BadIndexError(FloorGNNError):
    code = "E_BAD_INDEX"


class ShapeError(FloorGNNError):
    code = "E_SHAPE"


class NotScalarError(FloorGNNError):
    code = "E_NOT_SCALAR"


class TapeConsumedError(FloorGNNError):
    code = "E_TAPE_CONSUMED"


class EmptyDataError(FloorGNNError):
    code = "E_EMPTY_DATA"


class VersionError(FloorGNNError):
    code = "E_VERSION"


class ConfigMismatchError(FloorGNNError):
    code = "E_CONFIG_MISMATCH"


class BadPerplexityError(FloorGNNError):
    code = "E_BAD_PERPLEXITY"
