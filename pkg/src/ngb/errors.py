"""Exception types. Each carries a stable ``code`` string used in logs and CLI output."""


class NGBError(Exception):
    code = "ERROR"

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class MalformedTopicError(NGBError, ValueError):
    code = "MALFORMED_TOPIC"


class TruncatedError(NGBError, ValueError):
    code = "TRUNCATED"


class BadTagError(NGBError, ValueError):
    code = "BAD_TAG"


class InvariantViolation(NGBError, ValueError):
    code = "INVARIANT_VIOLATION"


class BadMagicError(NGBError, ValueError):
    code = "BAD_MAGIC"


class BadVersionError(NGBError, ValueError):
    code = "BAD_VERSION"


class BadLengthError(NGBError, ValueError):
    code = "BAD_LENGTH"


class BadEnumError(NGBError, ValueError):
    code = "BAD_ENUM"


class UnsupportedEncodingError(NGBError, ValueError):
    code = "UNSUPPORTED_ENCODING"


class BackpressureTimeout(NGBError, TimeoutError):
    code = "BACKPRESSURE_TIMEOUT"


class PayloadTooLargeError(NGBError, ValueError):
    code = "PAYLOAD_TOO_LARGE"


class ConnectionLostError(NGBError, ConnectionError):
    code = "CONNECTION_LOST"


class TruncatedStreamError(NGBError, ConnectionError):
    code = "TRUNCATED_STREAM"


class BindFailedError(NGBError, OSError):
    code = "BIND_FAILED"


class ConfigInvalidError(NGBError, ValueError):
    code = "CONFIG_INVALID"


class SpawnFailedError(NGBError, RuntimeError):
    code = "SPAWN_FAILED"


class BenchTimeoutError(NGBError, TimeoutError):
    code = "TIMEOUT"

    def __init__(self, msg: str = "", partial_samples=None):
        super().__init__(msg)
        self.partial_samples = partial_samples


class EmptyInputError(NGBError, ValueError):
    code = "EMPTY_INPUT"


class ScenarioMismatchError(NGBError, ValueError):
    code = "SCENARIO_MISMATCH"


class IOFailedError(NGBError, OSError):
    code = "IO_FAILED"
