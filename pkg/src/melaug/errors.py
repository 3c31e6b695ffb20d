"""Exception hierarchy shared by all modules."""


class MelAugError(Exception):
    """Base class for every error raised by this package."""


class FormatError(MelAugError):
    """A file does not follow the expected binary or text layout."""


class UnsupportedFormatError(FormatError):
    """A well-formed file uses an encoding we do not read (e.g. float WAV)."""


class TooShortError(MelAugError):
    """Input is too short along some axis for the requested operation."""


class ParameterError(MelAugError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class ParseError(FormatError):
    """A text record could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedReferenceError(MelAugError, ValueError):
    """Error rates are undefined for an empty reference."""


class TranscriberError(MelAugError):
    """Base class for transcription failures; the utterance gets excluded."""


class FixtureMissError(TranscriberError):
    pass


class TransientError(TranscriberError):
    """Timeouts or connection failures that persisted through all retries."""


class ServiceError(TranscriberError):
    def __init__(self, status, message=""):
        self.status = status
        super().__init__(f"ASR service returned HTTP {status}" + (f": {message}" if message else ""))
