"""Exception classes shared across the package.

Every error carries a stable process exit code so the CLI can map failure
classes to distinct codes (see cli.py and the README).
"""


class CorrSpaceError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConstantSeries(CorrSpaceError):
    """Series has zero variance; correlation is undefined."""

    exit_code = 10


class LengthMismatch(CorrSpaceError):
    """Two series passed to a pairwise operation differ in length."""

    exit_code = 11


class InvalidM(CorrSpaceError):
    """Embedding size / coefficient count out of its valid range."""

    exit_code = 12


class DegenerateOutput(CorrSpaceError):
    """Network pre-normalization output has (near-)zero norm."""

    exit_code = 13


class DimensionMismatch(CorrSpaceError):
    """Vector dimension does not match the index / network."""

    exit_code = 14


class EmptyInput(CorrSpaceError):
    """Operation requires at least one element."""

    exit_code = 15


class ParseError(CorrSpaceError):
    """Input file could not be parsed; carries the 1-based line number."""

    exit_code = 16

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RaggedRows(ParseError):
    """Rows of the input file have differing lengths."""

    exit_code = 17


class EmptyFile(CorrSpaceError):
    """Input file contains no data rows."""

    exit_code = 18


class TooSmall(CorrSpaceError):
    """Dataset too small to split."""

    exit_code = 19


class InsufficientData(CorrSpaceError):
    """Training partition too small to sample batches from."""

    exit_code = 20


class KTooLarge(CorrSpaceError):
    """Requested k exceeds the candidate pool."""

    exit_code = 21


class SizeMismatch(CorrSpaceError):
    """Result sets passed to a metric have inconsistent sizes."""

    exit_code = 22


class MissingArtifact(CorrSpaceError):
    """A required model / index / dataset file does not exist."""

    exit_code = 23


class UsageError(CorrSpaceError):
    """Invalid command-line arguments."""

    exit_code = 2
