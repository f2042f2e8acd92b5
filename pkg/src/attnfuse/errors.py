"""Exception hierarchy shared by all pipeline stages.

Every error carries a short machine-readable ``code`` that the CLI emits in
its JSON error payload.
"""


class AttnFuseError(Exception):
    code = "error"


class MalformedRow(AttnFuseError, ValueError):
    code = "malformed_row"


class DimensionMismatch(AttnFuseError, ValueError):
    code = "dimension_mismatch"


class NonMonotonicIndex(AttnFuseError, ValueError):
    code = "non_monotonic_index"


class OutOfRange(AttnFuseError, ValueError):
    code = "out_of_range"


class NoValidFrames(AttnFuseError, ValueError):
    code = "no_valid_frames"


class FpsMismatch(AttnFuseError, ValueError):
    code = "fps_mismatch"


class WindowOutOfRange(AttnFuseError, IndexError):
    code = "window_out_of_range"


class MissingModule(AttnFuseError, KeyError):
    code = "missing_module"

    def __str__(self):
        # KeyError quotes its argument; keep messages readable.
        return Exception.__str__(self)


class EmptyInput(AttnFuseError, ValueError):
    code = "empty_input"


class NoLabeledSamples(AttnFuseError, ValueError):
    code = "no_labeled_samples"


class SingleClass(AttnFuseError, ValueError):
    code = "single_class"


class MissingScore(AttnFuseError, KeyError):
    code = "missing_score"

    def __str__(self):
        return Exception.__str__(self)


class TooFewScores(AttnFuseError, ValueError):
    code = "too_few_scores"


class TooFewUsers(AttnFuseError, ValueError):
    code = "too_few_users"


class InvalidParams(AttnFuseError, ValueError):
    code = "invalid_params"


class LeakageError(AttnFuseError, AssertionError):
    """A fold's training artifacts touched its held-out user."""

    code = "leakage"
