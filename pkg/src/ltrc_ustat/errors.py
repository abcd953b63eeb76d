"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`LtrcError`,
so callers (the CLI in particular) can separate input problems from numeric
degeneracies without matching on messages.
"""


class LtrcError(Exception):
    """Base class for all package errors."""


class InputError(LtrcError):
    """The data handed in cannot form a valid LTRC sample."""


class NumericError(LtrcError):
    """The data are valid but an estimator is undefined on them."""


class EmptySample(InputError):
    def __init__(self):
        super().__init__("sample contains no observations")


class InvariantViolation(InputError):
    def __init__(self, row, reason):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class ParseError(InputError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class MissingCauseLabels(InputError):
    def __init__(self, detail="failure rows without a cause label"):
        super().__init__(detail)


class ConfigError(InputError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class InvalidProbability(ConfigError):
    pass


class SampleTooSmall(NumericError):
    def __init__(self, n, needed):
        self.n = n
        self.needed = needed
        super().__init__(f"need at least {needed} observations, got {n}")


class RiskSetEmpty(NumericError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"risk set is empty at t={t!r}")


class DegenerateWeights(NumericError):
    """IPCW weights cannot be formed (zero or collapsed survival estimate)."""


class ZeroWeightDenominator(DegenerateWeights):
    def __init__(self, index, t):
        self.index = index
        self.t = t
        super().__init__(
            f"row {index}: censoring survival estimate is 0 at T={t!r}"
        )


class SurvivalCollapsed(DegenerateWeights):
    def __init__(self, index, t):
        self.index = index
        self.t = t
        super().__init__(
            f"row {index}: product-limit lifetime survival reached 0 before T={t!r}"
        )


class NonfiniteWeight(NumericError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"weight {index} is not finite")


class DegenerateVariance(NumericError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"variance estimate is not positive ({value!r})")


class NoRoot(NumericError):
    def __init__(self, target, detail=""):
        self.target = target
        super().__init__(f"no root bracketed for target {target!r} {detail}".rstrip())


class GenerationStalled(NumericError):
    def __init__(self, attempts, accepted):
        self.attempts = attempts
        self.accepted = accepted
        super().__init__(
            f"{attempts} consecutive draws without an observed unit "
            f"({accepted} accepted so far)"
        )
