"""Exception hierarchy shared by the library and the CLI."""


class PmmError(Exception):
    """Base class for all library errors."""


class ValidationError(PmmError, ValueError):
    """A model, parameter set or input file violates its contract."""


class ParameterError(ValidationError):
    """A family parameter lies outside its admissible interval."""

    def __init__(self, name, value, interval=None, message=None):
        self.name = name
        self.value = value
        self.interval = interval
        if message is None:
            if interval is not None:
                lo, hi = interval
                message = f"{name}={value!r} outside admissible interval [{lo:.12g}, {hi:.12g}]"
            else:
                message = f"invalid {name}={value!r}"
        super().__init__(message)


class StationaryError(PmmError):
    """No unique, strictly positive stationary distribution where one is required."""


class ZeroProbabilityError(PmmError):
    """The observation sequence has probability zero under the model."""


class DecoderRefusal(PmmError):
    """A decoder declined to run (budget, unreachable optimum, wrong model class)."""


class BudgetExceeded(DecoderRefusal):
    """Requested computation exceeds the configured enumeration or memory budget."""

    def __init__(self, what, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(f"{what}: requires {required} entries, budget is {budget}")


class C0ExceedsBound(DecoderRefusal):
    """The hybrid path is still not a Viterbi path at the largest searched C."""

    def __init__(self, c_max):
        self.c_max = c_max
        super().__init__(f"C0 > c_max={c_max}")
