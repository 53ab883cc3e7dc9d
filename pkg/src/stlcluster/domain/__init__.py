"""Domain model and custom exceptions for stlcluster.

Every error raised by the package derives from StlClusterError and carries the
values that caused it as attributes, so callers can report or recover without
parsing messages.
"""

# Custom Exceptions


class StlClusterError(Exception):
    """Base exception for all stlcluster errors."""

    pass


class StlSyntaxError(StlClusterError):
    """Raised when STL source text does not conform to the grammar."""

    def __init__(self, message: str, line: int, column: int):
        """Initialize syntax error with source position.

        Args:
            message: Human-readable error description
            line: 1-based line of the offending token
            column: 1-based column of the offending token
        """
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownPredicateError(StlClusterError):
    """Raised when a formula references a predicate id that is not registered."""

    def __init__(self, message: str, name: str):
        super().__init__(message)
        self.name = name


class InvalidIntervalError(StlClusterError):
    """Raised when a temporal interval is negative or has start > end."""

    def __init__(self, message: str, start: int, end: int):
        super().__init__(message)
        self.start = start
        self.end = end


class HorizonTooShortError(StlClusterError):
    """Raised when a trajectory is too short to evaluate a formula."""

    def __init__(self, message: str, required: int, actual: int):
        """Initialize horizon error.

        Args:
            message: Human-readable error description
            required: Number of states needed
            actual: Number of states supplied
        """
        super().__init__(message)
        self.required = required
        self.actual = actual


class InvalidTemperatureError(StlClusterError):
    """Raised when a smoothing temperature is not strictly positive."""

    def __init__(self, message: str, beta: float):
        super().__init__(message)
        self.beta = beta


class ShapeMismatchError(StlClusterError):
    """Raised when a recorded primitive receives incompatible operand shapes."""

    def __init__(self, message: str, node: str, shapes: list[tuple[int, ...]]):
        """Initialize shape mismatch error.

        Args:
            message: Human-readable error description
            node: Name and tape position of the offending primitive
            shapes: Operand shapes passed to the primitive
        """
        super().__init__(message)
        self.node = node
        self.shapes = shapes


class NonScalarOutputError(StlClusterError):
    """Raised when backward() is asked to differentiate a non-scalar output."""

    def __init__(self, message: str, shape: tuple[int, ...]):
        super().__init__(message)
        self.shape = shape


class NonFiniteGradientError(StlClusterError):
    """Raised when an optimizer step receives NaN or infinite gradients."""

    def __init__(self, message: str, key: str):
        super().__init__(message)
        self.key = key


class ControlBoundsError(StlClusterError):
    """Raised when an open-loop control sequence leaves the input box."""

    def __init__(self, message: str, step: int, values: list[float]):
        super().__init__(message)
        self.step = step
        self.values = values


class SolverDivergedError(StlClusterError):
    """Raised when every restart of a trajectory optimization diverged."""

    def __init__(self, message: str, index: int, seed: int):
        super().__init__(message)
        self.index = index
        self.seed = seed


class TrajectoryLengthMismatchError(StlClusterError):
    """Raised when trajectories compared for similarity differ in shape."""

    def __init__(self, message: str, indices: tuple[int, int]):
        super().__init__(message)
        self.indices = indices


class InsufficientDataError(StlClusterError):
    """Raised when a stage receives fewer samples than it needs."""

    def __init__(self, message: str, count: int, required: int):
        """Initialize insufficient data error.

        Args:
            message: Human-readable error description
            count: Number of samples available
            required: Minimum number of samples needed
        """
        super().__init__(message)
        self.count = count
        self.required = required


class LabelOutOfRangeError(StlClusterError):
    """Raised when a cluster label does not index an existing class."""

    def __init__(self, message: str, label: int, n_classes: int):
        super().__init__(message)
        self.label = label
        self.n_classes = n_classes


class ObstacleCountError(StlClusterError):
    """Raised when a network receives a different obstacle count than it was trained on."""

    def __init__(self, message: str, expected: int, actual: int):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class NonFiniteStateError(StlClusterError):
    """Raised when a closed-loop rollout produces a non-finite state."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class NonFiniteLossError(StlClusterError):
    """Raised when a training loss becomes NaN or infinite."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class SamplingBudgetExceededError(StlClusterError):
    """Raised when rejection sampling cannot find a valid instance."""

    def __init__(self, message: str, draws: int):
        super().__init__(message)
        self.draws = draws


class StageError(StlClusterError):
    """Raised when a pipeline stage fails; wraps the underlying error."""

    def __init__(self, message: str, stage: str, seed: int):
        """Initialize stage error.

        Args:
            message: Human-readable error description
            stage: Name of the failing stage
            seed: Master seed of the run
        """
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.seed = seed
