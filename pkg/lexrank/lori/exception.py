""" Exception classes """


class LexRankError(Exception):
    """LexRank exception base class.

    https://www.loggly.com/blog/exceptional-logging-of-exceptions-in-python/ (Transformer Pattern)
    """

    def __init__(self, message):
        """
        Parameters
        ----------
        message: string
            Error message to display
        """
        super().__init__('%s: %s' % (self.__class__.__name__, message))


class LexRankParamError(LexRankError):
    """
    Invalid argument or configuration value.
    """

    pass


class LexRankInvalidData(LexRankError):
    """
    Malformed dataset, model or file contents.
    """

    pass


class LexRankIOError(LexRankError):
    """
    Error reading or writing a file.
    """

    pass


class LexRankConvergenceError(LexRankError):
    """
    Iterative solver did not converge.
    """

    def __init__(self, message, residual=None, iterations=None):
        """
        Parameters
        ----------
        message: string
            Error message to display
        residual: float, optional
            Last sup-norm change of the iterate
        iterations: int, optional
            Number of sweeps performed
        """
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} [residual: {residual}, iterations: {iterations}]")


class LexRankStudyError(LexRankError):
    """
    One or more seeds of a study failed.
    """

    def __init__(self, message, failed_seeds=()):
        """
        Parameters
        ----------
        message: string
            Error message to display
        failed_seeds: Sequence[int]
            Seeds whose pipeline raised
        """
        self.failed_seeds = tuple(failed_seeds)
        super().__init__(f"{message} [failed seeds: {list(self.failed_seeds)}]")


class LexRankUsageError(LexRankError):
    """
    Unknown command, study or inconsistent command-line input.
    """

    pass
