class FESparsifyError(Exception):
    pass


class NumericalError(FESparsifyError):
    pass


class PencilDomainError(FESparsifyError):
    pass


class NullSpaceMismatchError(PencilDomainError):
    pass


class ConditioningError(FESparsifyError):
    pass


class NotWellFormedError(FESparsifyError):

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class ModelError(FESparsifyError):
    pass


class ParseError(FESparsifyError):

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = 'line {}: {}'.format(line_no, message)
        super().__init__(message)


class SamplingError(FESparsifyError, ValueError):
    pass


class ConsistencyError(FESparsifyError):

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class LeverageError(FESparsifyError):
    '''
    Raised by batch leverage drivers. Collects the failures of individual elements
    as (element_id, exception) pairs.
    '''

    def __init__(self, failures):
        self.failures = failures
        message = []
        for element_id, exc in failures:
            message.append('element {}: {}'.format(element_id, exc))
        super().__init__('\n'.join(message))
