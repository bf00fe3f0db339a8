# errors.py


class TabDecompError(Exception):
    """Base class for all domain errors; carries the CLI exit status"""
    exit_code = 1

    def to_dict(self):
        return {'error': str(self), 'type': type(self).__name__}


class ValidationError(TabDecompError, ValueError):
    """Input violates a documented precondition"""
    exit_code = 1


class ContractViolation(ValidationError):
    """An algorithm received input outside its contract (e.g. a non-chordal graph)"""


class CoverageError(ValidationError):
    """A model term is not contained in any clique of the decomposition"""


class SingularityError(ValidationError):
    """A separator marginal is zero where the clique marginal is positive"""


class MLENonexistenceError(ValidationError):
    """Sampling zeros prevent a finite maximum likelihood estimate"""


class CapacityError(TabDecompError):
    """A table or query is too large to materialize"""
    exit_code = 2

    def __init__(self, message, cost=None):
        super().__init__(message)
        self.cost = cost

    def to_dict(self):
        data = super().to_dict()
        data['cost'] = self.cost
        return data


class ConvergenceError(TabDecompError):
    """An iterative solver exhausted its iteration budget"""
    exit_code = 3

    def __init__(self, message, last_objective=None):
        super().__init__(message)
        self.last_objective = last_objective

    def to_dict(self):
        data = super().to_dict()
        data['last_objective'] = self.last_objective
        return data
