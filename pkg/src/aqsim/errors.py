"""Exception taxonomy shared across the workbench."""


class ContractViolation(RuntimeError):
    """An operation was called outside its stated precondition."""


class ScenarioError(ValueError):
    """A scenario is malformed or authored inconsistently with the model.

    Raised at load time (bad references, bad parameters) and at run time
    (scripted injection the buckets cannot afford, re-route with no
    surviving path).
    """

    def __init__(self, message, round=None, edge=None):
        super().__init__(message)
        self.round = round
        self.edge = edge


class ModelViolation(RuntimeError):
    """Internal model invariant observed broken on a trace.

    Distinct from ScenarioError: a ModelViolation means the engine or a
    derived trace contradicts the model semantics, not that the input was
    bad.
    """
