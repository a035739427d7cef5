"""Exception types shared across the solvers, oracle and CLI."""


class InvalidScenario(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(str(v) for v in self.violations)
        super().__init__(f"scenario failed validation:\n{lines}")


class ImpossibleDataset(ValueError):
    """Every parameter assigns zero likelihood to the training data."""


class ImpossibleObservation(ValueError):
    """A Bayes update was requested on a zero-probability (x, y) pair."""


class NodeNotFound(LookupError):
    """A folded belief matched no node of the reachable set (internal defect)."""


class CapExceeded(RuntimeError):
    def __init__(self, what, count, cap, round=None):
        self.what = what
        self.count = count
        self.cap = cap
        self.round = round
        where = f" at round {round + 1}" if round is not None else ""
        super().__init__(f"{what}{where}: {count} exceeds cap {cap}")
