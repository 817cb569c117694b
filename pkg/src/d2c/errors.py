from __future__ import annotations


class D2CError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(D2CError):
    def __init__(self, message: str, line: int, column: int, token: str = ""):
        self.line = line
        self.column = column
        self.token = token
        where = f"{line}:{column}"
        if token:
            where += f" near {token!r}"
        super().__init__(f"{where}: {message}")


class SignatureError(D2CError):
    pass


class ValidationError(D2CError):
    """Static rule violation other than safety or stratification."""


class SafetyError(ValidationError):
    def __init__(self, variables, rule=None):
        self.variables = sorted(v.name if hasattr(v, "name") else str(v) for v in variables)
        self.rule = rule
        msg = "unsafe variable(s) " + ", ".join(self.variables)
        if rule is not None:
            msg += f" in rule: {rule}"
        super().__init__(msg)


class StratificationError(ValidationError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("negative cycle: " + " -> ".join(cycle))


class NotPropositional(ValidationError):
    def __init__(self, predicates):
        self.predicates = sorted(predicates)
        names = ", ".join(f"{n}/{a}" for n, a in self.predicates)
        super().__init__(f"transport predicates are not 0-ary: {names}")


class EvaluationError(D2CError):
    pass


class RecipientError(EvaluationError):
    def __init__(self, node: str, message):
        self.node = node
        self.message = message
        super().__init__(f"node {node} addressed {message} to a non-neighbor")


class ChoiceScopeError(EvaluationError):
    pass


class ScenarioError(D2CError):
    pass


class BoundExceeded(D2CError):
    def __init__(self, node: str, step: int, count: int, bound: int):
        self.node = node
        self.step = step
        self.count = count
        self.bound = bound
        super().__init__(
            f"node {node}: state DB mentions {count} non-rigid constants "
            f"(bound {bound}) after {step} construction steps"
        )


class MultiNodeError(D2CError):
    pass
