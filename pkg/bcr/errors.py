"""
Error hierarchy for the bcr package.
Every operation raises a subclass of BCRError; loops that must not abort
(executor, replanner, suite runner) catch and record them as outcomes.
"""
from typing import Optional


class BCRError(Exception):
    """Base class for all bcr errors"""


class ConfigError(BCRError):
    """Invalid trial/suite configuration"""


# =====================================================================
# DOMAIN CORE
# =====================================================================

class MissingBinding(BCRError):
    def __init__(self, schema: str, variable: str):
        self.schema = schema
        self.variable = variable
        super().__init__(f"{schema}: no binding for {variable}")


class CategoryMismatch(BCRError):
    def __init__(self, schema: str, variable: str, instance: str, category: str):
        self.schema = schema
        self.variable = variable
        self.instance = instance
        self.category = category
        super().__init__(
            f"{schema}: {instance} (category {category}) cannot bind {variable}"
        )


# =====================================================================
# PARSER
# =====================================================================

class DomainSyntaxError(BCRError):
    """Malformed domain/problem text; always carries a 1-based position"""

    def __init__(self, line: int, col: int, expected: str):
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"line {line}, col {col}: expected {expected}")


class ValidationError(BCRError):
    def __init__(self, symbol: str, reason: str):
        self.symbol = symbol
        self.reason = reason
        super().__init__(f"{symbol}: {reason}")


class UnknownPredicate(ValidationError):
    def __init__(self, name: str):
        super().__init__(name, "unknown predicate")


class UnknownInstance(ValidationError):
    def __init__(self, name: str):
        super().__init__(name, "unknown instance")


class UnknownSchema(ValidationError):
    def __init__(self, name: str):
        super().__init__(name, "unknown action schema")


class ArityMismatch(ValidationError):
    def __init__(self, name: str, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(name, f"expected {expected} arguments, got {got}")


# =====================================================================
# RESOLUTION FOREST
# =====================================================================

class NoAchiever(BCRError):
    def __init__(self, literal: str):
        self.literal = literal
        super().__init__(f"no action achieves {literal}")


class NotALeaf(BCRError):
    def __init__(self, node_id: int):
        self.node_id = node_id
        super().__init__(f"node {node_id} is not a leaf")


# =====================================================================
# SELECTION / TRANSPORT
# =====================================================================

class SelectionExhausted(BCRError):
    def __init__(self, attempts: int, last_text: Optional[str] = None):
        self.attempts = attempts
        self.last_text = last_text
        super().__init__(f"no valid selection after {attempts} calls")


class TransportError(BCRError):
    """kind is one of: network, timeout, http, malformed_response, auth"""

    KINDS = ("network", "timeout", "http", "malformed_response", "auth")

    def __init__(self, kind: str, detail: str = "", status: Optional[int] = None):
        assert kind in self.KINDS, f"unknown transport error kind {kind}"
        self.kind = kind
        self.status = status
        self.detail = detail
        label = f"http({status})" if kind == "http" else kind
        super().__init__(f"{label}: {detail}" if detail else label)


# =====================================================================
# SIMULATOR / PLANNER
# =====================================================================

class UnknownTask(BCRError):
    def __init__(self, task: str):
        self.task = task
        super().__init__(f"unknown task {task}")


class Unsolvable(BCRError):
    def __init__(self, reason: str = "goal unreachable", nodes_expanded: int = 0,
                 nodes_generated: int = 0):
        self.nodes_expanded = nodes_expanded
        self.nodes_generated = nodes_generated
        super().__init__(reason)
