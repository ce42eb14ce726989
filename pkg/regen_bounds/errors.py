from __future__ import annotations


class RegenBoundsError(RuntimeError):
    pass


class DomainError(RegenBoundsError, ValueError):
    """Argument outside the domain where a formula or transform is defined."""


class SingularError(RegenBoundsError):
    def __init__(self, pivot_index: int, pivot: float):
        super().__init__(f"solve: pivot {pivot_index} has magnitude {abs(pivot):.3e} (matrix is singular)")
        self.pivot_index = pivot_index
        self.pivot = pivot


class QuadratureError(RegenBoundsError):
    pass


class NoRootError(RegenBoundsError):
    pass


class DegenerateError(RegenBoundsError):
    pass


class ResourceError(RegenBoundsError):
    pass


class ConfigError(RegenBoundsError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
