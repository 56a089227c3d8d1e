"""Exception types raised by mfdplate."""


class MfdError(Exception):
    """Base class for all package errors."""


class MeshError(MfdError):
    """Invalid mesh construction or generation failure."""


class MeshFormatError(MeshError):
    """Malformed mesh file."""


class DegenerateElementError(MfdError):
    def __init__(self, cell, msg="degenerate element"):
        self.cell = cell
        super().__init__(f"cell {cell}: {msg}")


class IllConditionedElementError(MfdError):
    def __init__(self, cell, cond):
        self.cell = cell
        self.cond = cond
        super().__init__(f"cell {cell}: ill-conditioned local block (cond={cond:.3e})")


class RankAmbiguityError(MfdError):
    """Stress tensor rank cannot be decided; pass ``rank=`` explicitly."""


class SolverError(MfdError):
    """Linear or eigen solver failure."""

    def __init__(self, msg, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(msg)
