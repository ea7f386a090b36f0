"""Exception hierarchy shared by every pipeline stage."""


class GlyphForgeError(Exception):
    """Base class; ``stage`` is filled in by the pipeline when re-raising."""

    stage: str | None = None


class InvalidInput(GlyphForgeError, ValueError):
    pass


class FontNotFound(GlyphForgeError):
    pass


class MissingGlyph(GlyphForgeError):
    pass


class TemplateError(GlyphForgeError, ValueError):
    pass


class BackendUnavailable(GlyphForgeError):
    pass


class MalformedResponse(GlyphForgeError):
    pass


class ShapeError(GlyphForgeError, ValueError):
    pass


class InvariantViolation(GlyphForgeError):
    pass


class CapabilityError(GlyphForgeError):
    pass


class NumericalError(GlyphForgeError, ArithmeticError):
    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index
