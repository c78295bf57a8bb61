"""Fehlertypen des Toolkits"""


class CosaError(Exception):
    """Basisklasse aller Toolkit-Fehler"""


class ArgumentError(CosaError, ValueError):
    """Ungültiges Argument (Vorbedingung verletzt)"""


class ShapeError(ArgumentError):
    """Dimensionen passen nicht zusammen"""

    def __init__(self, message: str, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class NumericalError(CosaError, ArithmeticError):
    """Numerisches Versagen (keine Konvergenz, schlechte Kondition, NaN)"""

    def __init__(self, message: str, residual: float = None):
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)
        self.residual = residual


class FormatError(CosaError):
    """Adapter-Datei ist beschädigt oder hat ein fremdes Format"""


class TruncatedFileError(CosaError, OSError):
    """Adapter-Datei endet vor dem erwarteten Ende"""


class TrainingError(CosaError):
    """Training divergiert oder liefert nicht-endliche Verluste"""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
