"""Class-B exponential statistical structures: variance-function families,
moment and cumulant recursions, closure transforms, Fisher information and
exponential tail bounds, each paired with an independent numeric oracle."""

__version__ = "0.1.0"
