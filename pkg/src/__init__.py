"""prophetlab - prophet inequalities, stopping rules and optimal ordering at desk scale."""

__version__ = "0.1.0"
