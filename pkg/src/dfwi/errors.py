class NumericalError(RuntimeError):
    """Numerical failure: non-finite wavefield, diverged training loss, etc.

    The CLI maps this to exit code 3 (vs 2 for configuration errors).
    """
