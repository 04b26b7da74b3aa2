class DomainError(ValueError):
    """A parameter lies outside the domain where a quantity is defined."""
