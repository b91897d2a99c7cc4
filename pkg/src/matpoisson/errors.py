"""Exception types shared across the package."""


class DivergenceError(Exception):
    """A series gate failed: the requested quantity has no certified evaluation."""


class ConsistencyError(Exception):
    """Two evaluation routes disagreed beyond their certified tolerances."""


class SamplingError(Exception):
    """Rejection sampling exhausted its attempt budget."""
