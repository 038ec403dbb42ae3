"""Early-stopped gradient descent for shallow ReLU networks and their tangent kernel."""

__version__ = "0.1.0"
