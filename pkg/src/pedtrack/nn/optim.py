import numpy as np


class RMSProp:
    """Plain RMSProp (no momentum, not centered).

    v <- rho * v + (1 - rho) * g**2
    theta <- theta - lr * g / (sqrt(v) + eps)
    """

    def __init__(self, rho=0.9, eps=1e-8):
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        self.rho = rho
        self.eps = eps
        self.v = {}

    def step(self, arrays, grads, lr):
        """Update ``arrays`` in place from ``grads``."""
        for name, g in grads.items():
            theta = arrays[name]
            if g.shape != theta.shape:
                raise ValueError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
            v = self.v.get(name)
            if v is None:
                v = self.v[name] = np.zeros_like(theta)
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            theta -= lr * g / (np.sqrt(v) + self.eps)


def rmsprop_step(theta, grads, state, lr, rho=0.9, eps=1e-8):
    """Functional form: returns new ``(theta, state)`` dicts, inputs untouched."""
    new_theta, new_state = {}, {}
    for name, g in grads.items():
        v = state.get(name, np.zeros_like(g))
        v = rho * v + (1.0 - rho) * g * g
        new_state[name] = v
        new_theta[name] = theta[name] - lr * g / (np.sqrt(v) + eps)
    return new_theta, new_state
