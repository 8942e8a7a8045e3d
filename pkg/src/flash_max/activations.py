from __future__ import annotations

import numpy as np
from scipy import special

from flash_max.models import Activation

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _tanh(a):
    h = np.tanh(a)
    return h, 1.0 - h * h


def _cos(a):
    return np.cos(a), -np.sin(a)


def _relu(a):
    # relu'(0) = 0
    return np.maximum(a, 0.0), (a > 0).astype(float)


def _silu(a):
    s = special.expit(a)
    return a * s, s + a * s * (1.0 - s)


def _gelu(a):
    cdf = special.ndtr(a)
    return a * cdf, cdf + a * _INV_SQRT_2PI * np.exp(-0.5 * a * a)


def _sigmoid(a):
    s = special.expit(a)
    return s, s * (1.0 - s)


_TABLE = {
    Activation.TANH: _tanh,
    Activation.COS: _cos,
    Activation.RELU: _relu,
    Activation.SILU: _silu,
    Activation.GELU: _gelu,
    Activation.SIGMOID: _sigmoid,
}


def activate_with_derivative(activation: Activation, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _TABLE[Activation(activation)](a)


def activate(activation: Activation, a: np.ndarray) -> np.ndarray:
    activation = Activation(activation)
    if activation is Activation.TANH:
        return np.tanh(a)
    if activation is Activation.COS:
        return np.cos(a)
    return activate_with_derivative(activation, a)[0]


def derivative(activation: Activation, a: np.ndarray) -> np.ndarray:
    return activate_with_derivative(activation, a)[1]
