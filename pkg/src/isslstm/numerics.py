"""Float64 linear-algebra primitives shared by every other module.

Matrices and vectors are plain ``numpy.ndarray`` objects (row-major,
``float64``). The ``as_matrix``/``as_vector`` helpers enforce the shape and
finiteness invariants at construction time.
"""

import numpy as np


class DomainError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def as_vector(v, name="vector"):
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise DomainError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DomainError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def inf_norm_vec(v):
    """Max absolute entry."""
    a = as_vector(v)
    if a.size == 0:
        raise DomainError("infinity norm of an empty vector")
    return float(np.max(np.abs(a)))


def inf_norm_mat(m):
    """Induced infinity norm: largest absolute row sum."""
    a = as_matrix(m)
    if a.size == 0:
        raise DomainError("infinity norm needs a non-empty matrix")
    return float(np.max(np.sum(np.abs(a), axis=1)))


def two_norm_vec(v):
    """Euclidean norm, scaled by the largest entry so tiny or huge values
    neither underflow nor overflow."""
    a = as_vector(v)
    if a.size == 0:
        raise DomainError("2-norm of an empty vector")
    s = np.max(np.abs(a))
    if s == 0.0:
        return 0.0
    z = a / s
    return float(s * np.sqrt(np.dot(z, z)))


def sigmoid(x):
    """Logistic function, evaluated without overflow for either sign of x."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh_act(x):
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def tanh_deriv(x):
    t = np.tanh(np.asarray(x, dtype=np.float64))
    out = 1.0 - t * t
    return out if out.ndim else float(out)


def matrix_two_norm(m, max_iter=200, rtol=1e-12):
    """Spectral norm by power iteration on ``m.T @ m``.

    Starts from the all-ones vector so the result is deterministic. Stops
    after ``max_iter`` iterations or once the relative change of the
    Rayleigh quotient drops below ``rtol``.
    """
    a = as_matrix(m)
    if a.size == 0:
        raise DomainError("2-norm of an empty matrix")
    gram = a.T @ a
    v = np.ones(a.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new_lam = float(v @ w)
        v = w / nw
        if lam > 0.0 and abs(new_lam - lam) <= rtol * abs(new_lam):
            lam = new_lam
            break
        lam = new_lam
    return float(np.sqrt(max(lam, 0.0)))


# Taylor degree for the scaled exponential; with ||X|| <= 1/2 the remainder
# is below 0.5**19 / 19! ~ 1e-23.
_EXPM_DEGREE = 18


def mat_exp(m, scale=1.0):
    """``exp(scale * m)`` by scaling and squaring around a Taylor core."""
    a = as_matrix(m, "mat_exp argument")
    if a.shape[0] != a.shape[1]:
        raise DomainError(f"mat_exp needs a square matrix, got {a.shape}")
    x = float(scale) * a
    n = x.shape[0]
    if n == 0:
        return x.copy()
    norm = inf_norm_mat(x)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        x = x / (2.0 ** squarings)
    # Horner evaluation of sum_k x^k / k!
    result = np.eye(n)
    for k in range(_EXPM_DEGREE, 0, -1):
        result = np.eye(n) + (x @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result
