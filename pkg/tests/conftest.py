import numpy as np
import pytest

from mgtsd.tensor import Tensor


def finite_difference(f, params: dict[str, Tensor], step: float = 1e-5):
    """Central finite differences of scalar f(params) w.r.t. every entry."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            g.ravel()[i] = (f_plus - f_minus) / (2.0 * step)
        grads[name] = g
    return grads


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float((np.abs(analytic - numeric) / scale).max())


@pytest.fixture
def fd_check():
    def check(f, params, tol=1e-4, step=1e-5):
        from mgtsd.tensor import grad

        analytic = grad(f(), params)
        numeric = finite_difference(f, params, step=step)
        worst = max(
            max_rel_error(analytic[name].data, numeric[name]) for name in params
        )
        assert worst < tol, f"finite-difference mismatch: {worst:.3e}"
        return worst

    return check
