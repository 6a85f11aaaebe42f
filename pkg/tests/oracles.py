"""Independent reference computations shared by the test modules."""
import numpy as np

from siim.neural import forward, nll_loss


def fd_gradient(params, x, y, step=1e-5):
    """Central finite differences of the mean batch loss."""
    out = []
    for k, arr in enumerate(params.arrays()):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus = [a.copy() for a in params.arrays()]
            minus = [a.copy() for a in params.arrays()]
            plus[k][idx] += step
            minus[k][idx] -= step
            lp = nll_loss(*forward(params.with_arrays(plus), x), y)
            lm = nll_loss(*forward(params.with_arrays(minus), x), y)
            g[idx] = (lp - lm) / (2 * step)
        out.append(g)
    return out


def max_rel_error(analytic, numeric):
    errs = []
    for a, n in zip(analytic, numeric):
        denom = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
        errs.append(np.abs(a - n).max() / denom)
    return max(errs)
