"""Fused elementwise kernels for the solver and the ESP transforms.

The ESP coefficient arrays hold L*N^2 values, so the solver is bound by
memory traffic rather than FFTs; these loops touch each element once.
numba is optional; the numpy fallbacks agree to rounding.
"""

import numpy as np

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _shrink_step_np(d, v, T, u, want_l1):
    s = v + 2.0 * d
    l1 = float(np.sum(np.abs(v + d))) if want_l1 else 0.0
    mag = np.abs(s)
    keep = mag > T
    scale = np.zeros(mag.shape)
    np.divide(mag - T, mag, out=scale, where=keep)
    np.multiply(s, scale, out=u)
    np.subtract(u, d, out=v)
    return l1


def _modulate_np(rot_conj_src, W, scale, out):
    np.multiply(np.conj(rot_conj_src), W[None, :] * scale, out=out)


def _column_dot_np(V, rot, acc):
    acc += np.sum(V * rot, axis=0)


TIE_ULPS = 8

if HAVE_NUMBA:

    @nb.njit(cache=True)
    def _shrink_step_nb(d, v, T, u, want_l1):
        l1 = 0.0
        for i in range(d.size):
            dr = d[i].real
            di = d[i].imag
            vr = v[i].real
            vi = v[i].imag
            if want_l1:
                xr = vr + dr
                xi = vi + di
                l1 += np.sqrt(xr * xr + xi * xi)
            sr = vr + 2.0 * dr
            si = vi + 2.0 * di
            mag = np.sqrt(sr * sr + si * si)
            if mag > T:
                g = (mag - T) / mag
                ur = sr * g
                ui = si * g
            else:
                ur = 0.0
                ui = 0.0
            u[i] = complex(ur, ui)
            v[i] = complex(ur - dr, ui - di)
        return l1

    @nb.njit(cache=True)
    def _modulate_nb(rot, W, scale, out):
        K, F = out.shape
        for k in range(K):
            for f in range(F):
                out[k, f] = rot[k, f].conjugate() * W[f] * scale

    @nb.njit(cache=True)
    def _column_dot_nb(V, rot, acc):
        K, F = V.shape
        for k in range(K):
            for f in range(F):
                acc[f] += V[k, f] * rot[k, f]


def shrink_step(d, v, T, u, want_l1=True):
    """One fused soft-threshold step on complex arrays.

    With ``x = d + v``: sets ``u = soft(x + d, T)``, overwrites ``v`` with
    ``u - d`` and returns ``||x||_1`` (0.0 when ``want_l1`` is false).
    """
    # Magnitudes within a few ulps of T count as ties and threshold to zero:
    # at lambda = lambda_max the largest argument converges onto T itself.
    T = float(T) * (1.0 + TIE_ULPS * np.finfo(float).eps)
    if HAVE_NUMBA:
        return _shrink_step_nb(d.reshape(-1), v.reshape(-1), T, u.reshape(-1), bool(want_l1))
    return _shrink_step_np(d, v, T, u, want_l1)


def modulate(rot, W, scale, out):
    """``out[k, f] = conj(rot[k, f]) * W[f] * scale``."""
    if HAVE_NUMBA:
        _modulate_nb(rot, W, complex(scale), out)
    else:
        _modulate_np(rot, W, scale, out)


def column_dot(V, rot, acc):
    """``acc[f] += sum_k V[k, f] * rot[k, f]``, summed in increasing k."""
    if HAVE_NUMBA:
        _column_dot_nb(V, rot, acc)
    else:
        _column_dot_np(V, rot, acc)
