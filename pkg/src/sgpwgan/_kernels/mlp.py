"""Fully connected tanh networks on a flat parameter vector.

Layout: for each layer ``l`` the weight matrix ``W_l`` (``in x out``,
row-major) followed by the bias ``b_l``.  Hidden layers use ``tanh``, the
output layer is affine.  ``sizes`` is an int64 array ``[in, h1, ..., out]``.

The mixed derivative ``grad_psi (v . grad_x D)`` is computed forward-over-
reverse: a tangent in input direction ``v`` is pushed through both the
forward pass and the reverse (parameter-gradient) pass.
"""

import numpy as np

from .._accel import njit


@njit
def offsets(sizes):
    n_layers = sizes.shape[0] - 1
    offs = np.zeros(n_layers + 1, np.int64)
    for l in range(n_layers):
        offs[l + 1] = offs[l] + sizes[l] * sizes[l + 1] + sizes[l + 1]
    return offs


@njit
def _layer(params, sizes, offs, l):
    fan_in = sizes[l]
    fan_out = sizes[l + 1]
    s = offs[l]
    W = params[s:s + fan_in * fan_out].reshape((fan_in, fan_out))
    b = params[s + fan_in * fan_out:s + fan_in * fan_out + fan_out]
    return W, b


@njit
def _forward(params, sizes, offs, x):
    n_layers = sizes.shape[0] - 1
    hs = [x]
    h = x
    for l in range(n_layers):
        W, b = _layer(params, sizes, offs, l)
        a = h @ W + b
        if l < n_layers - 1:
            h = np.tanh(a)
        else:
            h = a
        hs.append(h)
    return hs


@njit
def _forward_tangent(params, sizes, offs, x, xdot):
    n_layers = sizes.shape[0] - 1
    hs = [x]
    hds = [xdot]
    h = x
    hd = xdot
    for l in range(n_layers):
        W, b = _layer(params, sizes, offs, l)
        a = h @ W + b
        ad = hd @ W
        if l < n_layers - 1:
            h = np.tanh(a)
            hd = (1.0 - h * h) * ad
        else:
            h = a
            hd = ad
        hs.append(h)
        hds.append(hd)
    return hs, hds


@njit
def forward(params, sizes, x):
    offs = offsets(sizes)
    hs = _forward(params, sizes, offs, x)
    return hs[len(hs) - 1]


@njit
def input_vjp(params, sizes, x, cot):
    """Per-sample ``J_x f(x_i)^T cot_i`` -> shape ``(n, in)``; also returns outputs."""
    offs = offsets(sizes)
    n_layers = sizes.shape[0] - 1
    hs = _forward(params, sizes, offs, x)
    g = cot
    for l in range(n_layers - 1, -1, -1):
        W, b = _layer(params, sizes, offs, l)
        if l < n_layers - 1:
            h = hs[l + 1]
            d = g * (1.0 - h * h)
        else:
            d = g
        g = d @ W.T
    return g, hs[n_layers]


@njit
def param_vjp(params, sizes, x, cot):
    """``sum_i J_params f(x_i)^T cot_i`` -> shape ``(n_params,)``."""
    offs = offsets(sizes)
    n_layers = sizes.shape[0] - 1
    hs = _forward(params, sizes, offs, x)
    out = np.zeros(offs[n_layers])
    g = cot
    for l in range(n_layers - 1, -1, -1):
        W, b = _layer(params, sizes, offs, l)
        fan_in = sizes[l]
        fan_out = sizes[l + 1]
        s = offs[l]
        if l < n_layers - 1:
            h = hs[l + 1]
            d = g * (1.0 - h * h)
        else:
            d = g
        out[s:s + fan_in * fan_out] = (hs[l].T @ d).ravel()
        out[s + fan_in * fan_out:s + fan_in * fan_out + fan_out] = d.sum(axis=0)
        if l > 0:
            g = d @ W.T
    return out


@njit
def param_vjp_per_sample(params, sizes, x, cot):
    """Per-sample parameter gradients ``J_params f(x_i)^T cot_i`` -> ``(n, n_params)``."""
    offs = offsets(sizes)
    n_layers = sizes.shape[0] - 1
    n = x.shape[0]
    hs = _forward(params, sizes, offs, x)
    out = np.zeros((n, offs[n_layers]))
    g = cot
    for l in range(n_layers - 1, -1, -1):
        W, b = _layer(params, sizes, offs, l)
        fan_in = sizes[l]
        fan_out = sizes[l + 1]
        s = offs[l]
        if l < n_layers - 1:
            h = hs[l + 1]
            d = g * (1.0 - h * h)
        else:
            d = g
        outer = hs[l].reshape((n, fan_in, 1)) * d.reshape((n, 1, fan_out))
        out[:, s:s + fan_in * fan_out] = outer.reshape((n, fan_in * fan_out))
        out[:, s + fan_in * fan_out:s + fan_in * fan_out + fan_out] = d
        if l > 0:
            g = d @ W.T
    return out


@njit
def _mixed_core(params, sizes, x, v, per_sample):
    offs = offsets(sizes)
    n_layers = sizes.shape[0] - 1
    n = x.shape[0]
    hs, hds = _forward_tangent(params, sizes, offs, x, v)
    n_params = offs[n_layers]
    if per_sample:
        out = np.zeros((n, n_params))
    else:
        out = np.zeros((1, n_params))
    g = np.ones((n, 1))
    gd = np.zeros((n, 1))
    for l in range(n_layers - 1, -1, -1):
        W, b = _layer(params, sizes, offs, l)
        fan_in = sizes[l]
        fan_out = sizes[l + 1]
        s = offs[l]
        if l < n_layers - 1:
            h = hs[l + 1]
            hd = hds[l + 1]
            slope = 1.0 - h * h
            d = g * slope
            dd = gd * slope - 2.0 * g * h * hd
        else:
            d = g
            dd = gd
        if per_sample:
            outer = (hs[l].reshape((n, fan_in, 1)) * dd.reshape((n, 1, fan_out))
                     + hds[l].reshape((n, fan_in, 1)) * d.reshape((n, 1, fan_out)))
            out[:, s:s + fan_in * fan_out] = outer.reshape((n, fan_in * fan_out))
            out[:, s + fan_in * fan_out:s + fan_in * fan_out + fan_out] = dd
        else:
            gw = hs[l].T @ dd + hds[l].T @ d
            out[0, s:s + fan_in * fan_out] = gw.ravel()
            out[0, s + fan_in * fan_out:s + fan_in * fan_out + fan_out] = dd.sum(axis=0)
        if l > 0:
            g = d @ W.T
            gd = dd @ W.T
    return out


@njit
def mixed_vjp(params, sizes, x, v):
    """``sum_i grad_params (v_i . grad_x f(x_i))`` for scalar-output ``f``."""
    return _mixed_core(params, sizes, x, v, False)[0]


@njit
def mixed_vjp_per_sample(params, sizes, x, v):
    """Rows ``grad_params (v_i . grad_x f(x_i))`` -> ``(n, n_params)``."""
    return _mixed_core(params, sizes, x, v, True)


@njit
def param_jvp(params, sizes, x, dparams):
    """Output tangent ``J_params f(x_i) dparams`` -> ``(n, out)``."""
    offs = offsets(sizes)
    n_layers = sizes.shape[0] - 1
    h = x
    hd = np.zeros(x.shape)
    for l in range(n_layers):
        W, b = _layer(params, sizes, offs, l)
        dW, db = _layer(dparams, sizes, offs, l)
        a = h @ W + b
        ad = hd @ W + h @ dW + db
        if l < n_layers - 1:
            h = np.tanh(a)
            hd = (1.0 - h * h) * ad
        else:
            h = a
            hd = ad
    return hd
