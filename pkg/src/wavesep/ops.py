"""Differentiable operators over ``[..., channels, time]`` signals.

Signals may carry any number of leading batch axes; the channel axis is
always ``-2`` and time is ``-1``.  Convolutions are stride-1 with zero
"same" padding and use the cross-correlation convention.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from wavesep.tensor import DimensionError, ParameterError, Tensor, make_result


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def same_padding(k: int, dilation: int) -> tuple[int, int]:
    """Left/right zero padding keeping length under stride 1.

    An odd total goes one extra sample to the right.
    """
    p = (k - 1) * dilation
    return p // 2, p - p // 2


def _taps(T: int, k: int, d: int) -> Iterator[tuple[int, int, int, int]]:
    # (tap, shift, t0, t1): output[t0:t1] reads input[t0+shift:t1+shift]
    left, _ = same_padding(k, d)
    for j in range(k):
        s = j * d - left
        t0, t1 = max(0, -s), min(T, T - s)
        if t1 > t0:
            yield j, s, t0, t1


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape((-1,) + a.shape[-2:])


# Per-item 2-D products: batched np.matmul on strided views bypasses BLAS.
def _correlate(x: np.ndarray, w: np.ndarray, d: int) -> np.ndarray:
    T = x.shape[-1]
    xf = _flat(x)
    out = np.zeros((xf.shape[0], w.shape[0], T), dtype=x.dtype)
    for j, s, t0, t1 in _taps(T, w.shape[2], d):
        wj = np.ascontiguousarray(w[:, :, j])
        for n in range(xf.shape[0]):
            out[n, :, t0:t1] += wj @ xf[n, :, t0 + s:t1 + s]
    return out.reshape(x.shape[:-2] + out.shape[-2:])


def _correlate_adjoint(y: np.ndarray, w: np.ndarray, d: int) -> np.ndarray:
    T = y.shape[-1]
    yf = _flat(y)
    out = np.zeros((yf.shape[0], w.shape[1], T), dtype=y.dtype)
    for j, s, t0, t1 in _taps(T, w.shape[2], d):
        wj = np.ascontiguousarray(w[:, :, j].T)
        for n in range(yf.shape[0]):
            out[n, :, t0 + s:t1 + s] += wj @ yf[n, :, t0:t1]
    return out.reshape(y.shape[:-2] + out.shape[-2:])


def _weight_grad(g: np.ndarray, x: np.ndarray, k: int, d: int) -> np.ndarray:
    # d/dw of sum(g * correlate(x, w)); shape [C_out, C_in, k]
    T = x.shape[-1]
    gf, xf = _flat(g), _flat(x)
    gw = np.zeros((g.shape[-2], x.shape[-2], k), dtype=x.dtype)
    for j, s, t0, t1 in _taps(T, k, d):
        acc = gw[:, :, j]
        for n in range(xf.shape[0]):
            acc += gf[n, :, t0:t1] @ xf[n, :, t0 + s:t1 + s].T
        gw[:, :, j] = acc
    return gw


def _bias_shape(b: np.ndarray) -> np.ndarray:
    return b[:, None]


def _check_conv(x: Tensor, w: Tensor, b: Tensor | None, dilation: int,
                in_axis: int, out_axis: int) -> None:
    if int(dilation) != dilation or dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation}")
    if w.ndim != 3:
        raise DimensionError(f"weight must be 3-D, got shape {w.shape}")
    if x.ndim < 2 or x.shape[-1] < 1:
        raise DimensionError(f"input must be [..., C, T] with T >= 1, got {x.shape}")
    if x.shape[-2] != w.shape[in_axis]:
        raise DimensionError(
            f"input has {x.shape[-2]} channels but weight expects {w.shape[in_axis]}")
    if b is not None and b.shape != (w.shape[out_axis],):
        raise DimensionError(f"bias shape {b.shape} != ({w.shape[out_axis]},)")


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Same-padded dilated cross-correlation.

    ``w`` is ``[C_out, C_in, k]``; output keeps the input's time length.
    """
    _check_conv(x, w, b, dilation, in_axis=1, out_axis=0)
    d = int(dilation)
    k = w.shape[2]
    out = _correlate(x.data, w.data, d)
    if b is not None:
        out += _bias_shape(b.data)

    def grad_fn(g):
        gx = _correlate_adjoint(g, w.data, d) if x.requires_grad else None
        gw = _weight_grad(g, x.data, k, d) if w.requires_grad else None
        gb = g.sum(axis=tuple(range(g.ndim - 2)) + (g.ndim - 1,)) if b is not None else None
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return make_result("conv1d", inputs, out, grad_fn, dilation=d, padding=same_padding(k, d))


def conv1d_transpose(x: Tensor, w: Tensor, b: Tensor | None = None,
                     dilation: int = 1) -> Tensor:
    """Exact adjoint of :func:`conv1d` with the same geometry, plus bias.

    ``w`` is ``[C_in, C_out, k]``, i.e. the weight of the forward
    convolution mapping ``C_out`` channels to ``C_in``.
    """
    _check_conv(x, w, b, dilation, in_axis=0, out_axis=1)
    d = int(dilation)
    k = w.shape[2]
    out = _correlate_adjoint(x.data, w.data, d)
    if b is not None:
        out += _bias_shape(b.data)

    def grad_fn(g):
        gx = _correlate(g, w.data, d) if x.requires_grad else None
        gw = _weight_grad(x.data, g, k, d) if w.requires_grad else None
        gb = g.sum(axis=tuple(range(g.ndim - 2)) + (g.ndim - 1,)) if b is not None else None
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return make_result("conv1d_transpose", inputs, out, grad_fn, dilation=d,
                       padding=same_padding(k, d))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ParameterError(f"slope must lie in (0, 1), got {slope}")
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)

    def grad_fn(g):
        return (np.where(pos, g, slope * g),)

    return make_result("leaky_relu", (x,), out, grad_fn, slope=slope)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return make_result("tanh", (x,), out, grad_fn)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis in argument order."""
    parts = list(parts)
    if not parts:
        raise DimensionError("concat_channels needs at least one part")
    if len(parts) == 1:
        return parts[0]
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or p.shape[:-2] != ref[:-2] or p.shape[-1] != ref[-1]:
            raise DimensionError(f"cannot concatenate {p.shape} with {ref} on channels")
    out = np.concatenate([p.data for p in parts], axis=-2)
    offsets = np.cumsum([0] + [p.shape[-2] for p in parts])

    def grad_fn(g):
        return tuple(g[..., offsets[i]:offsets[i + 1], :] for i in range(len(parts)))

    return make_result("concat_channels", parts, out, grad_fn)


def decimate2(x: Tensor) -> Tensor:
    """Keep even time indices; output length is ``ceil(T / 2)``."""
    out = np.ascontiguousarray(x.data[..., ::2])

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[..., ::2] = g
        return (gx,)

    return make_result("decimate2", (x,), out, grad_fn)


def upsample_linear2(x: Tensor) -> Tensor:
    """Double the time length by linear interpolation.

    Even outputs copy the input; odd outputs average neighbours, with the
    last sample replicated at the right edge.
    """
    xd = x.data
    if xd.shape[-1] < 1:
        raise DimensionError("upsample_linear2 needs T >= 1")
    nxt = np.concatenate([xd[..., 1:], xd[..., -1:]], axis=-1)
    out = np.empty(xd.shape[:-1] + (2 * xd.shape[-1],), dtype=xd.dtype)
    out[..., 0::2] = xd
    out[..., 1::2] = 0.5 * (xd + nxt)

    def grad_fn(g):
        ge, go = g[..., 0::2], g[..., 1::2]
        gx = ge + 0.5 * go
        gx[..., 1:] += 0.5 * go[..., :-1]
        gx[..., -1] += 0.5 * go[..., -1]
        return (gx,)

    return make_result("upsample_linear2", (x,), out, grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return make_result("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")
    return make_result("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)
    return make_result("sum", (x,), out, lambda g: (np.broadcast_to(g, x.shape).copy(),))


def scale(x: Tensor, factor: float) -> Tensor:
    return make_result("scale", (x,), x.data * factor, lambda g: (g * factor,), factor=factor)


def stack(parts: Sequence[Tensor], axis: int = -3) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    parts = list(parts)
    for p in parts[1:]:
        if p.shape != parts[0].shape:
            raise DimensionError(f"stack: shapes {p.shape} and {parts[0].shape} differ")
    out = np.stack([p.data for p in parts], axis=axis)

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return make_result("stack", parts, out, grad_fn, axis=axis)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean over all elements of ``(a - b)**2``."""
    if a.shape != b.shape:
        raise DimensionError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=diff.dtype)

    def grad_fn(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return make_result("mse", (a, b), out, grad_fn)
