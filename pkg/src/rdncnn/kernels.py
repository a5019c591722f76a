"""Low-level convolution kernels: numba JIT loops plus a numpy fallback.

All functions take the zero-padded input; padding itself lives in ops.py.
The forward accumulation order per output element is fixed (bias first,
then channel-major, then kernel row, then kernel column) in both backends,
so forward outputs are bit-identical across backends. Backward reductions
are deterministic within each backend.
"""

import numpy as np

from . import backend

if backend.HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised only when numba is absent
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

@njit(cache=True)
def _conv2d_forward_nb(padded, kernel, bias, out):
    N = padded.shape[0]
    C = padded.shape[1]
    F, H, W = out.shape[1], out.shape[2], out.shape[3]
    ks = kernel.shape[2]
    for n in range(N):
        for f in range(F):
            b = bias[f]
            for y in range(H):
                for x in range(W):
                    out[n, f, y, x] = b
            for c in range(C):
                for i in range(ks):
                    for j in range(ks):
                        w = kernel[f, c, i, j]
                        for y in range(H):
                            for x in range(W):
                                out[n, f, y, x] += w * padded[n, c, y + i, x + j]


@njit(cache=True)
def _conv2d_grad_input_nb(grad_out, kernel, grad_padded):
    N, F, H, W = grad_out.shape
    C = kernel.shape[1]
    ks = kernel.shape[2]
    for n in range(N):
        for c in range(C):
            for f in range(F):
                for i in range(ks):
                    for j in range(ks):
                        w = kernel[f, c, i, j]
                        for y in range(H):
                            for x in range(W):
                                grad_padded[n, c, y + i, x + j] += w * grad_out[n, f, y, x]


@njit(cache=True)
def _conv2d_grad_kernel_nb(padded, grad_out, grad_kernel):
    N, F, H, W = grad_out.shape
    C = padded.shape[1]
    ks = grad_kernel.shape[2]
    # Row accumulator keeps the inner loop vectorizable; the final short
    # reduction over W is sequential, so results are run-to-run stable.
    row = np.zeros(W, grad_out.dtype)
    for f in range(F):
        for c in range(C):
            for i in range(ks):
                for j in range(ks):
                    for x in range(W):
                        row[x] = 0.0
                    for n in range(N):
                        for y in range(H):
                            for x in range(W):
                                row[x] += grad_out[n, f, y, x] * padded[n, c, y + i, x + j]
                    s = row[0]
                    for x in range(1, W):
                        s += row[x]
                    grad_kernel[f, c, i, j] = s


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------

def _conv2d_forward_np(padded, kernel, bias, out):
    F, C, ks, _ = kernel.shape
    H, W = out.shape[2], out.shape[3]
    out[:] = bias[None, :, None, None]
    for c in range(C):
        for i in range(ks):
            for j in range(ks):
                window = padded[:, c, i:i + H, j:j + W]
                out += kernel[None, :, c, i, j, None, None] * window[:, None]


def _conv2d_grad_input_np(grad_out, kernel, grad_padded):
    _, _, H, W = grad_out.shape
    ks = kernel.shape[2]
    for i in range(ks):
        for j in range(ks):
            # contract over filters: (N,F,H,W) x (F,C) -> (N,H,W,C)
            term = np.tensordot(grad_out, kernel[:, :, i, j], axes=([1], [0]))
            grad_padded[:, :, i:i + H, j:j + W] += term.transpose(0, 3, 1, 2)


def _conv2d_grad_kernel_np(padded, grad_out, grad_kernel):
    F, C, ks, _ = grad_kernel.shape
    H, W = grad_out.shape[2], grad_out.shape[3]
    for c in range(C):
        for i in range(ks):
            for j in range(ks):
                window = padded[:, c, i:i + H, j:j + W]
                grad_kernel[:, c, i, j] = np.tensordot(
                    grad_out, window, axes=([0, 2, 3], [0, 1, 2]))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def conv2d_forward_kernel(padded, kernel, bias, out):
    if backend.use_numba():
        _conv2d_forward_nb(padded, kernel, bias, out)
    else:
        _conv2d_forward_np(padded, kernel, bias, out)


def conv2d_grad_input_kernel(grad_out, kernel, grad_padded):
    if backend.use_numba():
        _conv2d_grad_input_nb(grad_out, kernel, grad_padded)
    else:
        _conv2d_grad_input_np(grad_out, kernel, grad_padded)


def conv2d_grad_kernel_kernel(padded, grad_out, grad_kernel):
    if backend.use_numba():
        _conv2d_grad_kernel_nb(padded, grad_out, grad_kernel)
    else:
        _conv2d_grad_kernel_np(padded, grad_out, grad_kernel)
