"""Forward and backward primitives for the two network architectures.

All activations are dense arrays in batch x height x width x channels
layout; convolution weights are outCh x inCh x 3 x 3.  Convolution means
cross-correlation (no kernel flip) with stride 1 and zero padding 1, so
spatial extents are preserved.

Convolutions run as one GEMM per sample (stacked matmul over the batch
axis), which keeps each sample's result bit-identical no matter how the
batch is grouped.  The frozen-layer feature cache relies on that.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InternalError, ShapeError


@dataclass
class ConvParams:
    """3x3 convolution parameters: weights (O, C, 3, 3) and bias (O,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.bias)
        if w.ndim != 4 or w.shape[2:] != (3, 3):
            raise ShapeError(f"conv weights must be (out, in, 3, 3), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv bias shape {b.shape} does not match "
                             f"{w.shape[0]} output channels")
        self.weights, self.bias = w, b


@dataclass
class DenseParams:
    """Dense-layer parameters: weights (in, out) and bias (out,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.bias)
        if w.ndim != 2:
            raise ShapeError(f"dense weights must be 2D, got {w.shape}")
        if b.shape != (w.shape[1],):
            raise ShapeError(f"dense bias shape {b.shape} does not match "
                             f"{w.shape[1]} outputs")
        self.weights, self.bias = w, b


def im2col3x3(x):
    """Unfold 3x3 zero-padded patches: (B,H,W,C) -> (B, H*W, 9*C).

    Column index is (dy*3 + dx)*C + c, matching _weight_matrix below.
    """
    b, h, w, c = x.shape
    # zeros + slice assign beats np.pad's generic path on hot shapes
    padded = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    padded[:, 1:-1, 1:-1, :] = x
    cols = np.empty((b, h, w, 9, c), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, dy * 3 + dx, :] = padded[:, dy:dy + h, dx:dx + w, :]
    return cols.reshape(b, h * w, 9 * c)


def _weight_matrix(weights):
    # (O, C, 3, 3) -> (9*C, O) with row index (dy*3 + dx)*C + c
    o = weights.shape[0]
    return np.ascontiguousarray(weights.transpose(2, 3, 1, 0).reshape(-1, o))


def _check_conv_input(x, params):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (B,H,W,C), got {x.shape}")
    if x.shape[3] != params.weights.shape[1]:
        raise ShapeError(
            f"input channels {x.shape} do not match weights "
            f"{params.weights.shape}"
        )


def conv2d_same(x, params, cols=None):
    """Same-size 3x3 convolution: (B,H,W,C) -> (B,H,W,O)."""
    _check_conv_input(x, params)
    b, h, w, _ = x.shape
    if cols is None:
        cols = im2col3x3(x)
    out = np.matmul(cols, _weight_matrix(params.weights))
    out += params.bias
    return out.reshape(b, h, w, params.weights.shape[0])


def conv2d_param_grads(cols, grad):
    """Weight/bias gradients from saved input columns and upstream grad."""
    b, h, w, o = grad.shape
    gm = grad.reshape(b * h * w, o)
    # one (9C, B*HW) @ (B*HW, O) product; the batch sum folds into K.
    # Gradients have no per-sample grouping contract, unlike the forward.
    dwm = cols.reshape(b * h * w, -1).T @ gm
    c = dwm.shape[0] // 9
    dw = dwm.reshape(3, 3, c, o).transpose(3, 2, 0, 1)
    db = gm.sum(axis=0)
    return dw, db


def conv2d_input_grad(params, grad):
    """Gradient w.r.t. the convolution input (the adjoint map).

    Equals a same-size convolution of the upstream gradient with the
    spatially flipped, channel-transposed weights.
    """
    flipped = params.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    zero_bias = np.zeros(flipped.shape[0], dtype=params.bias.dtype)
    return conv2d_same(grad, ConvParams(np.ascontiguousarray(flipped), zero_bias))


def conv2d_backward(x, params, grad, cols=None):
    """Adjoints of conv2d_same: returns (dInput, dWeights, dBias)."""
    _check_conv_input(x, params)
    if grad.shape != x.shape[:3] + (params.weights.shape[0],):
        raise ShapeError(f"upstream grad shape {grad.shape} does not match "
                         f"conv output for input {x.shape}")
    if cols is None:
        cols = im2col3x3(x)
    dw, db = conv2d_param_grads(cols, grad)
    dx = conv2d_input_grad(params, grad)
    return dx, dw, db


def conv2d_oracle(x, params):
    """Literal per-pixel summation form of conv2d_same (verification only)."""
    _check_conv_input(x, params)
    b, h, w, cin = x.shape
    out_ch = params.weights.shape[0]
    out = np.zeros((b, h, w, out_ch),
                   dtype=np.result_type(x.dtype, params.weights.dtype))
    for bi in range(b):
        for y in range(h):
            for xx in range(w):
                for o in range(out_ch):
                    acc = params.bias[o]
                    for c in range(cin):
                        for dy in (-1, 0, 1):
                            for dx in (-1, 0, 1):
                                yy, xc = y + dy, xx + dx
                                if 0 <= yy < h and 0 <= xc < w:
                                    acc += (params.weights[o, c, dy + 1, dx + 1]
                                            * x[bi, yy, xc, c])
                    out[bi, y, xx, o] = acc
    return out


def maxpool2_ceil(x):
    """2x2 max pooling, stride 2, ceil mode.

    Odd extents are padded on the bottom/right with -inf, so the output is
    ceil(h/2) x ceil(w/2).  Returns (output, argmax) where argmax holds the
    within-window winner index 0..3 in row-major window order; ties go to
    the smallest flat input index.
    """
    if x.ndim != 4:
        raise ShapeError(f"pool input must be (B,H,W,C), got {x.shape}")
    b, h, w, c = x.shape
    h2, w2 = -(-h // 2), -(-w // 2)
    if h % 2 or w % 2:
        padded = np.full((b, 2 * h2, 2 * w2, c), -np.inf, dtype=x.dtype)
        padded[:, :h, :w, :] = x
    else:
        padded = x
    windows = (padded.reshape(b, h2, 2, w2, 2, c)
               .transpose(0, 1, 3, 2, 4, 5)
               .reshape(b, h2, w2, 4, c))
    arg = windows.argmax(axis=3).astype(np.uint8)
    return windows.max(axis=3), arg


def maxpool2_backward(arg, grad, input_shape):
    """Route each upstream element to its argmax position; rest get 0."""
    b, h, w, c = input_shape
    h2, w2 = -(-h // 2), -(-w // 2)
    if arg.shape != (b, h2, w2, c) or grad.shape != arg.shape:
        raise ShapeError(f"argmax {arg.shape} / grad {grad.shape} do not "
                         f"match input shape {input_shape}")
    if arg.size and int(arg.max()) > 3:
        raise InternalError("pooling argmax index out of range")
    dwin = np.zeros((b, h2, w2, 4, c), dtype=grad.dtype)
    np.put_along_axis(dwin, arg[:, :, :, None, :].astype(np.intp),
                      grad[:, :, :, None, :], axis=3)
    dx = (dwin.reshape(b, h2, w2, 2, 2, c)
          .transpose(0, 1, 3, 2, 4, 5)
          .reshape(b, 2 * h2, 2 * w2, c))
    return np.ascontiguousarray(dx[:, :h, :w, :])


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad):
    """Pass gradient where the forward input was > 0, zero elsewhere."""
    return grad * (x > 0)


def dense(x, params):
    """Affine map over a batch of rows: (B, in) -> (B, out)."""
    if x.ndim != 2:
        raise ShapeError(f"dense input must be 2D, got {x.shape}")
    if x.shape[1] != params.weights.shape[0]:
        raise ShapeError(f"dense input {x.shape} does not match weights "
                         f"{params.weights.shape}")
    return x @ params.weights + params.bias


def dense_backward(x, params, grad):
    """Adjoints of dense: returns (dInput, dWeights, dBias)."""
    if grad.shape != (x.shape[0], params.weights.shape[1]):
        raise ShapeError(f"upstream grad shape {grad.shape} does not match "
                         f"dense output for input {x.shape}")
    dx = grad @ params.weights.T
    dw = x.T @ grad
    db = grad.sum(axis=0)
    return dx, dw, db


def dropout(x, rate, rng, training):
    """Inverted dropout.

    Training: each element is zeroed independently with probability `rate`
    and survivors are scaled by 1/(1-rate), so inference is the identity.
    Returns (output, mask); backward is upstream * mask.
    """
    if not 0.0 <= rate < 1.0:
        raise DataError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return x * mask, mask


def softmax_xent(logits, labels):
    """Mean cross-entropy over a batch of logit rows.

    Returns (loss, probs, dLogits) with dLogits = (probs - onehot) / B.
    Numerically stable: the row max is subtracted before exponentiation.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (B, K), got {logits.shape}")
    b, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} does not match "
                         f"batch size {b}")
    bad = (labels < 0) | (labels >= k)
    if bad.any():
        row = int(np.argmax(bad))
        raise DataError(f"label {int(labels[row])} out of range [0, {k}) "
                        f"at row {row}")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    probs = ez / sez
    logp = z - np.log(sez)
    rows = np.arange(b)
    loss = float(-logp[rows, labels].mean())
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= b
    return loss, probs, dlogits
