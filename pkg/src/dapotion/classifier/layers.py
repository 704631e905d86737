"""Differentiable building blocks of the shallow volumetric CNN.

Every layer works on (batch, channels, *spatial) arrays with 2 or 3 spatial
axes, keeps whatever float dtype the model was built with, caches what its
backward pass needs, and accumulates parameter gradients into ``.grads``.
Convolutions are evaluated as one batched matmul per kernel offset, which
keeps both passes vectorized without im2col buffers.
"""

from __future__ import annotations

import itertools

import numpy as np


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base: no parameters, identity bookkeeping."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv(Layer):
    """N-D convolution, odd kernel, zero padding k//2, stride 1 or 2.

    Output spatial size is (n - 1) // stride + 1, so stride 2 halves even
    extents exactly and rounds odd ones up.  Both passes run as single
    GEMMs over an unfolded patch matrix; the forward pass caches it for
    the weight gradient.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride, spatial_ndim, rng, dtype):
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.spatial_ndim = spatial_ndim
        k_vol = kernel_size**spatial_ndim
        self.weight = xavier_uniform(
            rng,
            (out_channels, in_channels) + (kernel_size,) * spatial_ndim,
            fan_in=in_channels * k_vol,
            fan_out=out_channels * k_vol,
            dtype=dtype,
        )
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)
        self.input_grad = True  # the network's first conv can skip its input gradient
        self._cols = None
        self._in_spatial = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.gweight, "bias": self.gbias}

    def _unfold(self, x):
        """Patch matrix of shape (batch * out_vol, in_channels * kernel_vol)."""
        pad = self.kernel_size // 2
        xp = np.pad(x, [(0, 0), (0, 0)] + [(pad, pad)] * self.spatial_ndim)
        win = np.lib.stride_tricks.sliding_window_view(
            xp, (self.kernel_size,) * self.spatial_ndim, axis=tuple(range(2, 2 + self.spatial_ndim))
        )
        if self.stride > 1:
            sub = (slice(None), slice(None)) + (slice(None, None, self.stride),) * self.spatial_ndim
            win = win[sub]
        out_spatial = win.shape[2 : 2 + self.spatial_ndim]
        # (batch, out positions..., in_channels, kernel offsets...)
        order = (0,) + tuple(range(2, 2 + self.spatial_ndim)) + (1,) + tuple(
            range(2 + self.spatial_ndim, win.ndim)
        )
        k_vol = self.kernel_size**self.spatial_ndim
        cols = win.transpose(order).reshape(-1, self.in_channels * k_vol)
        return cols, out_spatial

    def forward(self, x, train, rng=None):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        batch = x.shape[0]
        cols, out_spatial = self._unfold(x)
        w_mat = self.weight.reshape(self.out_channels, -1)
        y = cols @ w_mat.T + self.bias.astype(x.dtype)
        y = y.reshape((batch,) + tuple(out_spatial) + (self.out_channels,))
        y = np.moveaxis(y, -1, 1)
        if train:
            self._cols = cols
            self._in_spatial = x.shape[2:]
            self._out_spatial = tuple(out_spatial)
        return np.ascontiguousarray(y)

    def backward(self, dy):
        batch = dy.shape[0]
        vol = int(np.prod(self._out_spatial))
        dy_cols = np.moveaxis(dy, 1, -1).reshape(batch * vol, self.out_channels)
        w_mat = self.weight.reshape(self.out_channels, -1)
        self.gweight[...] = (dy_cols.T @ self._cols).reshape(self.gweight.shape)
        self.gbias[...] = dy_cols.sum(axis=0)
        if not self.input_grad:
            return None
        dcols = dy_cols @ w_mat
        return self._fold(dcols, batch)

    def _fold(self, dcols, batch):
        """Scatter-add patch gradients back onto the (cropped) input."""
        pad = self.kernel_size // 2
        padded_spatial = tuple(n + 2 * pad for n in self._in_spatial)
        dxp = np.zeros((batch, self.in_channels) + padded_spatial, dtype=dcols.dtype)
        k = self.kernel_size
        d = self.spatial_ndim
        dcols = dcols.reshape((batch,) + self._out_spatial + (self.in_channels,) + (k,) * d)
        src_order = (0, 1 + d) + tuple(range(1, 1 + d))  # (batch, channels, out positions...)
        for offset in itertools.product(range(k), repeat=d):
            slices = tuple(
                slice(o, o + self.stride * (n - 1) + 1, self.stride)
                for o, n in zip(offset, self._out_spatial)
            )
            src = dcols[(Ellipsis,) + offset].transpose(src_order)
            dxp[(slice(None), slice(None)) + slices] += src
        crop = (slice(None), slice(None)) + tuple(slice(pad, pad + n) for n in self._in_spatial)
        return np.ascontiguousarray(dxp[crop])


class Dropout(Layer):
    """Inverted dropout: train-time masking scaled by 1/(1-p); eval is identity."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p
        self.fixed_mask = None  # test hook: reuse one mask across calls
        self._scaled_mask = None

    def forward(self, x, train, rng=None):
        if not train or self.p == 0.0:
            self._scaled_mask = None
            return x
        if self.fixed_mask is not None:
            mask = self.fixed_mask
        else:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng")
            mask = rng.random(x.shape) >= self.p
        self._scaled_mask = mask.astype(x.dtype) / np.asarray(1.0 - self.p, dtype=x.dtype)
        return x * self._scaled_mask

    def backward(self, dy):
        if self._scaled_mask is None:
            return dy
        return dy * self._scaled_mask


class BatchNorm(Layer):
    """Per-channel batch normalization over (batch, *spatial).

    Training normalizes with biased batch statistics and updates running
    buffers by an exponential moving average; eval normalizes with the
    running buffers.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.ggamma, "beta": self.gbeta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    @staticmethod
    def _shape(x, vec):
        return vec.reshape((1, -1) + (1,) * (x.ndim - 2))

    def forward(self, x, train, rng=None):
        axes = (0,) + tuple(range(2, x.ndim))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = np.asarray(self.momentum, dtype=self.running_mean.dtype)
            self.running_mean[...] = (1 - m) * self.running_mean + m * mean
            self.running_var[...] = (1 - m) * self.running_var + m * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        x_hat = (x - self._shape(x, mean)) * self._shape(x, inv_std)
        if train:
            self._cache = (x_hat, inv_std.astype(x.dtype), axes)
        return self._shape(x, self.gamma).astype(x.dtype) * x_hat + self._shape(x, self.beta).astype(x.dtype)

    def backward(self, dy):
        x_hat, inv_std, axes = self._cache
        count = dy.size // dy.shape[1]
        self.ggamma[...] = (dy * x_hat).sum(axis=axes)
        self.gbeta[...] = dy.sum(axis=axes)
        dx_hat = dy * self._shape(dy, self.gamma).astype(dy.dtype)
        # backprop through the batch statistics
        term = dx_hat - dx_hat.mean(axis=axes, keepdims=True)
        term -= x_hat * (dx_hat * x_hat).sum(axis=axes, keepdims=True) / count
        return term * self._shape(dy, inv_std)


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train, rng=None):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._mask


class GlobalAvgPool(Layer):
    """Mean over all spatial axes: (B, C, *S) -> (B, C)."""

    def __init__(self):
        self._spatial = None

    def forward(self, x, train, rng=None):
        if train:
            self._spatial = x.shape[2:]
        return x.mean(axis=tuple(range(2, x.ndim)))

    def backward(self, dy):
        vol = int(np.prod(self._spatial))
        expand = dy.reshape(dy.shape + (1,) * len(self._spatial))
        return np.broadcast_to(expand / np.asarray(vol, dtype=dy.dtype), dy.shape + self._spatial).copy()


class Dense(Layer):
    def __init__(self, in_features, out_features, rng, dtype):
        self.weight = xavier_uniform(rng, (in_features, out_features), in_features, out_features, dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.gweight, "bias": self.gbias}

    def forward(self, x, train, rng=None):
        if train:
            self._x = x
        return x @ self.weight + self.bias

    def backward(self, dy):
        self.gweight[...] = self._x.T @ dy
        self.gbias[...] = dy.sum(axis=0)
        return dy @ self.weight.T


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    batch = logits.shape[0]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    loss = -log_probs[np.arange(batch), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(batch), labels] -= 1.0
    return float(loss), dlogits / np.asarray(batch, dtype=logits.dtype)
