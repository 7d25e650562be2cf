"""The convolutional decoder and its hand-written backward pass.

Layer stack for K channels and 500 input samples::

    1 conv    1 -> 20,  1 x 32            20 x K x 469
    2 conv   20 -> 40,  1 x 32            40 x K x 438
    3 conv   40 -> 40,  K x 1             40 x 1 x 438   + ELU
    4 maxpool 1 x 5, stride 1 x 5         40 x 1 x 87
    5 dropout p = 0.5
    6 conv   40 -> 80,  1 x 32            80 x 1 x 56    + ELU
    7 maxpool 1 x 5, stride 1 x 5         80 x 1 x 11
    8 flatten                             880
    9 dense 880 -> 3 + softmax            3

All convolutions are valid cross-correlations. Layers 1-3 have no
nonlinearity between them, so together they are one linear spatio-temporal
filter bank of shape (40, K, 63). The forward pass evaluates that composite
filter in the frequency domain and the backward pass pulls its gradient
back onto the three weight tensors. With ``stem_activation=True`` an ELU
follows layer 2 and only layers 1-2 are fused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

PARAM_ORDER = (
    "conv1.weight", "conv1.bias",
    "conv2.weight", "conv2.bias",
    "conv3.weight", "conv3.bias",
    "conv6.weight", "conv6.bias",
    "dense.weight", "dense.bias",
)


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    n_channels: int = 60
    in_samples: int = 500
    n_classes: int = 3
    conv1_filters: int = 20
    conv2_filters: int = 40
    conv3_filters: int = 40
    conv6_filters: int = 80
    kernel: int = 32
    pool: int = 5
    dropout_p: float = 0.5
    stem_activation: bool = False

    def __post_init__(self):
        if self.n_channels < 1:
            raise ShapeError("n_channels must be >= 1")
        if not (0 <= self.dropout_p < 1):
            raise ValueError("dropout_p must lie in [0, 1)")

    def dims(self) -> tuple[int, ...]:
        """Integers echoed into checkpoints."""
        return (
            self.n_channels, self.in_samples, self.n_classes,
            self.conv1_filters, self.conv2_filters, self.conv3_filters,
            self.conv6_filters, self.kernel, self.pool, int(self.stem_activation),
        )

    @classmethod
    def from_dims(cls, dims, dropout_p=0.5) -> "ModelSpec":
        (k, t, c, f1, f2, f3, f6, kern, pool, stem) = dims
        return cls(k, t, c, f1, f2, f3, f6, kern, pool, dropout_p, bool(stem))


@dataclass(frozen=True)
class LayerShape:
    index: int
    kind: str
    shape: tuple[int, ...] | None


def infer_shapes(spec: ModelSpec) -> list[LayerShape]:
    """Per-layer output shapes; raises ShapeError if any dimension vanishes."""
    k, kern, pool = spec.n_channels, spec.kernel, spec.pool
    t1 = spec.in_samples - kern + 1
    t2 = t1 - kern + 1
    t4 = t2 // pool
    t6 = t4 - kern + 1
    t7 = t6 // pool
    checks = [
        (1, t1, spec.in_samples), (2, t2, t1), (4, t4, t2), (6, t6, t4), (7, t7, t6),
    ]
    for layer, out, inp in checks:
        if out <= 0:
            raise ShapeError(
                f"input of {spec.in_samples} samples too short: layer {layer} "
                f"receives {inp} samples and would output {out}"
            )
    flat = spec.conv6_filters * t7
    return [
        LayerShape(1, "conv", (spec.conv1_filters, k, t1)),
        LayerShape(2, "conv", (spec.conv2_filters, k, t2)),
        LayerShape(3, "conv", (spec.conv3_filters, 1, t2)),
        LayerShape(4, "maxpool", (spec.conv3_filters, 1, t4)),
        LayerShape(5, "dropout", None),
        LayerShape(6, "conv", (spec.conv6_filters, 1, t6)),
        LayerShape(7, "maxpool", (spec.conv6_filters, 1, t7)),
        LayerShape(8, "flatten", (1, flat)),
        LayerShape(9, "softmax", (1, spec.n_classes)),
    ]


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    flat = infer_shapes(spec)[7].shape[1]
    f1, f2, f3, f6 = spec.conv1_filters, spec.conv2_filters, spec.conv3_filters, spec.conv6_filters
    kern = spec.kernel
    return {
        "conv1.weight": (f1, 1, 1, kern),
        "conv1.bias": (f1,),
        "conv2.weight": (f2, f1, 1, kern),
        "conv2.bias": (f2,),
        "conv3.weight": (f3, f2, spec.n_channels, 1),
        "conv3.bias": (f3,),
        "conv6.weight": (f6, f3, 1, kern),
        "conv6.bias": (f6,),
        "dense.weight": (spec.n_classes, flat),
        "dense.bias": (spec.n_classes,),
    }


# -- elementwise pieces ------------------------------------------------------


def elu(z):
    neg = np.minimum(z, 0)
    np.expm1(neg, out=neg)
    return np.maximum(z, 0) + neg


def elu_grad(z, a):
    # derivative expressed through the output: 1 for z > 0, a + 1 otherwise
    return np.where(z > 0, 1, a + 1).astype(z.dtype, copy=False)


def maxpool_last(x, pool):
    n = x.shape[-1] // pool
    blocks = x[..., : n * pool].reshape(*x.shape[:-1], n, pool)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def maxpool_last_backward(dout, idx, pool, width):
    grad = np.zeros((*dout.shape, pool), dtype=dout.dtype)
    np.put_along_axis(grad, idx[..., None], dout[..., None], axis=-1)
    grad = grad.reshape(*dout.shape[:-1], -1)
    out = np.zeros((*dout.shape[:-1], width), dtype=dout.dtype)
    out[..., : grad.shape[-1]] = grad
    return out


def dropout(x, p: float, rng: np.random.Generator):
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p).

    Returns ``(output, mask)`` where ``output == x * mask``.
    """
    keep = x.dtype.type(1.0 - p)
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / keep
    return x * mask, mask


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _unfold(x, width):
    """(B, C, T) -> contiguous (B, T - width + 1, C * width) patches."""
    view = np.lib.stride_tricks.sliding_window_view(x, width, axis=-1)  # B, C, T', w
    return np.ascontiguousarray(view.transpose(0, 2, 1, 3)).reshape(x.shape[0], view.shape[2], -1)


def _fold_patches(dpatch, channels, width, length):
    """Adjoint of :func:`_unfold`."""
    b, tout, _ = dpatch.shape
    d = np.ascontiguousarray(dpatch.reshape(b, tout, channels, width).transpose(0, 2, 3, 1))
    out = np.zeros((b, channels, length), dtype=dpatch.dtype)
    for k in range(width):
        out[:, :, k : k + tout] += d[:, :, k, :]
    return out


@dataclass
class Cache:
    spec: ModelSpec
    x_hat: np.ndarray
    n_fft: int
    training: bool
    token: int
    stem: dict
    z3: np.ndarray
    a3: np.ndarray
    pool4_idx: np.ndarray
    mask: np.ndarray | None
    d5: np.ndarray
    patches6: np.ndarray
    z6: np.ndarray
    a6: np.ndarray
    pool7_idx: np.ndarray
    flat: np.ndarray
    probs: np.ndarray
    consumed: bool = False


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    dtype: np.dtype = field(default=np.dtype(np.float32))
    _version: int = 0

    @classmethod
    def initialize(cls, spec: ModelSpec, rng: np.random.Generator, dtype=np.float32) -> "Model":
        """Fan-in scaled uniform convolutions, zero biases, zero dense layer."""
        dtype = np.dtype(dtype)
        params = {}
        for name, shape in param_shapes(spec).items():
            if name.startswith("conv") and name.endswith("weight"):
                fan_in = int(np.prod(shape[1:]))
                bound = np.sqrt(3.0 / fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype=dtype)
        return cls(spec, params, dtype)

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()}, self.dtype)

    def bump(self):
        self._version += 1

    # -- composite stem filter ---------------------------------------------

    def _shift_matrix(self, w1):
        # w1 (f1, k) -> (f1, k, 2k-1) with out[m, a, a + l] = w1[m, l]
        f1, k = w1.shape
        out = np.zeros((f1, k, 2 * k - 1), dtype=w1.dtype)
        a = np.arange(k)
        for l in range(k):
            out[:, a, a + l] = w1[:, l][:, None]
        return out

    def _temporal_filter(self):
        p = self.params
        w1 = p["conv1.weight"][:, 0, 0, :]
        w2 = p["conv2.weight"][:, :, 0, :]
        shift1 = self._shift_matrix(w1)
        wc = np.einsum("imk,mkj->ij", w2, shift1)
        bc = p["conv2.bias"] + w2.sum(axis=2) @ p["conv1.bias"]
        return wc, bc, w1, w2, shift1

    def _pullback_temporal(self, dwc, dbc, w2, shift1, grads):
        p = self.params
        kern = self.spec.kernel
        dw2 = np.einsum("ij,mkj->imk", dwc, shift1)
        dw2 += dbc[:, None, None] * p["conv1.bias"][None, :, None]
        dshift = np.einsum("ij,imk->mkj", dwc, w2)
        a = np.arange(kern)
        dw1 = np.stack([dshift[:, a, a + l].sum(axis=1) for l in range(kern)], axis=1)
        grads["conv1.weight"] = dw1[:, None, None, :].astype(self.dtype)
        grads["conv1.bias"] = (w2.sum(axis=2).T @ dbc).astype(self.dtype)
        grads["conv2.weight"] = dw2[:, :, None, :].astype(self.dtype)
        grads["conv2.bias"] = dbc.astype(self.dtype)

    # -- forward / backward -------------------------------------------------

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        """Class probabilities for a batch shaped (B, 1, K, T).

        Returns ``(probs, cache)``. Dropout is active only when ``training``
        and then needs ``rng``.
        """
        spec = self.spec
        x = np.asarray(x)
        expected = (1, spec.n_channels, spec.in_samples)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"expected batch of shape (B, {', '.join(map(str, expected))}), got {x.shape}")
        if training and spec.dropout_p > 0 and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        x = x[:, 0].astype(self.dtype, copy=False)
        b = x.shape[0]
        p = self.params
        kern = spec.kernel
        span = 2 * kern - 1
        t2 = spec.in_samples - span + 1
        n_fft = sfft.next_fast_len(spec.in_samples, real=True)
        x_hat = sfft.rfft(x, n=n_fft, axis=-1)  # B, K, F

        wc, bc, w1, w2, shift1 = self._temporal_filter()
        w3 = p["conv3.weight"][:, :, :, 0]  # o, i, c
        stem = {"wc": wc, "bc": bc, "w2": w2, "shift1": shift1}
        if not spec.stem_activation:
            wfull = np.tensordot(w3, wc, axes=([1], [0]))  # o, c, j
            bfull = p["conv3.bias"] + np.einsum("oic,i->o", w3, bc)
            wf_hat = np.conj(sfft.rfft(wfull, n=n_fft, axis=-1))  # o, c, F
            # per frequency: (o, c) @ (c, B)
            z_hat = np.matmul(
                np.ascontiguousarray(wf_hat.transpose(2, 0, 1)),
                np.ascontiguousarray(x_hat.transpose(2, 1, 0)),
            )  # F, o, B
            z3 = sfft.irfft(z_hat.transpose(2, 1, 0), n=n_fft, axis=-1)[..., :t2]
            z3 = z3 + bfull[None, :, None]
            stem["wfull"] = wfull
        else:
            wc_hat = np.conj(sfft.rfft(wc, n=n_fft, axis=-1))  # i, F
            z2 = np.empty((b, wc.shape[0], spec.n_channels, t2), dtype=self.dtype)
            for n in range(b):
                z2[n] = sfft.irfft(wc_hat[:, None, :] * x_hat[n][None], n=n_fft, axis=-1)[..., :t2]
            z2 += bc[None, :, None, None]
            a2 = elu(z2)
            a2r = a2.reshape(b, -1, t2)
            z3 = np.matmul(w3.reshape(w3.shape[0], -1), a2r) + p["conv3.bias"][None, :, None]
            stem.update(z2=z2, a2=a2)
        z3 = z3.astype(self.dtype, copy=False)
        a3 = elu(z3)
        d4, idx4 = maxpool_last(a3, spec.pool)

        mask = None
        d5 = d4
        if training and spec.dropout_p > 0:
            d5, mask = dropout(d4, spec.dropout_p, rng)

        w6 = p["conv6.weight"][:, :, 0, :]  # o, i, k
        patches6 = _unfold(d5, kern)  # B, T6, i*k
        z6 = (patches6 @ w6.reshape(w6.shape[0], -1).T).transpose(0, 2, 1) + p["conv6.bias"][None, :, None]
        a6 = elu(z6)
        d7, idx7 = maxpool_last(a6, spec.pool)
        flat = d7.reshape(b, -1)
        logits = flat @ p["dense.weight"].T + p["dense.bias"]
        probs = softmax(logits)
        cache = Cache(
            spec, x_hat, n_fft, training, self._version, stem, z3, a3, idx4, mask, d5,
            patches6, z6, a6, idx7, flat, probs,
        )
        return probs, cache

    def predict_proba(self, x, batch_size: int = 64) -> np.ndarray:
        x = np.asarray(x)
        out = [self.forward(x[i : i + batch_size], training=False)[0] for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros((0, self.spec.n_classes), dtype=self.dtype)
        return np.concatenate(out)

    def backward(self, cache: Cache, labels):
        """Mean cross-entropy and its gradient for every parameter."""
        if cache.consumed or cache.token != self._version:
            raise StaleCacheError("cache does not belong to the current parameters")
        cache.consumed = True
        spec = self.spec
        p = self.params
        labels = np.asarray(labels, dtype=int)
        b = len(labels)
        probs = cache.probs
        picked = probs[np.arange(b), labels].astype(np.float64)
        loss = float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))

        grads: dict[str, np.ndarray] = {}
        dlogits = probs.copy()
        dlogits[np.arange(b), labels] -= 1
        dlogits /= b
        grads["dense.weight"] = dlogits.T @ cache.flat
        grads["dense.bias"] = dlogits.sum(axis=0)
        dflat = dlogits @ p["dense.weight"]

        a6 = cache.a6
        dd7 = dflat.reshape(b, spec.conv6_filters, -1)
        da6 = maxpool_last_backward(dd7, cache.pool7_idx, spec.pool, a6.shape[-1])
        dz6 = da6 * elu_grad(cache.z6, a6)
        w6 = p["conv6.weight"][:, :, 0, :]
        dz6t = dz6.transpose(0, 2, 1)  # B, T6, o
        dw6 = np.tensordot(dz6t, cache.patches6, axes=([0, 1], [0, 1]))  # o, i*k
        grads["conv6.weight"] = dw6.reshape(w6.shape)[:, :, None, :]
        grads["conv6.bias"] = dz6.sum(axis=(0, 2))
        dpatch = dz6t @ w6.reshape(w6.shape[0], -1)
        dd5 = _fold_patches(dpatch, spec.conv3_filters, spec.kernel, cache.d5.shape[-1])
        dd4 = dd5 * cache.mask if cache.mask is not None else dd5
        da3 = maxpool_last_backward(dd4, cache.pool4_idx, spec.pool, cache.a3.shape[-1])
        dz3 = da3 * elu_grad(cache.z3, cache.a3)  # B, o, T2

        stem = cache.stem
        n_fft = cache.n_fft
        w3 = p["conv3.weight"][:, :, :, 0]
        span = 2 * spec.kernel - 1
        g_hat = np.conj(sfft.rfft(dz3, n=n_fft, axis=-1))  # B, o, F
        if not spec.stem_activation:
            # dWfull[o, c, :] = irfft(sum_b conj(G[b, o]) X[b, c])
            s_hat = np.matmul(
                np.ascontiguousarray(g_hat.transpose(2, 1, 0)),
                np.ascontiguousarray(cache.x_hat.transpose(2, 0, 1)),
            )  # F, o, c
            dwfull = sfft.irfft(s_hat.transpose(1, 2, 0), n=n_fft, axis=-1)[..., :span]
            dbfull = dz3.sum(axis=(0, 2))
            dw3 = np.matmul(dwfull, stem["wc"].T).transpose(0, 2, 1)  # o, i, c
            grads["conv3.weight"] = dw3 + np.outer(dbfull, stem["bc"])[:, :, None]
            grads["conv3.bias"] = dbfull
            dwc = np.tensordot(w3, dwfull, axes=([0, 2], [0, 1]))  # i, j
            dbc = np.einsum("o,oic->i", dbfull, w3)
        else:
            a2 = stem["a2"]
            a2r = a2.reshape(b, -1, a2.shape[-1])
            w3r = w3.reshape(w3.shape[0], -1)
            grads["conv3.weight"] = np.tensordot(dz3, a2r, axes=([0, 2], [0, 2])).reshape(w3.shape)[..., None]
            grads["conv3.bias"] = dz3.sum(axis=(0, 2))
            dz2 = np.matmul(w3r.T, dz3).reshape(a2.shape) * elu_grad(stem["z2"], a2)
            dwc = np.zeros_like(stem["wc"], dtype=np.float64)
            for n in range(b):
                d_hat = np.conj(sfft.rfft(dz2[n], n=n_fft, axis=-1))  # i, c, F
                s = np.einsum("icf,cf->if", d_hat, cache.x_hat[n])
                dwc += sfft.irfft(s, n=n_fft, axis=-1)[:, :span]
            dbc = dz2.sum(axis=(0, 2, 3))
        self._pullback_temporal(dwc, dbc, stem["w2"], stem["shift1"], grads)
        grads = {k: np.asarray(grads[k], dtype=self.dtype).reshape(p[k].shape) for k in PARAM_ORDER}
        return grads, loss


def loss_only(model: Model, x, labels) -> float:
    probs, _ = model.forward(x, training=False)
    labels = np.asarray(labels, dtype=int)
    picked = probs[np.arange(len(labels)), labels].astype(np.float64)
    return float(-np.mean(np.log(picked)))
