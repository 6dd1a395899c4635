"""Small two-layer convolutional classifier written directly in numpy.

Data flow for one 128x22 image::

    conv 3x3 x16 (valid) + relu  -> 126 x 20 x 16
    max pool 2x2                 ->  63 x 10 x 16
    conv 3x3 x16 (valid) + relu  ->  61 x  8 x 16
    max pool 2x2 (floor)         ->  30 x  4 x 16
    flatten (filter-major)       ->  1920
    dense 128 + relu             ->  128
    dense 2 + softmax            ->  2

Internally feature maps are laid out (batch, rows, cols, filters).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import numba as nb
from numpy.lib.stride_tricks import sliding_window_view

from . import modelfile

log = logging.getLogger(__name__)

INPUT_SHAPE = (128, 22)
N_FILTERS = 16
KERNEL = 3
POOL = 2
HIDDEN = 128
N_CLASSES = 2
PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense1_w", "dense1_b", "out_w", "out_b")
EXPECTED_CHAIN = ((128, 22), (126, 20, 16), (63, 10, 16), (61, 8, 16), (30, 4, 16), (1920,), (128,), (2,))


def shape_chain(input_shape=INPUT_SHAPE):
    """Tensor shapes after each stage, derived from the layer hyper-parameters."""
    h, w = input_shape
    chain = [(h, w)]
    h, w = h - KERNEL + 1, w - KERNEL + 1
    chain.append((h, w, N_FILTERS))
    h, w = h // POOL, w // POOL
    chain.append((h, w, N_FILTERS))
    h, w = h - KERNEL + 1, w - KERNEL + 1
    chain.append((h, w, N_FILTERS))
    h, w = h // POOL, w // POOL
    chain.append((h, w, N_FILTERS))
    chain.append((h * w * N_FILTERS,))
    chain.append((HIDDEN,))
    chain.append((N_CLASSES,))
    return tuple(chain)


class CnnModel:
    """Parameter set for one binary task (``vocal``, ``guitar`` or ``palmas``)."""

    version = modelfile.VERSION

    def __init__(self, params: dict, task: str = "vocal"):
        chain = shape_chain()
        if chain != EXPECTED_CHAIN:
            raise AssertionError(f"layer shape chain {chain} does not match {EXPECTED_CHAIN}")
        expected = self.param_shapes()
        for name in PARAM_ORDER:
            if name not in params:
                raise ValueError(f"missing parameter {name}")
            if params[name].shape != expected[name]:
                raise ValueError(f"{name}: shape {params[name].shape}, expected {expected[name]}")
        if task not in modelfile.TASKS:
            raise ValueError(f"unknown task {task!r}")
        self.params = {k: params[k] for k in PARAM_ORDER}
        self.task = task

    @staticmethod
    def param_shapes():
        flat = shape_chain()[5][0]
        return {
            "conv1_w": (KERNEL, KERNEL, 1, N_FILTERS),
            "conv1_b": (N_FILTERS,),
            "conv2_w": (KERNEL, KERNEL, N_FILTERS, N_FILTERS),
            "conv2_b": (N_FILTERS,),
            "dense1_w": (flat, HIDDEN),
            "dense1_b": (HIDDEN,),
            "out_w": (HIDDEN, N_CLASSES),
            "out_b": (N_CLASSES,),
        }

    @classmethod
    def init(cls, seed=0, task="vocal", dtype=np.float32):
        """He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in cls.param_shapes().items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[:-1]))
                bound = np.sqrt(6.0 / fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        return cls(params, task)

    @classmethod
    def zeros(cls, task="vocal", dtype=np.float64):
        return cls({k: np.zeros(s, dtype=dtype) for k, s in cls.param_shapes().items()}, task)

    @property
    def dtype(self):
        return self.params["conv1_w"].dtype

    def astype(self, dtype):
        return CnnModel({k: v.astype(dtype) for k, v in self.params.items()}, self.task)

    def copy(self):
        return self.astype(self.dtype)


@dataclass
class ActivationDump:
    """Post-relu conv outputs for one image, each (filters, rows, cols)."""

    conv1: np.ndarray
    conv2: np.ndarray


def _conv_valid(x, w, b):
    """x: (B, H, W, C), w: (3, 3, C, F) -> (pre-activation, patches (B, H-2, W-2, 9C))."""
    bsz, h, wd, c = x.shape
    oh, ow = h - KERNEL + 1, wd - KERNEL + 1
    if c == 1:
        patches = np.empty((bsz, oh, ow, KERNEL * KERNEL), dtype=x.dtype)
        for k in range(KERNEL * KERNEL):
            dy, dx = divmod(k, KERNEL)
            patches[..., k] = x[:, dy:dy + oh, dx:dx + ow, 0]
    else:
        win = sliding_window_view(x, (KERNEL, KERNEL), axis=(1, 2))  # (B, oh, ow, C, 3, 3)
        patches = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(bsz, oh, ow, -1)
    z = patches @ w.reshape(-1, w.shape[-1])
    z += b
    return z, patches


@nb.njit(cache=True)
def _col2im_kernel(dp, dx):
    n, oh, ow, kh, kw, c = dp.shape
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                for ky in range(kh):
                    for kx in range(kw):
                        for ch in range(c):
                            dx[b, i + ky, j + kx, ch] += dp[b, i, j, ky, kx, ch]


def _conv_input_grad(dz, w, in_shape):
    """Gradient w.r.t. the conv input: per-patch gradients scattered back onto the input grid."""
    bsz, oh, ow, nf = dz.shape
    dp = (dz.reshape(-1, nf) @ w.reshape(-1, nf).T).reshape(bsz, oh, ow, KERNEL, KERNEL, -1)
    dx = np.zeros(in_shape, dtype=dz.dtype)
    _col2im_kernel(dp, dx)
    return dx


@nb.njit(cache=True)
def _pool_kernel(a, out, idx):
    n, h, w, c = a.shape
    for b in range(n):
        for i in range(h // 2):
            for j in range(w // 2):
                for f in range(c):
                    best = a[b, 2 * i, 2 * j, f]
                    k = 0
                    v = a[b, 2 * i, 2 * j + 1, f]
                    if v > best:
                        best = v
                        k = 1
                    v = a[b, 2 * i + 1, 2 * j, f]
                    if v > best:
                        best = v
                        k = 2
                    v = a[b, 2 * i + 1, 2 * j + 1, f]
                    if v > best:
                        best = v
                        k = 3
                    out[b, i, j, f] = best
                    idx[b, i, j, f] = k


@nb.njit(cache=True)
def _unpool_kernel(dp, idx, da):
    n, ph, pw, c = dp.shape
    for b in range(n):
        for i in range(ph):
            for j in range(pw):
                for f in range(c):
                    k = idx[b, i, j, f]
                    da[b, 2 * i + k // 2, 2 * j + k % 2, f] = dp[b, i, j, f]


def _maxpool(a):
    """2x2 max pooling with floor cropping: ``(pooled, winner index)``.

    The winner of a window is its first maximal entry in row-major order.
    """
    a = np.ascontiguousarray(a)
    n, h, w, c = a.shape
    out = np.empty((n, h // POOL, w // POOL, c), dtype=a.dtype)
    idx = np.empty(out.shape, dtype=np.uint8)
    _pool_kernel(a, out, idx)
    return out, idx


def _maxpool_backward(dpool, idx, in_shape):
    da = np.zeros(in_shape, dtype=dpool.dtype)
    _unpool_kernel(np.ascontiguousarray(dpool), idx, da)
    return da


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(model, images, keep=False):
    p = model.params
    x = np.asarray(images, dtype=model.dtype)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != INPUT_SHAPE:
        raise ValueError(f"expected images of shape {INPUT_SHAPE}, got {x.shape[1:]}")
    x = x[..., None]
    # relu commutes with max pooling, so pool the pre-activations and rectify the smaller result
    z1, patches1 = _conv_valid(x, p["conv1_w"], p["conv1_b"])
    h1, idx1 = _maxpool(z1)
    np.maximum(h1, 0, out=h1)
    z2, patches2 = _conv_valid(h1, p["conv2_w"], p["conv2_b"])
    h2, idx2 = _maxpool(z2)
    np.maximum(h2, 0, out=h2)
    flat = h2.transpose(0, 3, 1, 2).reshape(len(x), -1)
    zd = flat @ p["dense1_w"] + p["dense1_b"]
    hd = np.maximum(zd, 0)
    logits = hd @ p["out_w"] + p["out_b"]
    probs = softmax(logits)
    cache = None
    if keep:
        cache = dict(patches1=patches1, z1=z1, h1=h1, idx1=idx1, patches2=patches2, z2=z2,
                     h2=h2, idx2=idx2, flat=flat, hd=hd)
    return probs, cache


def forward(model: CnnModel, image, activations: bool = False):
    """Class probabilities for one image (or a stack); optionally the conv activations.

    With ``activations=True`` returns ``(probs, ActivationDump)`` for a single image.
    """
    image = np.asarray(image)
    single = image.ndim == 2
    probs, cache = _forward(model, image, keep=activations)
    out = probs[0] if single else probs
    if not activations:
        return out
    if not single:
        raise ValueError("activation dumps are produced for a single image")
    a1, a2 = np.maximum(cache["z1"][0], 0), np.maximum(cache["z2"][0], 0)
    dump = ActivationDump(a1.transpose(2, 0, 1).copy(), a2.transpose(2, 0, 1).copy())
    return out, dump


def flatten_features(model, images):
    """The 1920-long representation fed to the dense layers."""
    p = model.params
    x = np.asarray(images, dtype=model.dtype)[..., None]
    h1 = np.maximum(_maxpool(_conv_valid(x, p["conv1_w"], p["conv1_b"])[0])[0], 0)
    h2 = np.maximum(_maxpool(_conv_valid(h1, p["conv2_w"], p["conv2_b"])[0])[0], 0)
    return h2.transpose(0, 3, 1, 2).reshape(len(x), -1)


def loss(probs, labels):
    """Mean cross-entropy, -ln(max(p_label, 1e-12))."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, 1e-12))))


def gradients(model: CnnModel, images, labels):
    """Mean batch loss and its gradient for every parameter (dict keyed like ``model.params``)."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("empty batch")
    p = model.params
    probs, c = _forward(model, images, keep=True)
    bsz = len(labels)
    batch_loss = loss(probs, labels)

    dlogits = probs.copy()
    dlogits[np.arange(bsz), labels] -= 1.0
    dlogits /= bsz
    g = {}
    g["out_w"] = c["hd"].T @ dlogits
    g["out_b"] = dlogits.sum(axis=0)
    dzd = (dlogits @ p["out_w"].T) * (c["hd"] > 0)
    g["dense1_w"] = c["flat"].T @ dzd
    g["dense1_b"] = dzd.sum(axis=0)
    dflat = dzd @ p["dense1_w"].T
    _, fh, fw, nf = c["h2"].shape
    dh2 = dflat.reshape(bsz, nf, fh, fw).transpose(0, 2, 3, 1)
    # the relu derivative is taken at the pooling winner, which is where h > 0
    dz2 = _maxpool_backward(dh2 * (c["h2"] > 0), c["idx2"], c["z2"].shape)
    dz2_flat = dz2.reshape(-1, N_FILTERS)
    g["conv2_w"] = (c["patches2"].reshape(-1, c["patches2"].shape[-1]).T @ dz2_flat).reshape(p["conv2_w"].shape)
    g["conv2_b"] = dz2_flat.sum(axis=0)
    dh1 = _conv_input_grad(dz2, p["conv2_w"], c["h1"].shape)
    dz1 = _maxpool_backward(dh1 * (c["h1"] > 0), c["idx1"], c["z1"].shape).reshape(-1, N_FILTERS)
    g["conv1_w"] = (c["patches1"].reshape(-1, c["patches1"].shape[-1]).T @ dz1).reshape(p["conv1_w"].shape)
    g["conv1_b"] = dz1.sum(axis=0)
    return batch_loss, {k: g[k].astype(model.dtype, copy=False) for k in PARAM_ORDER}


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    patience: int = 5
    min_improvement: float = 0.01
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_model(cls, model):
        return cls({k: np.zeros_like(v) for k, v in model.params.items()},
                   {k: np.zeros_like(v) for k, v in model.params.items()})


def adam_step(state: AdamState, model: CnnModel, grads: dict, config: TrainConfig):
    """One bias-corrected Adam update, applied in place; returns ``(model, state)``."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    for name, param in model.params.items():
        g = grads[name]
        if g.shape != param.shape or state.m[name].shape != param.shape:
            raise ValueError(f"shape mismatch for {name}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= (config.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + config.eps)).astype(param.dtype)
    return model, state


@dataclass
class TrainResult:
    model: CnnModel
    history: list = field(default_factory=list)
    stopped_early: bool = False


def train(images, labels, config: TrainConfig | None = None, task="vocal", dtype=np.float32) -> TrainResult:
    """Mini-batch Adam on mean cross-entropy with early stopping on the training loss.

    Training stops once the best epoch loss has not improved by at least
    ``min_improvement`` for ``patience`` consecutive epochs.
    """
    config = config or TrainConfig()
    images = np.asarray(images, dtype=dtype)
    labels = np.asarray(labels, dtype=int)
    if len(np.unique(labels)) < 2:
        raise ValueError("training set must contain both classes")
    rng = np.random.default_rng(config.seed)
    model = CnnModel.init(seed=int(rng.integers(2**63)), task=task, dtype=dtype)
    state = AdamState.for_model(model)
    history = []
    best, stale = np.inf, 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_loss, grads = gradients(model, images[idx], labels[idx])
            adam_step(state, model, grads, config)
            total += batch_loss * len(idx)
        epoch_loss = total / len(labels)
        history.append(epoch_loss)
        log.debug("epoch %d loss %.4f", epoch + 1, epoch_loss)
        if epoch_loss <= best - config.min_improvement:
            best, stale = epoch_loss, 0
        else:
            best = min(best, epoch_loss)
            stale += 1
            if stale >= config.patience:
                return TrainResult(model, history, stopped_early=True)
    return TrainResult(model, history)


def predict_proba(model, images, chunk=256):
    images = np.asarray(images)
    if len(images) == 0:
        return np.zeros((0, N_CLASSES))
    return np.vstack([_forward(model, images[i:i + chunk])[0] for i in range(0, len(images), chunk)])


def predict_sequence(model: CnnModel, images) -> np.ndarray:
    """Argmax class per image; exact ties go to class 0."""
    probs = predict_proba(model, images)
    return (probs[:, 1] > probs[:, 0]).astype(int) if len(probs) else np.zeros(0, dtype=int)


def save_model(model: CnnModel, path) -> None:
    modelfile.save_arrays(path, "cnn", model.task, model.params)


def load_model(path) -> CnnModel:
    _, task, arrays = modelfile.load_arrays(path, family="cnn")
    return CnnModel(arrays, task)


def write_activation_csv(dump: ActivationDump, path) -> None:
    """One row per (layer, filter, row) holding that row of the relu output."""
    with open(path, "w") as fh:
        fh.write("layer,filter,row,values\n")
        for layer, acts in (("conv1", dump.conv1), ("conv2", dump.conv2)):
            for f, mat in enumerate(acts):
                for r, row in enumerate(mat):
                    fh.write(f"{layer},{f},{r}," + " ".join(f"{v:.6g}" for v in row) + "\n")


def mean_filter_activations(model, images):
    """Average relu activation of every conv filter over ``images``: arrays (16,), (16,)."""
    if len(images) == 0:
        return np.zeros(N_FILTERS), np.zeros(N_FILTERS)
    s1 = np.zeros(N_FILTERS)
    s2 = np.zeros(N_FILTERS)
    for i in range(0, len(images), 256):
        _, c = _forward(model, images[i:i + 256], keep=True)
        s1 += np.maximum(c["z1"], 0).mean(axis=(1, 2)).sum(axis=0)
        s2 += np.maximum(c["z2"], 0).mean(axis=(1, 2)).sum(axis=0)
    return s1 / len(images), s2 / len(images)
