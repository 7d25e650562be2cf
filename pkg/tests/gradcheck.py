"""Central finite-difference oracle for the network gradients."""

import numpy as np

from miemph.net.model import Model, ModelSpec

REDUCED = dict(n_channels=3, in_samples=64, conv1_filters=3, conv2_filters=4,
               conv3_filters=4, conv6_filters=5, kernel=6, pool=2)


def perturbed_model(spec, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    model = Model.initialize(spec, rng, np.float64)
    for name in model.params:
        model.params[name] = model.params[name] + rng.normal(0, scale, model.params[name].shape)
    return model


def _loss(model, x, y, dropout_seed):
    probs, _ = model.forward(x, training=True, rng=np.random.default_rng(dropout_seed))
    return -np.mean(np.log(probs[np.arange(len(y)), y]))


def max_relative_errors(model, x, y, eps=1e-5, samples=None, seed=0, dropout_seed=5):
    """Per-tensor max |numeric - analytic| / max |numeric|.

    Dropout masks are pinned by reseeding the same generator for every pass.
    ``samples`` limits the number of entries probed per tensor.
    """
    probs, cache = model.forward(x, training=True, rng=np.random.default_rng(dropout_seed))
    grads, _ = model.backward(cache, y)
    pick = np.random.default_rng(seed)
    errors = {}
    for name, value in model.params.items():
        flat = value.reshape(-1)
        idx = np.arange(flat.size)
        if samples is not None and flat.size > samples:
            idx = pick.choice(flat.size, samples, replace=False)
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            plus = _loss(model, x, y, dropout_seed)
            flat[i] = orig - eps
            minus = _loss(model, x, y, dropout_seed)
            flat[i] = orig
            numeric[j] = (plus - minus) / (2 * eps)
        analytic = grads[name].reshape(-1)[idx]
        errors[name] = float(np.max(np.abs(numeric - analytic)) / max(np.max(np.abs(numeric)), 1e-12))
    return errors


def reduced_check(stem_activation=False):
    spec = ModelSpec(**REDUCED, stem_activation=stem_activation)
    model = perturbed_model(spec)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 1, 3, 64))
    return max_relative_errors(model, x, np.array([0, 2]))
