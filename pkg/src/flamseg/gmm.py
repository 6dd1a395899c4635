"""Diagonal-covariance Gaussian mixtures trained by EM, one per class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import modelfile

VAR_FLOOR = 1e-6
N_COMPONENTS = 16
TOL = 1e-4
MAX_ITER = 200


@dataclass
class Mixture:
    weights: np.ndarray    # (k,)
    means: np.ndarray      # (k, d)
    variances: np.ndarray  # (k, d)
    log_likelihood: list = field(default_factory=list)  # mean per-sample LL after each EM iteration

    @property
    def n_components(self):
        return len(self.weights)

    def component_log_density(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.means.shape[1]:
            raise ValueError(f"feature dimension {x.shape[1]} != model dimension {self.means.shape[1]}")
        prec = 1.0 / self.variances
        # (n, k) via expansion of sum((x - mu)^2 / var)
        quad = (x ** 2) @ prec.T - 2.0 * x @ (self.means * prec).T + np.sum(self.means ** 2 * prec, axis=1)
        log_norm = -0.5 * (x.shape[1] * np.log(2.0 * np.pi) + np.sum(np.log(self.variances), axis=1))
        return log_norm - 0.5 * np.maximum(quad, 0.0) + np.log(self.weights)

    def score_samples(self, x):
        """Per-sample log-likelihood."""
        return logsumexp(self.component_log_density(x), axis=1)


def _kmeans_pp(x, k, rng):
    """k-means++ seeding; stops early when every remaining point coincides with a center."""
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    while len(centers) < k:
        total = d2.sum()
        if total <= 0.0:
            break
        c = x[rng.choice(len(x), p=d2 / total)]
        centers.append(c)
        d2 = np.minimum(d2, np.sum((x - c) ** 2, axis=1))
    return np.array(centers)


def fit_gmm(features, k=N_COMPONENTS, seed=0, tol=TOL, max_iter=MAX_ITER) -> Mixture:
    """EM for a diagonal GMM, initialized from k-means++ hard assignments.

    Iterates until the mean log-likelihood gains less than ``tol`` or
    ``max_iter`` iterations have run. Degenerate data (fewer distinct points
    than ``k``) yields fewer effective components.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < k:
        raise ValueError(f"need at least {k} feature vectors, got {len(x)}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    d2 = np.stack([np.sum((x - c) ** 2, axis=1) for c in centers], axis=1)
    assign = np.argmin(d2, axis=1)
    resp = np.zeros((len(x), len(centers)))
    resp[np.arange(len(x)), assign] = 1.0
    gvar = np.maximum(x.var(axis=0), VAR_FLOOR)

    mix = None
    history = []
    for it in range(max_iter + 1):
        nk = resp.sum(axis=0)
        keep = nk > 1e-10
        resp, nk = resp[:, keep], nk[keep]
        means = (resp.T @ x) / nk[:, None]
        var = (resp.T @ (x ** 2)) / nk[:, None] - means ** 2
        if it == 0:
            # singleton clusters would start with zero variance
            var = np.where(nk[:, None] > 1, var, gvar)
        mix = Mixture(nk / nk.sum(), means, np.maximum(var, VAR_FLOOR), history)
        log_comp = mix.component_log_density(x)
        ll = logsumexp(log_comp, axis=1)
        history.append(float(ll.mean()))
        if it > 0 and history[-1] - history[-2] < tol:
            break
        resp = np.exp(log_comp - ll[:, None])
    return mix


@dataclass
class GmmClassifier:
    """Two class-conditional mixtures; class 1 wins only on a strictly higher likelihood."""

    negative: Mixture
    positive: Mixture
    task: str = "vocal"

    def log_likelihoods(self, features):
        return np.stack([self.negative.score_samples(features), self.positive.score_samples(features)], axis=1)

    def classify(self, features):
        features = np.atleast_2d(features)
        if len(features) == 0:
            return np.zeros(0, dtype=int)
        ll = self.log_likelihoods(features)
        return (ll[:, 1] > ll[:, 0]).astype(int)


def train_classifier(features, labels, k=N_COMPONENTS, seed=0, task="vocal") -> GmmClassifier:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if len(np.unique(labels)) < 2:
        raise ValueError("training set must contain both classes")
    return GmmClassifier(fit_gmm(features[labels == 0], k, seed), fit_gmm(features[labels == 1], k, seed + 1), task)


def classify_frames(models: GmmClassifier, features):
    """Maximum-likelihood decision per feature vector (ties go to class 0)."""
    return models.classify(features)


def save_classifier(clf: GmmClassifier, path) -> None:
    arrays = {}
    for tag, mix in (("neg", clf.negative), ("pos", clf.positive)):
        arrays[f"{tag}_weights"] = mix.weights
        arrays[f"{tag}_means"] = mix.means
        arrays[f"{tag}_variances"] = mix.variances
    modelfile.save_arrays(path, "gmm", clf.task, arrays)


def load_classifier(path) -> GmmClassifier:
    _, task, arrays = modelfile.load_arrays(path, family="gmm")
    mixes = [Mixture(arrays[f"{t}_weights"].astype(np.float64), arrays[f"{t}_means"].astype(np.float64),
                     arrays[f"{t}_variances"].astype(np.float64)) for t in ("neg", "pos")]
    return GmmClassifier(mixes[0], mixes[1], task)
