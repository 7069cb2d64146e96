"""scikit-learn compatible facade.

Wraps the encoder and training loop in estimator objects so the pipeline
composes with the wider sklearn ecosystem (get_params/set_params, clone,
model selection). X is a list of (n_i, d) arrays or SetInstance objects.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .adversary import AdversaryConfig
from .encoder import encode, init_encoder
from .measures import SetInstance
from .trainer import AdamState, TrainConfig, init_model, train_epoch


def _as_instances(X, y=None) -> list:
    out = []
    for i, x in enumerate(X):
        if isinstance(x, SetInstance):
            if y is not None:
                x = SetInstance(id=x.id, elements=x.elements, label=int(y[i]),
                                split_tag="train")
            out.append(x)
            continue
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        out.append(SetInstance(id=f"x-{i:06d}", elements=arr,
                               label=None if y is None else int(y[i]),
                               split_tag="train"))
    dims = {inst.dim for inst in out}
    if len(dims) > 1:
        raise ValueError(f"inconsistent element dimensions: {sorted(dims)}")
    return out


class SlicedWassersteinSetTransformer(BaseEstimator, TransformerMixin):
    """Stateless quantile set encoder: list of sets -> (n, R*H) matrix."""

    def __init__(self, n_quantiles=16, n_directions=8, dim=None, seed=0):
        self.n_quantiles = n_quantiles
        self.n_directions = n_directions
        self.dim = dim
        self.seed = seed

    def fit(self, X, y=None):
        instances = _as_instances(X)
        d = self.dim if self.dim is not None else instances[0].dim
        self.encoder_ = init_encoder(d, self.n_quantiles, self.n_directions,
                                     self.seed, featurizer=False)
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        instances = _as_instances(X)
        return np.stack([encode(inst, self.encoder_).values for inst in instances])


class SWDRSOClassifier(BaseEstimator, ClassifierMixin):
    """Set classifier trained with the robust barycentric objective."""

    def __init__(self, alpha=0.5, lr=1e-3, epochs=10, batch_size=32, seed=0,
                 n_quantiles=16, n_directions=8, dim=None,
                 pool_size=4, radius=0.1, ascent_steps=2, ascent_lr=0.1,
                 adversary_mode="barycentric", workers=1):
        self.alpha = alpha
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.n_quantiles = n_quantiles
        self.n_directions = n_directions
        self.dim = dim
        self.pool_size = pool_size
        self.radius = radius
        self.ascent_steps = ascent_steps
        self.ascent_lr = ascent_lr
        self.adversary_mode = adversary_mode
        self.workers = workers

    def _config(self, d_in: int, n_classes: int) -> TrainConfig:
        d = self.dim if self.dim is not None else d_in
        return TrainConfig(
            alpha=self.alpha, lr=self.lr, epochs=self.epochs,
            batch_size=self.batch_size, seed=self.seed,
            adversary=AdversaryConfig(K=self.pool_size, rho=self.radius,
                                      T=self.ascent_steps, eta=self.ascent_lr,
                                      mode=self.adversary_mode),
            d=d, H=self.n_quantiles, R=self.n_directions, d_in=d_in,
            task="classification", n_classes=n_classes, workers=self.workers,
        )

    def fit(self, X, y):
        y = np.asarray(y)
        instances = _as_instances(X, y)
        self.classes_ = np.unique(y)
        class_index = {c: i for i, c in enumerate(self.classes_)}
        instances = [SetInstance(id=inst.id, elements=inst.elements,
                                 label=class_index[y[i]], split_tag="train")
                     for i, inst in enumerate(instances)]
        config = self._config(instances[0].dim, len(self.classes_))
        self.model_ = init_model(config)
        adam = AdamState.for_model(self.model_)
        self.history_ = [train_epoch(instances, self.model_, adam, config, epoch)
                         for epoch in range(config.epochs)]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        from .metrics import _embed
        instances = _as_instances(X)
        embs = np.stack([_embed(self.model_, inst).values for inst in instances])
        return embs @ self.model_.head.weight + self.model_.head.bias

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
