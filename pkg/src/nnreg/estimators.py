"""scikit-learn compatible estimators wrapping the two training schemes."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core_math import Loss, loss_value
from .hint import (HintConfig, check_hint_layer, invariance_probe, train_epoch_hint)
from .metrics import classification_error
from .mtl import (MtlNetwork, MtlOptimizers, ScheduleKind, ScheduleSpec, TriModalDataset,
                  schedule_eval, train_epoch_mtl)
from .network import hidden_representation, init_weights, make_specs, predict
from .optim import (EarlyStopState, OptimConfig, OptimizerState, early_stop_update)


def epoch_rng(random_state, epoch):
    return np.random.default_rng([int(random_state), int(epoch)])


class HintMLPClassifier(ClassifierMixin, BaseEstimator):
    """MLP classifier with an optional class-wise invariance penalty.

    Each minibatch takes a cross-entropy step on all weights, then a separate
    step (own optimizer) on the hint penalty for the layers up to
    ``hint_layer``. ``lam=0`` gives a plain MLP. When ``eval_set`` is passed
    to :meth:`fit`, the weights with the lowest validation error are kept.
    """

    def __init__(self, hidden_layer_sizes=(300, 200, 100), activation="sigmoid",
                 hint_layer=None, measure="sed", gamma=1.0, lam=1.0,
                 learning_rate=0.1, hint_learning_rate=None, momentum=0.9,
                 batch_size=50, max_epochs=100, random_state=0,
                 probe=False, probe_measure="nmd", callback=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.hint_layer = hint_layer
        self.measure = measure
        self.gamma = gamma
        self.lam = lam
        self.learning_rate = learning_rate
        self.hint_learning_rate = hint_learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.random_state = random_state
        self.probe = probe
        self.probe_measure = probe_measure
        self.callback = callback

    def _hint_config(self):
        layer = self.hint_layer or len(self.hidden_layer_sizes)
        return HintConfig(layer, self.measure, self.gamma, self.lam)

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        dims = [X.shape[1], *self.hidden_layer_sizes, self.classes_.size]
        net = init_weights(make_specs(dims, self.activation, "softmax"), self.random_state)
        cfg = self._hint_config()
        if cfg.lam:
            check_hint_layer(net, cfg)
        sup_cfg = OptimConfig(self.learning_rate, self.momentum)
        hint_cfg = OptimConfig(self.hint_learning_rate or self.learning_rate, self.momentum)
        opt_sup = OptimizerState.zeros_like(net.weights)
        opt_hint = OptimizerState.zeros_like(net.weights[:cfg.layer_index])
        if eval_set is not None:
            Xv = check_array(eval_set[0], dtype=np.float64)
            yv = np.asarray(eval_set[1])
            stopper = EarlyStopState()
        self.network_ = net
        self.history_ = []
        for epoch in range(self.max_epochs):
            row = {"epoch": epoch + 1}
            row.update(train_epoch_hint(net, X, y_idx, cfg, opt_sup, opt_hint, sup_cfg,
                                        hint_cfg, self.batch_size, epoch_rng(self.random_state, epoch)))
            if eval_set is not None:
                err = classification_error(self.predict(Xv), yv)
                row["valid_error_%"] = err
                early_stop_update(stopper, err, net.weights)
            if self.probe:
                for k, v in enumerate(invariance_probe(net, X, y_idx, self.probe_measure), 1):
                    row[f"probe_h{k}"] = v
            self.history_.append(row)
            if self.callback is not None:
                self.callback(self, row)
        if eval_set is not None:
            for w, best in zip(net.weights, stopper.best_weights):
                w[...] = best
            self.best_epoch_ = stopper.best_epoch
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return predict(self.network_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def transform(self, X, layer=None):
        """Hidden representation at ``layer`` (default: the hint layer)."""
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return hidden_representation(self.network_, X, layer or self._hint_config().layer_index)


class MtlRegressor(RegressorMixin, BaseEstimator):
    """Structured-output regressor trained alongside input and output auto-encoders.

    ``use_input_ae`` / ``use_output_ae`` switch the secondary tasks; with both
    off this is a plain MLP trained with a constant supervised weight of 1.
    Extra input-only / label-only rows go to :meth:`fit` as ``X_unlabeled``
    and ``Y_unlabeled``.
    """

    def __init__(self, x_code=128, link_hidden=(64,), y_code=16, use_input_ae=True,
                 use_output_ae=True, schedule="abridged_linear", t1=None, sigma=40.0,
                 corruption=0.2, learning_rate=1e-3, momentum=0.9, ae_learning_rate=None,
                 ae_weight_decay=1e-2, batch_size=10, max_epochs=200, random_state=0,
                 callback=None):
        self.x_code = x_code
        self.link_hidden = link_hidden
        self.y_code = y_code
        self.use_input_ae = use_input_ae
        self.use_output_ae = use_output_ae
        self.schedule = schedule
        self.t1 = t1
        self.sigma = sigma
        self.corruption = corruption
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.ae_learning_rate = ae_learning_rate
        self.ae_weight_decay = ae_weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.random_state = random_state
        self.callback = callback

    def schedule_spec(self) -> ScheduleSpec:
        if not (self.use_input_ae or self.use_output_ae):
            return ScheduleSpec(ScheduleKind.CONSTANT, sup=(1.0, 1.0), inp=(0.0, 0.0),
                                out=(0.0, 0.0))
        t1 = self.t1 if self.t1 is not None else max(1, round(0.2 * self.max_epochs))
        return ScheduleSpec(self.schedule, t1=t1, total_epochs=self.max_epochs,
                            sigma=self.sigma,
                            inp=(1.0, 0.0) if self.use_input_ae else (0.0, 0.0),
                            out=(1.0, 0.0) if self.use_output_ae else (0.0, 0.0))

    def _lambdas(self, spec, epoch):
        sup, lin, lout = schedule_eval(spec, epoch)
        return (sup, lin if self.use_input_ae else 0.0, lout if self.use_output_ae else 0.0)

    def fit(self, X, Y, X_unlabeled=None, Y_unlabeled=None, eval_set=None):
        X, Y = check_X_y(X, Y, dtype=np.float64, multi_output=True)
        Y = Y.reshape(Y.shape[0], -1)
        self.n_features_in_ = X.shape[1]
        data = TriModalDataset(X, Y, X_unlabeled, Y_unlabeled)
        net = MtlNetwork.build(X.shape[1], self.x_code, tuple(self.link_hidden),
                               self.y_code, Y.shape[1], self.random_state)
        opts = MtlOptimizers.for_network(
            net, OptimConfig(self.learning_rate, self.momentum),
            OptimConfig(self.ae_learning_rate or self.learning_rate, self.momentum,
                        l2_alpha=self.ae_weight_decay))
        spec = self.schedule_spec()
        if eval_set is not None:
            Xv = check_array(eval_set[0], dtype=np.float64)
            Yv = np.asarray(eval_set[1], dtype=np.float64).reshape(Xv.shape[0], -1)
            stopper = EarlyStopState()
        self.mtl_network_ = net
        self.history_ = []
        for epoch in range(self.max_epochs):
            lambdas = self._lambdas(spec, epoch)
            row = {"epoch": epoch + 1, "lambda_sup": lambdas[0], "lambda_in": lambdas[1],
                   "lambda_out": lambdas[2]}
            losses = train_epoch_mtl(net, data, lambdas, opts, self.batch_size,
                                     epoch_rng(self.random_state, epoch), self.corruption)
            row["J_s_train"] = losses["J_s"]
            row["J_in"] = losses["J_in"]
            row["J_out"] = losses["J_out"]
            if eval_set is not None:
                mse = loss_value(Loss.MSE, net.predict(Xv), Yv)
                row["J_s_valid"] = mse
                early_stop_update(stopper, mse, net.params())
            self.history_.append(row)
            if self.callback is not None:
                self.callback(self, row)
        if eval_set is not None:
            for w, best in zip(net.params(), stopper.best_weights):
                w[...] = best
            self.best_epoch_ = stopper.best_epoch
            self.best_valid_mse_ = stopper.best_validation_loss
        return self

    @property
    def network_(self):
        return self.mtl_network_.main_network()

    def predict(self, X):
        check_is_fitted(self, "mtl_network_")
        return self.mtl_network_.predict(check_array(X, dtype=np.float64))
