"""Scikit-learn compatible MLP classifier trained by the sharpness family.

`FladClassifier` is the package's estimator surface: `fit` trains a fresh
model; `partial_fit` supports the class-incremental protocol by growing
the softmax head for previously unseen classes (new units start at zero),
resetting the optimizer's EMA trackers, and training another phase. The
continual-learning harness drives exactly this estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .mlp import MlpOracle, ModelSpec, grow_head, init_params
from .oracles import AnchoredOracle
from .optim import KINDS, VARIANTS, HyperParams, OptimizerState, Schedule
from .params import ParamVector
from .seeding import child_rng, child_seed_sequence
from .training import run_training

__all__ = ["FladClassifier"]


class FladClassifier(ClassifierMixin, BaseEstimator):
    """MLP classifier whose training step minimizes decomposed sharpness.

    Parameters mirror the optimizer family: `optimizer` picks the kind
    ("sgd", "zeroth", "first", "combined", "flad", "flad-0th", "flad-1st"),
    `variant` the first-order perturbation direction, and the remaining
    scalars the usual hyperparameters (eta learning rate, rho radius, gamma
    first-order weight, sigma decomposition coefficient, lambda0/lambda1
    EMA factors, c division guard). `flad_window` restricts the sharpness
    machinery to a fraction of each phase's epochs; outside it training is
    plain SGD. `anchor` > 0 adds a quadratic pull toward the previous
    phase's parameters on `partial_fit`, a minimal regularization-based
    continual-learning hook.
    """

    def __init__(
        self,
        hidden_widths=(32,),
        activation="relu",
        optimizer="flad",
        variant="noise-component",
        eta=0.1,
        rho=0.2,
        gamma=0.5,
        sigma=0.5,
        lambda0=0.9,
        lambda1=0.9,
        c=1e-12,
        momentum=0.9,
        weight_decay=5e-4,
        epochs=50,
        batch_size=128,
        lr_decay_points=(0.3, 0.6, 0.85),
        theorem_mode=False,
        flad_window=(0.0, 1.0),
        anchor=0.0,
        random_state=0,
    ):
        self.hidden_widths = hidden_widths
        self.activation = activation
        self.optimizer = optimizer
        self.variant = variant
        self.eta = eta
        self.rho = rho
        self.gamma = gamma
        self.sigma = sigma
        self.lambda0 = lambda0
        self.lambda1 = lambda1
        self.c = c
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_decay_points = lr_decay_points
        self.theorem_mode = theorem_mode
        self.flad_window = flad_window
        self.anchor = anchor
        self.random_state = random_state

    # -- configuration ------------------------------------------------------

    def _hyper(self) -> HyperParams:
        return HyperParams(
            eta=self.eta,
            rho=self.rho,
            gamma=self.gamma,
            sigma=self.sigma,
            lambda0=self.lambda0,
            lambda1=self.lambda1,
            c=self.c,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
        )

    def _schedule(self) -> Schedule:
        return Schedule(
            lr_decay_points=tuple(self.lr_decay_points),
            theorem_mode=self.theorem_mode,
            flad_window=tuple(self.flad_window),
        )

    def _validate_config(self):
        if self.optimizer not in KINDS:
            raise ValueError(f"optimizer must be one of {KINDS}, got {self.optimizer!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.optimizer == "flad" and self.variant != "noise-component":
            raise ValueError("the flad optimizer requires variant='noise-component'")
        if self.anchor < 0:
            raise ValueError("anchor must be non-negative")
        self._hyper()
        self._schedule()

    # -- fitting -------------------------------------------------------------

    def fit(self, X, y):
        """Train from scratch on (X, y); classes are taken from y."""
        X, y = check_X_y(X, y)
        self._validate_config()
        self._clear_fit_state()
        return self._train_phase(X, y, unique_labels(y))

    def partial_fit(self, X, y, classes=None):
        """Train one class-incremental phase.

        `classes` lists the labels this phase may introduce; unseen ones
        grow the head in the given order. On the first call it defaults to
        the labels present in y.
        """
        X, y = check_X_y(X, y)
        self._validate_config()
        if not hasattr(self, "classes_"):
            self._clear_fit_state()
        phase_classes = unique_labels(y) if classes is None else np.asarray(classes)
        return self._train_phase(X, y, phase_classes)

    def _clear_fit_state(self):
        for attr in (
            "classes_",
            "params_",
            "model_spec_",
            "optimizer_state_",
            "history_",
            "n_features_in_",
            "phase_count_",
            "sharp_steps_",
            "total_steps_",
        ):
            if hasattr(self, attr):
                delattr(self, attr)

    def _train_phase(self, X, y, phase_classes):
        first_phase = not hasattr(self, "classes_")
        if first_phase:
            self.classes_ = np.asarray([], dtype=np.asarray(phase_classes).dtype)
            self.n_features_in_ = X.shape[1]
            self.history_ = []
            self.phase_count_ = 0
            self.sharp_steps_ = 0
            self.total_steps_ = 0
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features but the model was built with {self.n_features_in_}"
            )

        new_classes = [cls for cls in np.asarray(phase_classes) if cls not in set(self.classes_)]
        unseen = set(np.unique(y)) - set(self.classes_) - set(new_classes)
        if unseen:
            raise ValueError(f"y contains labels not declared for this phase: {sorted(unseen)}")

        phase = self.phase_count_
        anchor_values = None
        if new_classes:
            if first_phase:
                if len(new_classes) < 2:
                    raise ValueError("the first phase must introduce at least two classes")
                spec = ModelSpec(
                    input_dim=self.n_features_in_,
                    hidden_widths=tuple(self.hidden_widths),
                    output_classes=len(new_classes),
                    activation=self.activation,
                    init_seed=int(
                        child_seed_sequence(self.random_state, "model").generate_state(1)[0]
                    ),
                )
                params = init_params(spec)
            else:
                spec, params = grow_head(self.model_spec_, self.params_, len(new_classes))
            self.model_spec_ = spec
            self.params_ = params
            self.classes_ = np.concatenate([self.classes_, np.asarray(new_classes)])
        if not first_phase and self.anchor > 0:
            anchor_values = self.params_.values.copy()

        oracle = MlpOracle(self.model_spec_)
        if anchor_values is not None:
            oracle = AnchoredOracle(oracle, anchor_values, self.anchor)

        index_of = {cls: i for i, cls in enumerate(self.classes_)}
        encoded = np.fromiter((index_of[cls] for cls in y), dtype=np.int64, count=len(y))

        state = OptimizerState.fresh(
            self.model_spec_.param_count,
            noise_rng=child_rng(self.random_state, "variant-noise", phase),
        )
        result = run_training(
            oracle,
            self.params_.values,
            X.astype(np.float64, copy=False),
            encoded,
            kind=self.optimizer,
            hp=self._hyper(),
            schedule=self._schedule(),
            epochs=self.epochs,
            batch_size=self.batch_size,
            shuffle_rng=child_rng(self.random_state, "shuffle", phase),
            variant=self.variant,
            state=state,
            epoch_callback=getattr(self, "_epoch_callback", None),
        )
        self.params_ = self.params_.with_values(result.w)
        self.optimizer_state_ = result.state
        self.history_.append(
            {
                "phase": phase,
                "classes": [int(cls) for cls in np.asarray(phase_classes)],
                "train_loss": result.epoch_losses,
                "train_accuracy": result.epoch_accuracies,
                "sharp_steps": result.sharp_steps,
                "total_steps": result.total_steps,
            }
        )
        self.phase_count_ += 1
        self.sharp_steps_ += result.sharp_steps
        self.total_steps_ += result.total_steps
        return self

    # -- inference -----------------------------------------------------------

    def _checked_inputs(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features but the model was built with {self.n_features_in_}"
            )
        return X

    def decision_function(self, X):
        """Raw logits over seen classes, columns in `classes_` order."""
        X = self._checked_inputs(X)
        oracle = MlpOracle(self.model_spec_)
        logits = oracle.logits(self.params_.values, X)
        return logits[:, : len(self.classes_)]

    def predict_proba(self, X):
        X = self._checked_inputs(X)
        oracle = MlpOracle(self.model_spec_)
        probs = oracle.predict_proba(self.params_.values, X)
        probs = probs[:, : len(self.classes_)]
        return probs / probs.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    # -- introspection ---------------------------------------------------------

    @property
    def parameter_vector_(self) -> ParamVector:
        check_is_fitted(self, "params_")
        return self.params_
