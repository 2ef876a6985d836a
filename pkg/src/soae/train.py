"""Standard, PGD and second-order adversarial training with SGD + momentum."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, run_attack_batch
from .data import Dataset
from .nn import FeedForwardModel, param_gradient_step

TRAIN_METHODS = ("standard", "pgd", "soae", "fgsm")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 3e-4
    hidden: tuple[int, ...] = (256,)
    attack: AttackConfig | None = None
    attack_method: str = "pgd"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.attack is not None and self.attack_method not in ("pgd", "soae", "fgsm"):
            raise ValueError(f"unknown attack method {self.attack_method!r}")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        return out


@dataclass
class TrainReport:
    clean_accuracy: list[float] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    checkpoint: str | None = None

    def write_csv(self, path) -> None:
        """Deterministic curve: epoch, clean accuracy, mean loss (timings live in JSON)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "clean_acc", "mean_loss"])
            for k, (acc, loss) in enumerate(zip(self.clean_accuracy, self.mean_loss), start=1):
                writer.writerow([k, repr(acc), repr(loss)])


def _rngs(seed: int):
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    return int(init_seq.generate_state(1)[0]), np.random.default_rng(shuffle_seq)


def _fit(dataset: Dataset, config: TrainConfig, attack: AttackConfig | None, method: str, model=None):
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    init_seed, shuffle_rng = _rngs(config.seed)
    if model is None:
        sizes = [dataset.input_dim, *config.hidden, dataset.num_classes]
        model = FeedForwardModel.initialize(sizes, seed=init_seed)
    velocity = None
    report = TrainReport()
    n = len(dataset)
    for _ in range(config.epochs):
        start = time.perf_counter()
        order = shuffle_rng.permutation(n)
        losses, weights = [], []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            X, Y = dataset.X[idx], dataset.y[idx]
            if attack is not None:
                X, _ = run_attack_batch(method, model, X, Y, attack)
            model, velocity, batch_loss = param_gradient_step(
                model, X, Y, config.lr, config.momentum, config.weight_decay, velocity
            )
            losses.append(batch_loss)
            weights.append(len(idx))
        report.mean_loss.append(float(np.average(losses, weights=weights)))
        report.clean_accuracy.append(float(np.mean(model.predict(dataset.X) == dataset.y)))
        report.seconds.append(time.perf_counter() - start)
    return model, report


def train_standard(dataset: Dataset, config: TrainConfig, model=None):
    """Minibatch ERM. Returns ``(model, report)``; deterministic given the seed."""
    return _fit(dataset, config, None, "standard", model)


def train_adversarial(dataset: Dataset, config: TrainConfig, model=None):
    """Replace every minibatch by adversarial examples crafted against the
    current model before the SGD step (PGD-AT or SOAT by ``attack_method``)."""
    if config.attack is None:
        raise ValueError("adversarial training needs config.attack")
    return _fit(dataset, config, config.attack, config.attack_method, model)


def train(dataset: Dataset, config: TrainConfig, model=None):
    if config.attack is None:
        return train_standard(dataset, config, model)
    return train_adversarial(dataset, config, model)
