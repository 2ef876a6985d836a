"""Command-line experiment runner: ``soae {train,attack,evaluate,sweep}``.

Every run writes ``manifest.json`` (the fully resolved experiment plus the
library version) into ``--out``; passing that manifest back through
``--config`` reproduces the run's CSV files byte for byte. CSV files carry no
timings; wall-clock figures go to the JSON side files.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import ATTACKS, AttackConfig, run_attack_batch
from .data import Dataset, IdxFormatError, load_mnist, synthetic_blobs
from .metrics import image_quality
from .nn import FeedForwardModel
from .train import TrainConfig, train

log = logging.getLogger("soae")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

CHUNK = 64  # fixed work unit so results do not depend on --workers
SWEEP_AXES = ("eta", "tau", "iterations")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    command: str
    dataset: str = "mnist"
    subset: int | None = None
    data_dir: str | None = None
    model: list[str] = field(default_factory=list)
    attack_name: str = "soae"
    attacks: list[str] = field(default_factory=lambda: list(ATTACKS))
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    sweep_axis: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    seed: int = 0
    out: str = "out"
    workers: int = 1
    figures: bool = False

    def validate(self) -> None:
        if self.command not in ("train", "attack", "evaluate", "sweep"):
            raise ConfigError(f"unknown command {self.command!r}")
        if self.dataset not in ("mnist", "blobs"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.subset is not None and self.subset < 1:
            raise ConfigError("--subset must be positive")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if self.command in ("attack", "evaluate", "sweep") and not self.model:
            raise ConfigError(f"{self.command} needs --model")
        names = [self.attack_name] if self.command != "evaluate" else self.attacks
        for name in names:
            if name not in ATTACKS:
                raise ConfigError(f"unknown attack {name!r}; choose from {', '.join(ATTACKS)}")
        if self.command == "sweep":
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"--sweep-axis must be one of {', '.join(SWEEP_AXES)}")
            if not self.sweep_values:
                raise ConfigError("--sweep-values must list at least one value")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["train"] = self.train.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        try:
            train_cfg = dict(data.pop("train", {}) or {})
            attack_cfg = dict(data.pop("attack", {}) or {})
            nested = train_cfg.pop("attack", None)
            if "hidden" in train_cfg:
                train_cfg["hidden"] = tuple(train_cfg["hidden"])
            tc = TrainConfig(**train_cfg)
            if nested:
                tc = replace(tc, attack=AttackConfig(**nested))
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            if isinstance(data.get("model"), str):
                data["model"] = [data["model"]]
            return cls(train=tc, attack=AttackConfig(**attack_cfg), **data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


# -- argument parsing --------------------------------------------------------


def parse_number(text: str) -> float:
    """Accept decimals and exact ratios such as ``8/255``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def parse_list(text: str) -> list[float]:
    return [parse_number(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", help="JSON experiment config or manifest", default=S)
    common.add_argument("--dataset", choices=["mnist", "blobs"], default=S)
    common.add_argument("--subset", type=int, default=S, help="number of examples to use")
    common.add_argument("--data-dir", dest="data_dir", default=S)
    common.add_argument("--model", action="append", default=S, help="checkpoint path (repeatable for sweep)")
    common.add_argument("--attack", dest="attack_name", choices=list(ATTACKS), default=S)
    common.add_argument("--eps", type=parse_number, default=S)
    common.add_argument("--alpha", type=parse_number, default=S)
    common.add_argument("--iters", type=int, default=S)
    common.add_argument("--step-size", dest="step_size", type=parse_number, default=S)
    common.add_argument("--eta", type=parse_number, default=S)
    common.add_argument("--tau", type=parse_number, default=S)
    common.add_argument("--m-max", dest="m_max", type=int, default=S)
    common.add_argument("--normalize", action="store_true", default=S)
    common.add_argument("--central", action="store_true", default=S)
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--out", default=S)
    common.add_argument("--workers", type=int, default=S)
    common.add_argument("--figures", action="store_true", default=S, help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true", default=False)

    parser = argparse.ArgumentParser(prog="soae", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"soae {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[common], help="train a classifier (standard or adversarial)")
    p_train.add_argument("--epochs", type=int, default=S)
    p_train.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p_train.add_argument("--lr", type=parse_number, default=S)
    p_train.add_argument("--momentum", type=parse_number, default=S)
    p_train.add_argument("--weight-decay", dest="weight_decay", type=parse_number, default=S)
    p_train.add_argument("--hidden", default=S, help="comma-separated hidden widths, e.g. 256")

    sub.add_parser("attack", parents=[common], help="attack a checkpoint, one CSV row per example")
    p_eval = sub.add_parser("evaluate", parents=[common], help="clean/robust accuracy, PSNR and SSIM")
    p_eval.add_argument("--attacks", default=S, help="comma-separated subset of fgsm,pgd,soae")
    p_sweep = sub.add_parser("sweep", parents=[common], help="sweep eta, tau or iterations")
    p_sweep.add_argument("--sweep-axis", dest="sweep_axis", choices=list(SWEEP_AXES), default=S)
    p_sweep.add_argument("--sweep-values", dest="sweep_values", type=parse_list, default=S)
    return parser


ATTACK_FLAGS = {"eps": "epsilon", "alpha": "alpha", "iters": "iterations", "step_size": "step_size",
                "eta": "eta", "tau": "tau", "m_max": "m_max", "normalize": "normalize", "central": "central"}
TRAIN_FLAGS = ("epochs", "batch_size", "lr", "momentum", "weight_decay", "hidden")
SPEC_FLAGS = ("dataset", "subset", "data_dir", "model", "attack_name", "sweep_axis", "sweep_values",
              "seed", "out", "workers", "figures")


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return data.get("spec", data)


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    """defaults < config file < command-line flags."""
    given = vars(args)
    base = load_config_file(given["config"]) if "config" in given else {}
    if base.get("command", args.command) != args.command:
        raise ConfigError(f"config is for {base['command']!r}, not {args.command!r}")
    base["command"] = args.command
    spec = ExperimentSpec.from_dict(base)

    changes = {k: given[k] for k in SPEC_FLAGS if k in given}
    if "attacks" in given:
        changes["attacks"] = [t.strip() for t in given["attacks"].split(",") if t.strip()]
    try:
        atk = {ATTACK_FLAGS[k]: given[k] for k in ATTACK_FLAGS if k in given}
        if atk:
            changes["attack"] = spec.attack.replace(**atk)
        tr = {k: given[k] for k in TRAIN_FLAGS if k in given}
        if "hidden" in tr:
            tr["hidden"] = tuple(int(t) for t in str(tr["hidden"]).split(",") if t.strip())
        if "seed" in given:
            tr["seed"] = given["seed"]
        if tr:
            changes["train"] = spec.train.replace(**tr)
        spec = replace(spec, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if spec.command == "train" and ("attack_name" in given or spec.train.attack is not None):
        # --attack on train selects adversarial training with that method
        method = given.get("attack_name", spec.train.attack_method)
        attack = spec.attack
        if spec.train.attack is not None and not atk and "attack" not in base:
            attack = spec.train.attack
        try:
            spec = replace(spec, attack_name=method,
                           train=spec.train.replace(attack=attack, attack_method=method))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    spec.validate()
    return spec


# -- shared helpers ------------------------------------------------------------


def load_dataset(spec: ExperimentSpec, split: str) -> Dataset:
    if spec.dataset == "blobs":
        n = spec.subset or 1000
        seed = spec.seed if split == "train" else spec.seed + 1
        return synthetic_blobs(n, dims=20, classes=3, spread=0.1, seed=seed)
    return load_mnist(split, limit=spec.subset, directory=spec.data_dir)


def write_manifest(spec: ExperimentSpec, out: Path) -> None:
    manifest = {"tool": "soae", "version": __version__, "spec": spec.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def _attack_chunk(payload):
    name, model, X, Y, config = payload
    X_adv, dims = run_attack_batch(name, model, X, Y, config)
    return X_adv, dims


def attack_dataset(name, model, dataset: Dataset, config: AttackConfig, workers: int = 1):
    """Attack every example in fixed-size chunks; row order follows example id."""
    chunks = [
        (name, model, dataset.X[lo : lo + CHUNK], dataset.y[lo : lo + CHUNK], config)
        for lo in range(0, len(dataset), CHUNK)
    ]
    start = time.perf_counter()
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_attack_chunk, chunks))
    else:
        results = [_attack_chunk(c) for c in chunks]
    seconds = time.perf_counter() - start
    X_adv = np.concatenate([r[0] for r in results])
    if results[0][1] is None:
        dims = None
    else:
        dims = np.concatenate([r[1] for r in results])
    return X_adv, dims, seconds


def _fmt(x: float) -> str:
    return repr(float(x))


# -- commands ------------------------------------------------------------------


def run_train(spec: ExperimentSpec) -> dict:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(spec, "train")
    model, report = train(dataset, spec.train)
    ckpt = out / "model.npz"
    model.save(ckpt)
    report.checkpoint = str(ckpt)
    report.write_csv(out / "curve.csv")
    summary = {
        "checkpoint": str(ckpt),
        "final_train_accuracy": report.clean_accuracy[-1],
        "final_mean_loss": report.mean_loss[-1],
        "seconds_per_epoch": report.seconds,
    }
    write_json(out / "report.json", summary)
    write_manifest(spec, out)
    if spec.figures:
        from .plotting import training_curve

        training_curve(report, out / "curve.png")
    return summary


def run_attack(spec: ExperimentSpec) -> dict:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    model = FeedForwardModel.load(spec.model[0])
    dataset = load_dataset(spec, "test")
    X_adv, dims, seconds = attack_dataset(spec.attack_name, model, dataset, spec.attack, spec.workers)
    clean_pred = model.predict(dataset.X)
    adv_pred = model.predict(X_adv)
    loss_clean = model.loss(dataset.X, dataset.y)
    loss_adv = model.loss(X_adv, dataset.y)
    success = adv_pred != dataset.y
    linf = np.abs(X_adv - dataset.X).max(axis=1)
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["example_id", "true_label", "clean_pred", "adv_pred", "success", "linf",
                         "loss_clean", "loss_adv", "krylov_m_list"])
        for i in range(len(dataset)):
            m_list = "" if dims is None else ";".join(str(int(m)) for m in dims[i])
            writer.writerow([i, int(dataset.y[i]), int(clean_pred[i]), int(adv_pred[i]), int(success[i]),
                             _fmt(linf[i]), _fmt(loss_clean[i]), _fmt(loss_adv[i]), m_list])
    mean_psnr, mean_ssim = image_quality(dataset.X, X_adv, success) if dataset.image_shape else (None, None)
    summary = {
        "attack": spec.attack_name,
        "n_examples": len(dataset),
        "clean_accuracy": float(np.mean(clean_pred == dataset.y)),
        "robust_accuracy": float(np.mean(adv_pred == dataset.y)),
        "mean_psnr": mean_psnr,
        "mean_ssim": mean_ssim,
        "mean_krylov_m": None if dims is None else float(dims.mean()),
        "mean_seconds_per_example": seconds / len(dataset),
    }
    write_json(out / "summary.json", summary)
    write_manifest(spec, out)
    return summary


def run_evaluate(spec: ExperimentSpec) -> dict:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    model = FeedForwardModel.load(spec.model[0])
    dataset = load_dataset(spec, "test")
    from .metrics import EvalReport

    report = EvalReport(float(np.mean(model.predict(dataset.X) == dataset.y)), n_examples=len(dataset))
    seconds = {}
    for name in spec.attacks:
        X_adv, _, secs = attack_dataset(name, model, dataset, spec.attack, spec.workers)
        pred = model.predict(X_adv)
        report.robust_accuracy[name] = float(np.mean(pred == dataset.y))
        if dataset.image_shape:
            report.mean_psnr[name], report.mean_ssim[name] = image_quality(dataset.X, X_adv, pred != dataset.y)
        seconds[name] = secs / len(dataset)
    with open(out / "eval.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["attack", "clean_accuracy", "robust_accuracy", "mean_psnr", "mean_ssim"])
        for name in spec.attacks:
            writer.writerow([name, _fmt(report.clean_accuracy), _fmt(report.robust_accuracy[name]),
                             _fmt(report.mean_psnr.get(name, float("nan"))),
                             _fmt(report.mean_ssim.get(name, float("nan")))])
    summary = report.to_dict() | {"mean_seconds_per_example": seconds}
    write_json(out / "eval.json", summary)
    write_manifest(spec, out)
    if spec.figures:
        from .plotting import evaluation_figure

        evaluation_figure(report, out / "eval.png")
    return summary


def run_sweep(spec: ExperimentSpec) -> dict:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(spec, "test")
    rows, timing = [], {}
    for path in spec.model:
        model = FeedForwardModel.load(path)
        label = Path(path).stem if Path(path).stem != "model" else Path(path).parent.name
        for value in spec.sweep_values:
            key = spec.sweep_axis
            cfg = spec.attack.replace(**{key: int(value) if key == "iterations" else value})
            X_adv, dims, secs = attack_dataset(spec.attack_name, model, dataset, cfg, spec.workers)
            rows.append({
                "axis": spec.sweep_axis,
                "value": value,
                "model": label,
                "robust_accuracy": float(np.mean(model.predict(X_adv) == dataset.y)),
                "mean_m": float("nan") if dims is None else float(dims.mean()),
            })
            timing.setdefault(label, {})[repr(value)] = secs / len(dataset)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis", "value", "model", "robust_accuracy", "mean_m"])
        for r in rows:
            writer.writerow([r["axis"], _fmt(r["value"]), r["model"], _fmt(r["robust_accuracy"]), _fmt(r["mean_m"])])
    write_json(out / "sweep_timing.json", {"mean_seconds_per_example": timing})
    write_manifest(spec, out)
    if spec.figures:
        from .plotting import sweep_figure

        first = next(iter(timing.values()))
        sweep_figure(rows, spec.sweep_axis, out / "sweep.png",
                     seconds={float(k): v for k, v in first.items()})
    return {"rows": rows, "timing": timing}


COMMANDS = {"train": run_train, "attack": run_attack, "evaluate": run_evaluate, "sweep": run_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = resolve_spec(args)
        log.info("resolved config: %s", json.dumps(spec.to_dict(), sort_keys=True))
        result = COMMANDS[spec.command](spec)
    except ConfigError as exc:
        print(f"soae: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, IdxFormatError) as exc:
        print(f"soae: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"soae: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(result, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
