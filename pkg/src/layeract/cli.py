"""Command-line entry point.

Subcommands: train, analyze, repro, curves, gradcheck, make-data.  Options
can come from a JSON config file (--config); explicit command-line flags
override file values, which override built-in defaults.  Exit codes:
0 success, 1 numerical failure (divergence, failed gradient check, failed
ordered comparison), 2 configuration/environment failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import analysis, synth
from .activations import activation_names, make_activation
from .core import Rng
from .data import load_dataset, parse_noise_spec
from .errors import DivergenceError, FormatError, InvalidInput, LayerActError
from .layer_act import LayerActivation, curve_emit
from .network import build_mlp
from .train import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)

DATA_DIR_ENV = "LAYERACT_DATA_DIR"

CURVE_CASES = ((0.0, 1.0), (0.0, 5.0), (-5.0, 1.0), (5.0, 1.0))

REPRO_KINDS = ("relu", "lrelu", "prelu", "silu", "hardsilu", "mish", "la-silu", "la-hardsilu")


@dataclass
class RunConfig:
    """Validated union of defaults, config-file values, and CLI flags."""

    activation: str = "la-silu"
    alpha: float = 1e-5
    seed: int = 11
    epochs: int = 20
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 128
    full_batch: bool = False
    dtype: str = "float64"
    hidden: int = 512
    noise: tuple[str, ...] = ("gaussian:0:0.1", "gaussian:0.1:0.1")
    stage: str = "output"
    data_dir: str = ""
    out_dir: str = "layeract-out"
    checkpoint: str = ""
    n_points: int = 4096
    train_n: int = 60000
    test_n: int = 10000
    perturb_backward: str = ""

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=None if self.full_batch else self.batch_size,
            seed=self.seed,
            dtype=self.dtype,
        )

    def resolve_data_dir(self) -> str:
        path = self.data_dir or os.environ.get(DATA_DIR_ENV, "")
        if not path:
            raise InvalidInput(
                f"no data directory: pass --data-dir or set {DATA_DIR_ENV}"
            )
        return path

    def make_kind(self, name: str | None = None):
        name = name or self.activation
        kind = make_activation(name) if name not in ("la-silu", "la-hardsilu") \
            else make_activation(name, alpha=self.alpha)
        return kind


def _merge_config(args: argparse.Namespace) -> RunConfig:
    defaults = RunConfig()
    valid = {f.name for f in fields(RunConfig)}
    file_values = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - valid
        if unknown:
            raise InvalidInput(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
    merged = {}
    for f in fields(RunConfig):
        cli_value = getattr(args, f.name, None)
        if cli_value is not None:
            merged[f.name] = cli_value
        elif f.name in file_values:
            merged[f.name] = file_values[f.name]
        else:
            merged[f.name] = getattr(defaults, f.name)
    if isinstance(merged["noise"], list):
        merged["noise"] = tuple(merged["noise"])
    config = RunConfig(**merged)
    if config.activation not in activation_names():
        raise InvalidInput(
            f"invalid activation {config.activation!r}; valid names: "
            + ", ".join(activation_names())
        )
    return config


def _checkpoint_path(config: RunConfig, kind_name: str | None = None) -> str:
    name = kind_name or config.activation
    return config.checkpoint or os.path.join(
        config.out_dir, f"checkpoint_{name}_seed{config.seed}.lact"
    )


def _train_one(config: RunConfig, kind_name: str, data):
    train_set, test_set = data
    kind = config.make_kind(kind_name)
    rng = Rng(config.seed)
    net = build_mlp(
        rng, [train_set.images.shape[1], config.hidden, 10], kind,
        dtype=np.dtype(config.dtype),
    )
    net, metrics = train(net, train_set, config.train_config(), test_set=test_set)
    return net.astype(np.float64), metrics


def cmd_train(config: RunConfig) -> int:
    data = load_dataset(config.resolve_data_dir())
    net, metrics = _train_one(config, config.activation, data)
    os.makedirs(config.out_dir, exist_ok=True)
    save_checkpoint(
        _checkpoint_path(config), net, config.train_config(), epoch=config.epochs
    )
    write_metrics_csv(
        os.path.join(config.out_dir, f"metrics_{config.activation}_seed{config.seed}.csv"),
        metrics,
    )
    return 0


def cmd_analyze(config: RunConfig) -> int:
    _, test_set = load_dataset(config.resolve_data_dir())
    net = load_checkpoint(_checkpoint_path(config)).network()
    os.makedirs(config.out_dir, exist_ok=True)
    report = analysis.mean_activation(net, test_set, stage=config.stage)
    analysis.write_mean_activation_csv(
        os.path.join(config.out_dir, f"mean_activation_{report.kind}_{config.stage}.csv"),
        report,
    )
    rng = Rng(config.seed)
    for i, spec_text in enumerate(config.noise):
        spec = parse_noise_spec(spec_text)
        fluct = analysis.fluctuation_scan(
            net, test_set, spec, rng.substream(100, i), stage=config.stage
        )
        analysis.write_fluctuation_csv(
            os.path.join(
                config.out_dir,
                f"fluctuation_{fluct.kind}_{config.stage}_{spec.tag()}.csv",
            ),
            fluct,
        )
    return 0


def cmd_repro(config: RunConfig) -> int:
    """Train every kind, scan fluctuation under both normal noises, and
    assert the layer-level kinds' ordered advantages."""
    data = load_dataset(config.resolve_data_dir())
    _, test_set = data
    specs = [parse_noise_spec(t) for t in config.noise]
    os.makedirs(config.out_dir, exist_ok=True)

    results = {}
    for kind_name in REPRO_KINDS:
        net, metrics = _train_one(config, kind_name, data)
        stats = {"acc": metrics[-1].test_acc if metrics else float("nan")}
        stats["grand_mean"] = analysis.mean_activation(net, test_set, "output").mean
        for i, spec in enumerate(specs):
            fluct = analysis.fluctuation_scan(
                net, test_set, spec, Rng(config.seed).substream(200, i), stage="output"
            )
            stats[f"fluct_mean_{i}"] = fluct.mean
            stats[f"fluct_var_{i}"] = fluct.variance
        results[kind_name] = stats

    summary_path = os.path.join(config.out_dir, f"repro_summary_seed{config.seed}.csv")
    noise_cols = [f"fluct_{w}_{i}" for i in range(len(specs)) for w in ("mean", "var")]
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("kind,test_acc,grand_mean," + ",".join(noise_cols) + "\n")
        for kind_name, stats in results.items():
            row = [kind_name, f"{stats['acc']:.6g}", f"{stats['grand_mean']:.6g}"]
            row += [
                f"{stats[f'fluct_{w}_{i}']:.6g}"
                for i in range(len(specs))
                for w in ("mean", "var")
            ]
            fh.write(",".join(row) + "\n")

    failures = []
    for la in ("la-silu", "la-hardsilu"):
        for base in ("relu", "silu"):
            for i in range(len(specs)):
                for w in ("mean", "var"):
                    key = f"fluct_{w}_{i}"
                    if not results[la][key] < results[base][key]:
                        failures.append(f"{key}: {la} !< {base}")
    if not abs(results["la-silu"]["grand_mean"]) < abs(results["relu"]["grand_mean"]):
        failures.append("grand_mean: |la-silu| !< |relu|")
    if not abs(results["la-silu"]["grand_mean"]) <= 1.5 * abs(results["silu"]["grand_mean"]):
        failures.append("grand_mean: |la-silu| > 1.5x |silu|")

    for failure in failures:
        print(f"ordered comparison failed: {failure}", file=sys.stderr)
    return 1 if failures else 0


def cmd_curves(config: RunConfig) -> int:
    os.makedirs(config.out_dir, exist_ok=True)
    kinds = (
        [config.activation]
        if config.activation in ("la-silu", "la-hardsilu")
        else ["la-silu", "la-hardsilu"]
    )
    for kind_name in kinds:
        kind = config.make_kind(kind_name)
        for mu, sigma in CURVE_CASES:
            pairs = curve_emit(kind, mu, sigma, config.n_points, config.seed)
            path = os.path.join(
                config.out_dir, f"curves_{kind_name}_mu{mu:g}_sigma{sigma:g}.csv"
            )
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("y,a\n")
                for y, a in pairs:
                    fh.write(f"{y:.12g},{a:.12g}\n")
    return 0


def cmd_gradcheck(config: RunConfig) -> int:
    entries = analysis.gradcheck_suite(
        config.seed, perturb=config.perturb_backward or None
    )
    os.makedirs(config.out_dir, exist_ok=True)
    analysis.write_gradcheck_csv(os.path.join(config.out_dir, "gradcheck.csv"), entries)
    for entry in entries:
        status = "pass" if entry.passed else "FAIL"
        print(f"{entry.kind:12s} max_rel_err={entry.max_rel_err:.3e} {status}")
    return 0 if all(e.passed for e in entries) else 1


def cmd_make_data(config: RunConfig) -> int:
    target = config.data_dir or os.path.join(config.out_dir, "data")
    synth.write_corpus(target, config.train_n, config.test_n, config.seed)
    print(f"wrote synthetic digit corpus to {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layeract",
        description="Layer-level activation training and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--activation", help="activation kind (see docs)")
        p.add_argument("--alpha", type=float, help="layer-level stability constant")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--data-dir", dest="data_dir")

    p_train = sub.add_parser("train", help="train one network and checkpoint it")
    p_analyze = sub.add_parser("analyze", help="mean-activation and fluctuation scans")
    p_repro = sub.add_parser("repro", help="train all kinds and check ordered comparisons")
    p_curves = sub.add_parser("curves", help="emit activation input/output curves")
    p_gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_makedata = sub.add_parser("make-data", help="write a synthetic digit corpus")

    for p in (p_train, p_analyze, p_repro, p_curves, p_gradcheck, p_makedata):
        add_common(p)
    for p in (p_train, p_repro):
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--momentum", type=float)
        p.add_argument("--weight-decay", dest="weight_decay", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument(
            "--full-batch",
            dest="full_batch",
            action="store_const",
            const=True,
            help="use one full-dataset batch per epoch",
        )
        p.add_argument("--dtype", choices=("float64", "float32"))
        p.add_argument("--hidden", type=int)
    for p in (p_analyze, p_repro):
        p.add_argument(
            "--noise",
            action="append",
            help="noise spec (repeatable): gaussian:M:S, poisson[:R], blur:K:S",
        )
    p_analyze.add_argument("--stage", choices=("input", "output"))
    p_analyze.add_argument("--checkpoint", help="checkpoint path to analyze")
    p_curves.add_argument("--n-points", dest="n_points", type=int)
    p_gradcheck.add_argument(
        "--perturb-backward",
        dest="perturb_backward",
        help="test hook: damage this kind's analytic gradient",
    )
    p_makedata.add_argument("--train-n", dest="train_n", type=int)
    p_makedata.add_argument("--test-n", dest="test_n", type=int)

    parser.set_defaults(func=None)
    p_train.set_defaults(func=cmd_train)
    p_analyze.set_defaults(func=cmd_analyze)
    p_repro.set_defaults(func=cmd_repro)
    p_curves.set_defaults(func=cmd_curves)
    p_gradcheck.set_defaults(func=cmd_gradcheck)
    p_makedata.set_defaults(func=cmd_make_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _merge_config(args)
        return args.func(config)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvalidInput, FormatError, LayerActError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
