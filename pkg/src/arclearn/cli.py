"""Command-line pipeline: gen, train, eval, robust, gradcheck, oracle.

Configuration precedence for ``gen``: built-in defaults, then a plain
key=value config file, then command-line flags. Every command prints its
resolved configuration so a run can be reproduced from its own log.

Exit codes: 0 success, 1 failed check (gradcheck), 2 invalid arguments or
configuration, 3 I/O or file-format failure, 4 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from dataclasses import fields

import numpy as np

from . import datagen, evaluation, models, training
from .autodiff import grad_check
from .container import MalformedFileError, SchemaVersionError
from .datagen import GenSpec
from .geometry import AnalyticSine, discretization_error, polyline_length, sample, analytic_length
from .models import ModelKind
from .training import DivergenceError, TrainConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

_RANGE_FIELDS = (
    "amplitude",
    "phase",
    "rotation",
    "translation",
    "span",
    "cut",
)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _spec_from_layers(file_values: dict, flag_values: dict) -> GenSpec:
    """defaults <- config file <- flags, then validate once."""
    spec_kwargs = {f.name: getattr(GenSpec(), f.name) for f in fields(GenSpec)}

    def apply(source: dict, convert: bool):
        for key, raw in source.items():
            if raw is None:
                continue
            if key in ("n_examples", "n_points", "holdout_examples", "seed"):
                spec_kwargs[key] = int(raw)
            elif key == "train_fraction":
                spec_kwargs[key] = float(raw)
            elif key.endswith(("_min", "_max")) and key.rsplit("_", 1)[0] in _RANGE_FIELDS:
                base, side = key.rsplit("_", 1)
                field_name = f"{base}_range"
                lo, hi = spec_kwargs[field_name]
                value = float(raw)
                spec_kwargs[field_name] = (value, hi) if side == "min" else (lo, value)
            else:
                raise ValueError(f"unknown generator setting {key!r}")

    apply(file_values, True)
    apply(flag_values, False)
    return GenSpec(**spec_kwargs)


def _print_spec(spec: GenSpec) -> None:
    print("resolved generator config:")
    for key, value in spec.to_dict().items():
        print(f"  {key} = {value}")
    print(f"  spec_sha256 = {spec.sha256()}")


def _gen_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--examples", dest="n_examples", type=int)
    parser.add_argument("--points", dest="n_points", type=int)
    parser.add_argument("--holdout", dest="holdout_examples", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    for base in _RANGE_FIELDS:
        parser.add_argument(f"--{base}-min", dest=f"{base}_min", type=float)
        parser.add_argument(f"--{base}-max", dest=f"{base}_max", type=float)


def _collect_gen_flags(args) -> dict:
    keys = ["n_examples", "n_points", "holdout_examples", "seed", "train_fraction"]
    keys += [f"{b}_min" for b in _RANGE_FIELDS] + [f"{b}_max" for b in _RANGE_FIELDS]
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_gen(args) -> int:
    file_values = _parse_config_file(args.config) if args.config else {}
    spec = _spec_from_layers(file_values, _collect_gen_flags(args))
    _print_spec(spec)
    splits = datagen.generate(spec, threads=args.threads)
    datagen.save(splits, args.out)

    lengths = np.array([t.len1 for t in splits.all_triples()])
    quantiles = np.quantile(lengths, [0.0, 0.25, 0.5, 0.75, 1.0])
    print(
        f"wrote {args.out}: train={len(splits.train)} test={len(splits.test)} "
        f"holdout={len(splits.holdout)}"
    )
    print(
        "curve length quantiles (len1): "
        + " ".join(f"{q:.4f}" for q in quantiles)
    )
    print(f"file_sha256 = {file_sha256(args.out)}")
    return EXIT_OK


def cmd_train(args) -> int:
    splits = datagen.load(args.dataset)
    if args.examples_limit is not None:
        splits.train = splits.train[: args.examples_limit]
        splits.test = splits.test[: max(1, args.examples_limit // 4)]
    config = TrainConfig(
        model=ModelKind(args.model),
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        reg_lambda=args.reg_lambda,
        seed=args.seed,
        conv_channels=args.conv_channels,
        center_output=args.center_output,
    )
    print("resolved training config:")
    for key, value in config.to_dict().items():
        print(f"  {key} = {value}")
    print(f"  dataset = {args.dataset}")
    print(f"  dataset_sha256 = {file_sha256(args.dataset)}")
    print(f"  train/test examples = {len(splits.train)}/{len(splits.test)}")

    def progress(record):
        print(
            f"epoch {record.epoch}/{config.epochs} "
            f"train {record.train_loss:.6f} test {record.test_loss:.6f} "
            f"({record.seconds:.1f}s)",
            flush=True,
        )

    params, log = training.train(splits, config, progress=progress)
    extra = {
        "dataset_spec_sha256": splits.spec.sha256(),
        "train_config": config.to_dict(),
    }
    models.save_checkpoint(args.out, config.model, params, extra)
    if args.log:
        log.write_csv(args.log)
        print(f"wrote log {args.log}")
    final = log.final()
    print(f"final train loss {final.train_loss:.6f} test loss {final.test_loss:.6f}")
    print(f"checkpoint {args.out} sha256 = {file_sha256(args.out)}")
    return EXIT_OK


def _load_model(path):
    kind, params, header = models.load_checkpoint(path)
    print(f"checkpoint: model={kind} n_points={header['n_points']}")
    return kind, params, header


def cmd_eval(args) -> int:
    splits = datagen.load(args.dataset)
    kind, params, header = _load_model(args.checkpoint)
    triples = getattr(splits, args.split)
    if not triples:
        raise ValueError(f"split {args.split!r} is empty")
    curves, truths = evaluation.triples_to_curves(triples)
    preds = models.predict(kind, params, curves)
    metrics = evaluation.metrics_from_predictions(preds, truths)
    n = len(triples)
    per_s1 = evaluation.metrics_from_predictions(preds[:n], truths[:n])
    print(f"metrics over all curves ({args.split}): {metrics.format()}")
    print(f"metrics over full curves s1 only:      {per_s1.format()}")
    report = evaluation.axiom_suite(
        kind, params, triples, rng_seed=args.seed, spec=splits.spec
    )
    print(report.format())
    if args.scatter_csv:
        evaluation.write_scatter_csv(args.scatter_csv, truths[:n], preds[:n])
        print(f"wrote scatter {args.scatter_csv}")
    if args.axioms_csv:
        evaluation.write_axiom_csv(args.axioms_csv, report)
        print(f"wrote axiom report {args.axioms_csv}")
    return EXIT_OK


def cmd_robust(args) -> int:
    splits = datagen.load(args.dataset)
    kind, params, header = _load_model(args.checkpoint)
    triples = splits.holdout or splits.test
    if args.limit:
        triples = triples[: args.limit]
    sigmas = [float(s) for s in args.sigmas.split(",")]
    factors = [float(f) for f in args.factors.split(",")]
    print(f"robustness over {len(triples)} holdout triples")
    print(f"sigmas = {sigmas}  factors = {factors}")

    curves, truths = evaluation.triples_to_curves(triples)
    noise = evaluation.noise_robustness(
        kind, params, curves, truths, sigmas, rng_seed=args.seed
    )
    sines = datagen.sines_for_split(splits.spec, "holdout")
    if args.limit:
        sines = sines[: args.limit]
    sub = evaluation.subsample_robustness(
        kind, params, sines, factors, splits.spec.n_points
    )
    print(noise.format())
    print(sub.format())
    evaluation.write_noise_csv(f"{args.out_prefix}_noise.csv", noise)
    evaluation.write_subsample_csv(f"{args.out_prefix}_subsample.csv", sub)
    print(f"wrote {args.out_prefix}_noise.csv and {args.out_prefix}_subsample.csv")
    return EXIT_OK


def _gradcheck_operators(rng) -> list:
    from . import autodiff as ad
    from .autodiff import ParamStore

    cases = []

    def conv_case():
        store = ParamStore()
        store.add("kernel", rng.normal(size=(4, 2, 3)) * 0.3)
        store.add("bias", rng.normal(size=4) * 0.3, bias=True)
        x = rng.normal(size=(2, 12))
        return "conv1d", store, lambda s: ad.sum_all(
            ad.conv1d(ad.Tensor(x), s["kernel"], s["bias"])
        )

    def affine_case():
        store = ParamStore()
        store.add("weight", rng.normal(size=(3, 5)) * 0.4)
        store.add("bias", rng.normal(size=3) * 0.4, bias=True)
        x = rng.normal(size=5)
        return "affine", store, lambda s: ad.sum_all(
            ad.affine(ad.Tensor(x), s["weight"], s["bias"])
        )

    def relu_case():
        store = ParamStore()
        # keep pre-activations away from the kink
        store.add("w", np.where(np.abs(z := rng.normal(size=7)) < 0.1, 0.5, z))
        return "relu", store, lambda s: ad.sum_all(ad.relu(s["w"]))

    def lstm_case():
        store = ParamStore()
        store.add("w_x", rng.normal(size=(16, 2)) * 0.4)
        store.add("w_h", rng.normal(size=(16, 4)) * 0.4)
        store.add("bias", rng.normal(size=16) * 0.2, bias=True)
        xs = rng.normal(size=(5, 2))

        def f(s):
            h = ad.Tensor(np.zeros(4))
            c = ad.Tensor(np.zeros(4))
            for t in range(5):
                h, c = ad.lstm_cell(ad.Tensor(xs[t]), h, c, s["w_x"], s["w_h"], s["bias"])
            return ad.sum_all(h)

        return "lstm_cell", store, f

    def mse_case():
        store = ParamStore()
        store.add("pred", rng.normal(size=6))
        target = ad.Tensor(rng.normal(size=6))
        return "mse", store, lambda s: ad.mse(s["pred"], target)

    def l2_case():
        store = ParamStore()
        store.add("w1", rng.normal(size=(3, 3)))
        store.add("b1", rng.normal(size=3), bias=True)
        store.add("w2", rng.normal(size=4))
        return "l2_penalty", store, lambda s: ad.l2_penalty(s)

    for build in (conv_case, affine_case, relu_case, lstm_case, mse_case, l2_case):
        cases.append(build())
    return cases


def _gradcheck_model(kind: ModelKind, n_points: int, seed: int):
    from . import autodiff as ad

    params = models.init_params(kind, seed, n_points=n_points)
    span = 2.0 * math.pi
    sine = AnalyticSine(amplitude=1.2, phase=0.3, p_lo=0.0, p_hi=span)
    pair = np.stack(
        [
            sample(sine.restrict(0.0, 0.45 * span), n_points),
            sample(sine.restrict(0.45 * span, span), n_points),
        ]
    )
    len1 = analytic_length(sine)

    def f(store):
        both = models.forward(kind, store, pair)
        resid = ad.Tensor(np.float64(len1)) - ad.sum_all(both)
        return ad.square(resid) + 0.01 * ad.l2_penalty(store)

    return params, f


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    failed = False
    print(f"operator checks (eps={args.epsilon:g}, tol={args.tolerance:g}):")
    for name, store, f in _gradcheck_operators(rng):
        report = grad_check(f, store, epsilon=args.epsilon, tolerance=args.tolerance)
        print(f"  {name:<12} {report}")
        failed |= not report.passed

    kinds = [ModelKind.CNN, ModelKind.LSTM] if args.model == "both" else [ModelKind(args.model)]
    for kind in kinds:
        params, f = _gradcheck_model(kind, args.points, args.seed)
        report = grad_check(f, params, epsilon=args.epsilon, tolerance=args.tolerance)
        print(f"  loss[{kind}]{'':<4} {report}")
        failed |= not report.passed
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_oracle(args) -> int:
    if args.span <= 0:
        raise ValueError("span must be positive")
    sine = AnalyticSine(
        amplitude=args.amplitude,
        phase=args.phase,
        isometry=__import__("arclearn.geometry", fromlist=["Isometry"]).Isometry(
            args.rotation, args.tx, args.ty
        ),
        p_lo=args.p_lo,
        p_hi=args.p_lo + args.span,
    )
    exact = analytic_length(sine)
    chord = polyline_length(sample(sine, args.points))
    print(f"analytic_length      = {exact:.9f}")
    print(f"chord_length (n={args.points}) = {chord:.9f}")
    print(f"discretization_error = {exact - chord:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arclearn",
        description="Generate curve datasets, train length regressors, evaluate the length axioms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    _gen_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=["cnn", "lstm"], default="cnn")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch CSV log path")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    p.add_argument("--weight-decay", type=float, default=TrainConfig.weight_decay)
    p.add_argument("--reg-lambda", type=float, default=TrainConfig.reg_lambda)
    p.add_argument("--seed", type=int, default=TrainConfig.seed)
    p.add_argument("--conv-channels", type=int, default=TrainConfig.conv_channels)
    p.add_argument(
        "--center-output",
        action=argparse.BooleanOptionalAction,
        default=TrainConfig.center_output,
        help="start the output bias at half the mean target",
    )
    p.add_argument("--examples-limit", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics and axiom report for a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "test", "holdout"], default="holdout")
    p.add_argument("--scatter-csv")
    p.add_argument("--axioms-csv")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robust", help="noise and subsampling robustness tables")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--sigmas", default="0,0.01,0.05,0.1")
    p.add_argument("--factors", default="1,2,4,8")
    p.add_argument("--limit", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_robust)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--model", choices=["cnn", "lstm", "both"], default="both")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle", help="analytic vs chord length for one sine curve")
    p.add_argument("--amplitude", "-a", type=float, required=True)
    p.add_argument("--phase", "--phi", type=float, default=0.0)
    p.add_argument("--span", type=float, required=True)
    p.add_argument("--points", "-n", type=int, default=200)
    p.add_argument("--rotation", type=float, default=0.0)
    p.add_argument("--tx", type=float, default=0.0)
    p.add_argument("--ty", type=float, default=0.0)
    p.add_argument("--p-lo", type=float, default=0.0)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (MalformedFileError, SchemaVersionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
