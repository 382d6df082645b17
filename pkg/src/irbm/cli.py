"""Command-line surface: train, eval, sample, check, convert-dataset.

Configuration lives in a flat key=value file, overridable per key with
--set; every command is deterministic given (config, seed, inputs). Exit
codes: 0 success, 1 validation failure, 2 runtime failure, 3 invariant or
integrity failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation
from .checkpoint import CheckpointData, CheckpointError, load_checkpoint, save_checkpoint
from .datasets import (
    Dataset,
    binarize_stochastic,
    load_mnist_idx,
    read_ibmp,
    synth_bars_and_stripes,
    synth_shifted_patterns,
    write_ibmp,
)
from .evaluation import EXACT_D_CAP, full_report
from .model import marginal_z_posterior, zero_model
from .rng import stream
from .sampling import gibbs_sweep
from .training import TrainConfig, Trainer

METRICS_HEADER = "# irbm-metrics v1"
METRICS_COLUMNS = "epoch,avg_loglik,error,N_h,l_t,M_t,max_log_mass"


@dataclass
class RunConfig:
    """Training-run settings: data, schedule and output locations, plus the
    model hyperparameters not owned by TrainConfig."""

    dataset: str = ""
    out_dir: str = "runs/out"
    epochs: int = 10
    eval_every: int = 50
    checkpoint_every: int = 0          # additionally keep every k'th epoch
    metrics_subsample: int = 2048
    n_perms: int = 5
    exact_cap: int = EXACT_D_CAP
    ais_temps: int = 1000
    ais_chains: int = 100
    beta: float = 1.01
    penalty_mode: str = "constant"
    resume: str = ""
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self):
        if not self.dataset:
            raise ValueError("a dataset must be given")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.penalty_mode not in ("constant", "dynamic"):
            raise ValueError("penalty_mode must be 'constant' or 'dynamic'")
        if self.beta <= 1.0:
            raise ValueError("beta must exceed 1")
        self.train.validate()
        return self


def _coerce(value: str, typ):
    text = value.strip()
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    if typ in (bool, "bool"):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ == "opt_int":
        return None if text.lower() in ("none", "auto", "") else int(text)
    return text


def _annotation_kind(annotation) -> str:
    text = str(annotation)
    if "int | None" in text or "Optional[int]" in text:
        return "opt_int"
    if "bool" in text:
        return "bool"
    if "int" in text:
        return "int"
    if "float" in text:
        return "float"
    return "str"


def _field_types() -> dict:
    out = {}
    for f in fields(RunConfig):
        if f.name != "train":
            out[f.name] = _annotation_kind(f.type)
    for f in fields(TrainConfig):
        out[f.name] = _annotation_kind(f.type)
    return out


def parse_key_value_file(path) -> dict:
    """Flat key=value settings, '#' starting a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_run_config(config_path=None, overrides=()) -> RunConfig:
    """Defaults, then the config file, then --set overrides; unknown keys are
    rejected."""
    types = _field_types()
    run_fields = {f.name for f in fields(RunConfig) if f.name != "train"}
    train_fields = {f.name for f in fields(TrainConfig)}
    config = RunConfig()

    def apply(key, value, where):
        if key not in types:
            raise ValueError(f"unknown configuration key {key!r} ({where})")
        typ = types[key]
        converted = _coerce(value, typ)
        if key in run_fields:
            setattr(config, key, converted)
        elif key in train_fields:
            setattr(config.train, key, converted)

    if config_path:
        for key, value in parse_key_value_file(config_path).items():
            apply(key, value, f"config file {config_path}")
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply(key.strip(), value, "--set override")
    return config


# -- dataset resolution ---------------------------------------------------------


def _parse_spec_args(text: str) -> dict:
    out = {}
    if not text:
        return out
    for part in text.split(","):
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_dataset(spec: str, split: str = "train") -> Dataset:
    """A filesystem path loads a packed-bitmap file (picking `split`);
    'bars:...' and 'shifted:...' build the synthetic families."""
    if spec.startswith("bars:") or spec == "bars":
        args = _parse_spec_args(spec.partition(":")[2])
        return synth_bars_and_stripes(side=int(args.get("side", 4)),
                                      n=int(args.get("n", 500)),
                                      seed=int(args.get("seed", 0)))
    if spec.startswith("shifted:") or spec == "shifted":
        args = _parse_spec_args(spec.partition(":")[2])
        return synth_shifted_patterns(length=int(args.get("length", 8)),
                                      width=int(args.get("width", 3)),
                                      n=int(args.get("n", 500)),
                                      seed=int(args.get("seed", 0)),
                                      labeled=bool(int(args.get("labeled", 0))))
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"dataset {spec!r} is neither a file nor a synthetic spec")
    splits = read_ibmp(path)
    if split not in splits:
        raise ValueError(f"{spec} has no {split!r} split (has {sorted(splits)})")
    return splits[split]


# -- metrics ----------------------------------------------------------------------


def _metrics_row(epoch, avg_loglik, error, n_h, l_t, m_t, max_log_mass) -> str:
    def num(x, fmt="{:.6f}"):
        if x is None or (isinstance(x, float) and not math.isfinite(x)):
            return ""
        return fmt.format(x)

    return (f"{epoch},{num(avg_loglik)},{num(error)},{n_h},{l_t},{m_t},"
            f"{num(max_log_mass)}")


def _epoch_metrics(trainer: Trainer, X, Y, config: RunConfig) -> dict:
    params = trainer.params
    rng = stream(config.train.seed, "metrics", trainer.epochs_done)
    n = X.shape[0]
    take = min(n, config.metrics_subsample)
    idx = rng.choice(n, size=take, replace=False) if take < n else np.arange(n)
    sub_x = X[idx]
    avg_loglik = None
    if params.D <= config.exact_cap:
        avg_loglik = evaluation.exact_loglik(params, sub_x, config.exact_cap)
    elif trainer.epochs_done % config.eval_every == 0:
        # too large for enumeration: estimate the partition on the sparse
        # cadence only
        ais = evaluation.ais_log_partition(params, config.ais_temps,
                                           config.ais_chains, rng,
                                           base_means=sub_x.mean(axis=0))
        avg_loglik = float(np.mean(evaluation.log_pstar(params, sub_x))) - ais.log_z
    error = None
    if Y is not None and params.has_labels:
        error, _, _, _ = evaluation.classification_metrics(params, sub_x, Y[idx])
    n_h = evaluation.effective_hidden_size(params, sub_x,
                                           config.train.minibatch_size)
    m_t = trainer.regroup.M_t
    max_log_mass = None
    if m_t >= 1:
        zp = marginal_z_posterior(params, sub_x)
        max_log_mass = float(np.max(zp.mass_at_most(m_t)))
    return {"avg_loglik": avg_loglik, "error": error, "n_h": n_h,
            "l_t": params.l, "m_t": m_t, "max_log_mass": max_log_mass}


# -- commands ----------------------------------------------------------------------


def cmd_train(args) -> int:
    config = build_run_config(args.config, args.set)
    if args.dataset:
        config.dataset = args.dataset
    if args.out_dir:
        config.out_dir = args.out_dir
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.resume:
        config.resume = args.resume
    config.validate()

    data = resolve_dataset(config.dataset, "train")
    labeled = config.train.objective in ("discriminative", "hybrid")
    if labeled and data.y is None:
        raise ValueError(f"objective {config.train.objective!r} needs labels, "
                         f"dataset {config.dataset!r} has none")
    X = data.X.astype(np.float64)
    Y = data.y if labeled else None

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    ckpt_path = out_dir / "checkpoint.irbm"

    if config.resume:
        ckpt = load_checkpoint(config.resume)
        if ckpt.seed != config.train.seed:
            raise ValueError(f"checkpoint was trained with seed {ckpt.seed}, "
                             f"config says {config.train.seed}")
        trainer = Trainer(ckpt.params, config.train, n_train=data.n)
        trainer.restore(ckpt.opt, ckpt.regroup, ckpt.chains, ckpt.epochs_done)
        mode = "a"
    else:
        params = zero_model(D=data.D, C=data.n_classes if labeled else 0,
                            beta=config.beta, penalty_mode=config.penalty_mode)
        trainer = Trainer(params, config.train, n_train=data.n)
        mode = "w"

    with open(metrics_path, mode) as metrics:
        if mode == "w":
            print(METRICS_HEADER, file=metrics)
            print(METRICS_COLUMNS, file=metrics)
        while trainer.epochs_done < config.epochs:
            stats = trainer.run_epoch(X, Y)
            m = _epoch_metrics(trainer, X, Y, config)
            print(_metrics_row(stats["epoch"], m["avg_loglik"], m["error"],
                               m["n_h"], m["l_t"], m["m_t"],
                               m["max_log_mass"]), file=metrics)
            metrics.flush()
            loglik_text = ("" if m["avg_loglik"] is None
                           else f" loglik={m['avg_loglik']:.4f}")
            error_text = "" if m["error"] is None else f" err={m['error']:.4f}"
            print(f"epoch {stats['epoch']:4d} l={m['l_t']:4d} M={m['m_t']:4d} "
                  f"N_h={m['n_h']:4d}{loglik_text}{error_text}")
            save_checkpoint(ckpt_path, CheckpointData(
                params=trainer.params, opt=trainer.opt, regroup=trainer.regroup,
                chains=trainer.chains, seed=config.train.seed,
                epochs_done=trainer.epochs_done))
            if config.checkpoint_every and \
                    trainer.epochs_done % config.checkpoint_every == 0:
                save_checkpoint(out_dir / f"checkpoint-{trainer.epochs_done:05d}.irbm",
                                CheckpointData(
                                    params=trainer.params, opt=trainer.opt,
                                    regroup=trainer.regroup, chains=trainer.chains,
                                    seed=config.train.seed,
                                    epochs_done=trainer.epochs_done))
    print(f"done: {trainer.epochs_done} epochs, l={trainer.params.l}, "
          f"checkpoint at {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    data = resolve_dataset(args.dataset, args.split)
    X = data.X.astype(np.float64)
    Y = data.y if (data.y is not None and ckpt.params.has_labels) else None
    rng = stream(args.seed, "eval")
    m_t = ckpt.regroup.M_t if args.perm_length is None else args.perm_length
    report = full_report(ckpt.params, X, Y, n_perms=args.perms, m=m_t, rng=rng,
                         cap=args.exact_cap, ais_temps=args.ais_temps,
                         ais_chains=args.ais_chains)
    extra = {"dataset": args.dataset, "split": args.split, "perm_length": m_t}
    if args.perms > 1 and m_t >= 2:
        single = evaluation.permutation_averaged_loglik(
            ckpt.params, X, 1, stream(args.seed, "eval-single"), m=m_t) \
            if ckpt.params.D <= args.exact_cap else None
        if single is not None:
            extra["single_order_loglik"] = single
            extra["perm_average_gain"] = report.avg_loglik - single
    if args.converted_rbm:
        n_h = report.n_h
        extra["converted_rbm_n_h"] = n_h
        extra["converted_rbm_loglik"] = evaluation.converted_rbm_loglik(
            ckpt.params, X, n_h, cap=args.exact_cap)
    if args.histogram_csv:
        with open(args.histogram_csv, "w") as f:
            print("# irbm-histogram v1", file=f)
            print("z,count", file=f)
            for z in sorted(report.z_m_histogram):
                print(f"{z},{report.z_m_histogram[z]}", file=f)
    text = report.to_json(**extra)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _tile_grid(images: np.ndarray, height: int, width: int) -> np.ndarray:
    n = images.shape[0]
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    sep = 1
    grid = np.full((rows * height + (rows - 1) * sep,
                    cols * width + (cols - 1) * sep), 128, dtype=np.uint8)
    for k in range(n):
        r, c = divmod(k, cols)
        top, left = r * (height + sep), c * (width + sep)
        grid[top:top + height, left:left + width] = images[k].reshape(height, width)
    return grid


def write_pgm(path, image: np.ndarray):
    """Plain binary portable graymap (P5, maxval 255)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
        f.write(image.tobytes())


def _image_shape(D: int) -> tuple[int, int]:
    side = int(round(math.sqrt(D)))
    if side * side == D:
        return side, side
    return 1, D


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    params = ckpt.params
    out_dir = Path(args.out_dir)
    if args.n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    if args.n_samples == 0:
        print("nothing to do: 0 samples requested")
        return 0
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = stream(args.seed, "sample")
    V = (rng.random((args.n_samples, params.D)) < 0.5).astype(np.float64)
    Y = (rng.integers(0, params.C, size=args.n_samples)
         if params.has_labels else None)
    for _ in range(args.steps):
        V, Y, _ = gibbs_sweep(params, V, Y, rng)
    height, width = _image_shape(params.D)
    samples_path = out_dir / "samples.pgm"
    write_pgm(samples_path, _tile_grid((V * 255).astype(np.uint8), height, width))
    w = params.W
    lo, hi = w.min(), w.max()
    scaled = np.zeros_like(w) if hi == lo else (w - lo) / (hi - lo)
    filters_path = out_dir / "filters.pgm"
    write_pgm(filters_path, _tile_grid((scaled * 255).astype(np.uint8),
                                       height, width))
    print(f"wrote {samples_path} and {filters_path} "
          f"({args.n_samples} samples, {args.steps} steps)")
    return 0


def cmd_check(args) -> int:
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        print(f"FAIL checkpoint-integrity: {exc}")
        return 3
    params = ckpt.params
    failures = []

    def report(name, ok, detail=""):
        print(f"{'ok  ' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        if not ok:
            failures.append(name)

    try:
        params.check_finite()
        report("parameters-finite", True)
    except FloatingPointError as exc:
        report("parameters-finite", False, str(exc))

    rng = stream(args.seed, "check")
    probes = (rng.random((16, params.D)) < 0.5).astype(np.float64)
    zp = marginal_z_posterior(params, probes)
    total = zp.head_probs().sum(axis=-1) + zp.tail_prob()
    report("z-posterior-normalization", bool(np.all(np.abs(total - 1) < 1e-10)),
           f"max deviation {np.max(np.abs(total - 1)):.2e}")

    # closed-form tail against an explicitly summed geometric series
    ltr = params.penalty.log_tail_ratio
    explicit = float(np.logaddexp.reduce(ltr * np.arange(1, 10_001)))
    report("analytic-tail", abs(explicit - params.penalty.log_tail_geometric_sum) < 1e-10,
           f"difference {abs(explicit - params.penalty.log_tail_geometric_sum):.2e}")

    if params.D <= args.exact_cap:
        p = evaluation.exact_visible_distribution(params, args.exact_cap)
        report("visible-normalization", abs(float(p.sum()) - 1) < 1e-10,
               f"sum {p.sum():.12f}")
    else:
        print(f"skip visible-normalization (D={params.D} above cap {args.exact_cap})")

    if params.D <= 8 and params.l <= 6:
        probes_small = probes[:4]
        if params.has_labels:
            from .training import grad_discriminative_exact
            y_probe = rng.integers(0, params.C, size=probes_small.shape[0])
            analytic = grad_discriminative_exact(params, probes_small, y_probe)
            fd = _fd_gradient(
                params,
                lambda p: -evaluation.exact_cond_loglik(p, probes_small, y_probe))
        else:
            analytic = evaluation.exact_generative_gradient(params, probes_small)
            fd = _fd_gradient(
                params,
                lambda p: -evaluation.exact_loglik(p, probes_small, args.exact_cap))
        rel = _max_rel_error(analytic, fd)
        report("gradient-finite-differences", rel < 1e-5, f"max rel err {rel:.2e}")
    else:
        print("skip gradient-finite-differences (model too large)")

    if args.dataset:
        data = resolve_dataset(args.dataset, args.split)
        m_t = ckpt.regroup.M_t
        if m_t >= 1 and m_t <= params.l:
            inv = evaluation.check_order_invariance(
                params, data.X.astype(np.float64)[:256], m_t,
                n_perms=args.perms, rng=rng, cap=args.exact_cap)
            detail = (f"max ln p(z<=M|v) = {inv.max_log_mass:.2f}, "
                      f"mean = {inv.mean_log_mass:.2f}")
            if inv.loglik_spread is not None:
                detail += f", loglik spread = {inv.loglik_spread:.3e}"
            print(f"info order-invariance (M={m_t}): {detail}")
        else:
            print("skip order-invariance (no regrouped units recorded)")

    if failures:
        print(f"{len(failures)} check(s) failed: {', '.join(failures)}")
        return 3
    print("all checks passed")
    return 0


def _fd_gradient(params, objective, h=1e-5):
    from .training import Gradients
    g = Gradients.zeros(params)
    for name, arr in g.blocks():
        target = getattr(params, name)
        flat_grad = arr.reshape(-1)
        flat = target.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = objective(params)
            flat[j] = orig - h
            down = objective(params)
            flat[j] = orig
            flat_grad[j] = (up - down) / (2 * h)
    return g


def _max_rel_error(a, b, floor=1e-4):
    # fresh symmetric models have exactly-zero components, where only
    # absolute agreement (against the floor) is meaningful
    worst = 0.0
    for (_, x), (_, y) in zip(a.blocks(), b.blocks()):
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst


def cmd_convert_dataset(args) -> int:
    out = Path(args.out)
    if args.format == "idx":
        if not args.images:
            raise ValueError("--images is required for idx conversion")
        if not 0.0 <= args.valid_fraction < 1.0:
            raise ValueError("--valid-fraction must lie in [0, 1)")
        intensities, labels = load_mnist_idx(args.images, args.labels)
        ds = binarize_stochastic(intensities, seed=args.seed, labels=labels,
                                 n_classes=(int(labels.max()) + 1
                                            if labels is not None else 0),
                                 split=args.split)
        if args.valid_fraction > 0:
            if args.split != "train":
                raise ValueError("--valid-fraction only applies to the train split")
            order = stream(args.seed, "valid-split").permutation(ds.n)
            n_valid = int(round(args.valid_fraction * ds.n))
            vi, ti = order[:n_valid], order[n_valid:]
            write_ibmp(out, {
                "train": Dataset(X=ds.X[ti],
                                 y=None if ds.y is None else ds.y[ti],
                                 n_classes=ds.n_classes, split="train"),
                "valid": Dataset(X=ds.X[vi],
                                 y=None if ds.y is None else ds.y[vi],
                                 n_classes=ds.n_classes, split="valid"),
            })
        else:
            write_ibmp(out, {args.split: ds})
    elif args.format == "npz":
        if not args.npz:
            raise ValueError("--npz is required for npz conversion")
        payload = np.load(args.npz)
        splits = {}
        for split in ("train", "valid", "test"):
            key = f"{split}_x"
            if key not in payload:
                continue
            X = payload[key]
            y = payload.get(f"{split}_y")
            if X.min() < 0 or X.max() > 1:
                raise ValueError(f"{key} must be binary or in [0, 1]")
            if np.array_equal(X, X.astype(np.uint8)):
                bits = X.astype(np.uint8)
            else:
                bits = binarize_stochastic(X.reshape(X.shape[0], -1),
                                           seed=args.seed).X
            n_classes = int(max(int(payload[f"{s}_y"].max()) for s in
                                ("train", "valid", "test")
                                if f"{s}_y" in payload) + 1) if y is not None else 0
            splits[split] = Dataset(X=bits.reshape(bits.shape[0], -1),
                                    y=None if y is None else y.astype(np.int32),
                                    n_classes=n_classes, split=split)
        if not splits:
            raise ValueError("npz holds no train_x/valid_x/test_x arrays")
        write_ibmp(out, splits)
    else:
        raise ValueError(f"unknown conversion format {args.format!r}")
    print(f"wrote {out}")
    return 0


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irbm",
        description="Train and evaluate iRBMs with random-permutation training.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run training epochs")
    t.add_argument("--config", help="key=value configuration file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration key")
    t.add_argument("--dataset", help="ibmp path or bars:/shifted: spec")
    t.add_argument("--out-dir")
    t.add_argument("--epochs", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--split", default="test")
    e.add_argument("--perms", type=int, default=5)
    e.add_argument("--perm-length", type=int, default=None,
                   help="units to permute (default: the checkpoint's M_t)")
    e.add_argument("--converted-rbm", action="store_true")
    e.add_argument("--exact-cap", type=int, default=EXACT_D_CAP)
    e.add_argument("--ais-temps", type=int, default=1000)
    e.add_argument("--ais-chains", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="also write the JSON report here")
    e.add_argument("--histogram-csv", help="write the z_m histogram here")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", help="draw fantasy samples and export images")
    s.add_argument("checkpoint")
    s.add_argument("--steps", type=int, default=10_000)
    s.add_argument("--n-samples", type=int, default=64)
    s.add_argument("--out-dir", default="samples")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("check", help="run structural invariant checks")
    c.add_argument("checkpoint")
    c.add_argument("--dataset", help="optional data for the invariance report")
    c.add_argument("--split", default="train")
    c.add_argument("--perms", type=int, default=5)
    c.add_argument("--exact-cap", type=int, default=EXACT_D_CAP)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("convert-dataset", help="produce a packed-bitmap file")
    v.add_argument("--format", choices=("idx", "npz"), required=True)
    v.add_argument("--images", help="IDX image file")
    v.add_argument("--labels", help="IDX label file")
    v.add_argument("--npz", help="npz with train_x/train_y[/valid_*/test_*]")
    v.add_argument("--split", default="train",
                   help="split name for idx conversion")
    v.add_argument("--valid-fraction", type=float, default=0.0,
                   help="carve a validation split out of the train data")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_convert_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
