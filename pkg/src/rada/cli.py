"""Command-line entry point for reproducible synthetic domain-shift experiments.

Commands: gen, train, ablate, eval, grad-check, oracle-check. Configuration is
a flat INI file (sections [experiment], [gen], [train]); every value has a
default printable with --print-defaults. Exit codes: 0 success, 2 config
error, 3 runtime error.
"""

import argparse
import configparser
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, adversarial, datagen, evaluation, structure, trainer
from .datagen import GenConfig, generate_pair, load_dataset, save_dataset
from .errors import ConfigError
from .structure import StructureDirection
from .trainer import TrainConfig, fit, grad_check, load_checkpoint, save_checkpoint

METHODS = ("source_only", "dann_single", "multiclass_only", "rada")
DIRECTIONS = {"d2y": StructureDirection.D_TO_Y, "y2d": StructureDirection.Y_TO_D}


@dataclass
class ExperimentConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    method: str = "rada"
    out_dir: str = "runs/demo"
    data_dir: str = ""  # defaults to <out_dir>/data
    pad_folds: int = 5

    def resolved_data_dir(self):
        return Path(self.data_dir) if self.data_dir else Path(self.out_dir) / "data"


def default_config_text():
    cfg = ExperimentConfig()
    g, t = cfg.gen, cfg.train
    return f"""[experiment]
method = {cfg.method}
direction = d2y
out_dir = {cfg.out_dir}
data_dir =
pad_folds = {cfg.pad_folds}

[gen]
class_count = {g.class_count}
feature_dim = {g.feature_dim}
per_class = {g.per_class}
seed = {g.seed}
shift_kind = {g.shift_kind}
shift_magnitude = {g.shift_magnitude}
cov_scale = {g.cov_scale}
noise = {g.noise}
pda_subset =
edge_prob = {g.edge_prob}

[train]
epochs = {t.epochs}
batch_size = {t.batch_size}
lr_backbone = {t.lr_backbone}
lr_heads = {t.lr_heads}
momentum = {t.momentum}
weight_decay = {t.weight_decay}
alpha = {t.alpha}
beta = {t.beta}
lambda_adv_base = {t.lambda_adv_base}
lambda_r = {t.lambda_r}
balanced_sampling = {str(t.balanced_sampling).lower()}
detach_target_weights = {str(t.detach_target_weights).lower()}
seed = {t.seed}
eps0 = {t.eps0}
gf_hidden = {t.gf_hidden}
feature_width = {t.feature_width}
gy_hidden = {t.gy_hidden}
gd_hidden = {t.gd_hidden}
"""


def _convert(section, key, raw, kind):
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}"
        ) from None


def parse_config(path):
    """Read an INI experiment config; unknown keys and bad values raise ConfigError."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = ExperimentConfig()
    typed = {
        "gen": cfg.gen,
        "train": cfg.train,
    }
    for section in parser.sections():
        if section == "experiment":
            for key, raw in parser.items(section):
                if key == "method":
                    if raw not in METHODS:
                        raise ConfigError(
                            f"[experiment] method: {raw!r} is not one of {', '.join(METHODS)}"
                        )
                    cfg.method = raw
                elif key == "direction":
                    if raw not in DIRECTIONS:
                        raise ConfigError(
                            f"[experiment] direction: {raw!r} must be d2y or y2d"
                        )
                    cfg.train.direction = DIRECTIONS[raw]
                elif key == "out_dir":
                    cfg.out_dir = raw
                elif key == "data_dir":
                    cfg.data_dir = raw
                elif key == "pad_folds":
                    cfg.pad_folds = _convert(section, key, raw, int)
                else:
                    raise ConfigError(f"[experiment] unknown key {key!r}")
        elif section in typed:
            target = typed[section]
            for key, raw in parser.items(section):
                if not hasattr(target, key):
                    raise ConfigError(f"[{section}] unknown key {key!r}")
                current = getattr(target, key)
                if key == "pda_subset":
                    value = (
                        tuple(int(v) for v in raw.replace(",", " ").split())
                        if raw.strip()
                        else None
                    )
                elif key == "shift_kind":
                    value = raw
                elif isinstance(current, bool):
                    value = _convert(section, key, raw, bool)
                elif isinstance(current, int):
                    value = _convert(section, key, raw, int)
                elif isinstance(current, float):
                    value = _convert(section, key, raw, float)
                else:
                    value = raw
                setattr(target, key, value)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    try:
        cfg.gen.validate()
        cfg.train.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


class Manifest:
    """Run manifest written before results; updated with duration at completion."""

    def __init__(self, out_dir, config_snapshot, seed, outputs):
        self.path = Path(out_dir) / "manifest.json"
        self.data = {
            "version": __version__,
            "seed": seed,
            "config": config_snapshot,
            "outputs": outputs,
            "duration_s": None,
        }
        self.start = time.monotonic()
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def finish(self):
        self.data["duration_s"] = time.monotonic() - self.start
        missing = [
            o for o in self.data["outputs"] if not (self.path.parent / o).exists()
        ]
        if missing:
            raise RuntimeError(f"manifest lists missing outputs: {missing}")
        self.write()


def _config_snapshot(cfg):
    snap = {
        "method": cfg.method,
        "out_dir": cfg.out_dir,
        "data_dir": str(cfg.resolved_data_dir()),
        "pad_folds": cfg.pad_folds,
        "gen": {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in vars(cfg.gen).items()},
        "train": cfg.train.to_dict(),
    }
    return snap


def method_settings(method, direction, train_cfg, class_count):
    """Map a method name onto (lambda_adv_base, lambda_r, branches, direction)."""
    if method == "source_only":
        return 0.0, 0.0, class_count, direction
    if method == "dann_single":
        return train_cfg.lambda_adv_base, 0.0, 1, direction
    if method == "multiclass_only":
        return train_cfg.lambda_adv_base, 0.0, class_count, direction
    if method == "rada":
        return train_cfg.lambda_adv_base, train_cfg.lambda_r, class_count, direction
    raise ConfigError(f"method {method!r} is not one of {', '.join(METHODS)}")


def build_model_for(cfg, method, feature_dim, class_count, seed):
    _, _, branches, _ = method_settings(method, cfg.train.direction, cfg.train, class_count)
    rng = np.random.default_rng(seed)
    return adversarial.build_model(
        feature_dim,
        class_count,
        rng,
        gf_hidden=cfg.train.gf_hidden,
        feature_width=cfg.train.feature_width,
        gy_hidden=cfg.train.gy_hidden,
        gd_hidden=cfg.train.gd_hidden,
        branches=branches,
    )


def run_method(cfg, method, source, target, seed):
    """Train one method arm; returns (model, report)."""
    lam_base, lam_r, _, direction = method_settings(
        method, cfg.train.direction, cfg.train, source.class_count
    )
    run_cfg = TrainConfig.from_dict(cfg.train.to_dict())
    run_cfg.lambda_adv_base = lam_base
    run_cfg.lambda_r = lam_r
    run_cfg.direction = direction
    run_cfg.seed = seed
    model = build_model_for(cfg, method, source.feature_dim, source.class_count, seed)
    return fit(model, source, target, run_cfg), run_cfg


def cmd_gen(args):
    cfg = parse_config(args.config)
    out = Path(args.out) if args.out else cfg.resolved_data_dir()
    out.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        cfg.gen.seed = args.seed
    outputs = ["source.txt", "target.txt", "ground_truth_precision.csv"]
    manifest = Manifest(out, _config_snapshot(cfg), cfg.gen.seed, outputs)
    source, target, omega_star = generate_pair(cfg.gen)
    save_dataset(source, out / "source.txt")
    save_dataset(target, out / "target.txt")
    evaluation.write_matrix_csv(omega_star, out / "ground_truth_precision.csv")
    manifest.finish()
    print(f"wrote {len(outputs)} files to {out}")
    return 0


def _load_pair(cfg):
    data = cfg.resolved_data_dir()
    src_path, tgt_path = data / "source.txt", data / "target.txt"
    if not src_path.exists() or not tgt_path.exists():
        raise FileNotFoundError(f"datasets not found under {data}; run `gen` first")
    return load_dataset(src_path), load_dataset(tgt_path)


def _write_train_outputs(out, model, report, source, target, cfg, run_cfg, epoch_offset=0):
    save_checkpoint(model, run_cfg, out / "checkpoint.npz")
    for rec in report.records:
        rec.epoch += epoch_offset
    curves = out / "curves.csv"
    if epoch_offset and curves.exists():
        old = curves.read_text().rstrip("\n").splitlines()
        evaluation.write_curves_csv(report, curves)
        new_rows = curves.read_text().rstrip("\n").splitlines()[1:]
        curves.write_text("\n".join(old + new_rows) + "\n")
    else:
        evaluation.write_curves_csv(report, curves)
    metrics = {
        "source_accuracy": evaluation.accuracy(model, source),
    }
    if target.labels is not None:
        metrics["target_accuracy"] = evaluation.accuracy(model, target)
    pad = evaluation.proxy_a_distance(
        adversarial.extract_features(model, source.features),
        adversarial.extract_features(model, target.features),
        folds=cfg.pad_folds,
    )
    metrics["pad_epsilon"] = pad.epsilon
    metrics["pad_d_a"] = pad.d_a
    if model.branches == model.class_count:
        rep = evaluation.structure_report(model, cfg.train.eps0)
        metrics["kl_d_to_y"] = rep.kl_d_to_y
        metrics["kl_y_to_d"] = rep.kl_y_to_d
        evaluation.write_heatmap_csv(rep, out / "partial_correlations.csv")
    evaluation.write_confusion_csv(
        evaluation.confusion(model, source), out / "confusion_source.csv"
    )
    if target.labels is not None:
        evaluation.write_confusion_csv(
            evaluation.confusion(model, target), out / "confusion_target.csv"
        )
    lines = [f"{k},{v:.17g}" for k, v in metrics.items()]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")


def cmd_train(args):
    cfg = parse_config(args.config)
    if args.method:
        if args.method not in METHODS:
            raise ConfigError(
                f"method {args.method!r} is not one of {', '.join(METHODS)}"
            )
        cfg.method = args.method
    if args.direction:
        cfg.train.direction = DIRECTIONS[args.direction]
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source, target = _load_pair(cfg)

    outputs = ["checkpoint.npz", "curves.csv", "metrics.csv", "confusion_source.csv"]
    if target.labels is not None:
        outputs.append("confusion_target.csv")
    branches_match = cfg.method != "dann_single"
    if branches_match:
        outputs.append("partial_correlations.csv")
    manifest = Manifest(out, _config_snapshot(cfg), cfg.train.seed, outputs)

    epoch_offset = 0
    if args.resume and (out / "checkpoint.npz").exists():
        model, run_cfg = load_checkpoint(out / "checkpoint.npz")
        run_cfg.epochs = cfg.train.epochs
        trained, report = fit(model, source, target, run_cfg)
        if (out / "curves.csv").exists():
            epoch_offset = len((out / "curves.csv").read_text().rstrip("\n").splitlines()) - 1
    else:
        (trained, report), run_cfg = run_method(
            cfg, cfg.method, source, target, cfg.train.seed
        )
    _write_train_outputs(out, trained, report, source, target, cfg, run_cfg, epoch_offset)
    manifest.finish()
    final = report.final
    if final is not None:
        tgt = "" if final.target_accuracy is None else f", target acc {final.target_accuracy:.3f}"
        print(f"trained {cfg.method}: source acc {final.source_accuracy:.3f}{tgt}")
    return 0


ABLATION_ARMS = (
    ("source_only", "d2y"),
    ("dann_single", "d2y"),
    ("multiclass_only", "d2y"),
    ("rada", "d2y"),
    ("rada", "y2d"),
)


def _arm_name(method, direction):
    return f"rada_{direction}" if method == "rada" else method


def run_ablation(cfg, seeds):
    """Run every ablation arm on every seed; per-run failures are recorded, not fatal."""
    rows = []
    for seed in seeds:
        gen_cfg = GenConfig(**{**vars(cfg.gen), "seed": seed})
        source, target, _ = generate_pair(gen_cfg)
        for method, dirname in ABLATION_ARMS:
            arm = _arm_name(method, dirname)
            row = {"method": arm, "seed": seed, "error": ""}
            try:
                arm_cfg = ExperimentConfig(
                    gen=gen_cfg,
                    train=TrainConfig.from_dict(cfg.train.to_dict()),
                    method=method,
                    out_dir=cfg.out_dir,
                    pad_folds=cfg.pad_folds,
                )
                arm_cfg.train.direction = DIRECTIONS[dirname]
                (model, report), _ = run_method(arm_cfg, method, source, target, seed)
                row["target_accuracy"] = evaluation.accuracy(model, target)
                pad = evaluation.proxy_a_distance(
                    adversarial.extract_features(model, source.features),
                    adversarial.extract_features(model, target.features),
                    folds=cfg.pad_folds,
                )
                row["pad_d_a"] = pad.d_a
                if model.branches == model.class_count:
                    rep = evaluation.structure_report(model, cfg.train.eps0)
                    row["kl_d_to_y"] = rep.kl_d_to_y
                    row["kl_y_to_d"] = rep.kl_y_to_d
            except Exception as exc:  # per-run failures go into the table
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def summarize_ablation(rows):
    """Mean/sd target accuracy plus mean diagnostics per method, sorted by method."""
    methods = sorted({r["method"] for r in rows})
    summary = []
    for m in methods:
        ok = [r for r in rows if r["method"] == m and not r["error"]]
        accs = np.array([r["target_accuracy"] for r in ok]) if ok else np.array([])
        entry = {
            "method": m,
            "runs": len([r for r in rows if r["method"] == m]),
            "failures": len([r for r in rows if r["method"] == m and r["error"]]),
            "mean_target_accuracy": float(accs.mean()) if accs.size else float("nan"),
            "sd_target_accuracy": float(accs.std(ddof=0)) if accs.size else float("nan"),
        }
        for key in ("pad_d_a", "kl_d_to_y", "kl_y_to_d"):
            vals = [r[key] for r in ok if key in r]
            entry[f"mean_{key}"] = float(np.mean(vals)) if vals else float("nan")
        summary.append(entry)
    return summary


def _write_rows_csv(rows, columns, path):
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c, "")
            if isinstance(v, float):
                cells.append(f"{v:.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_ablate(args):
    cfg = parse_config(args.config)
    seeds = [int(s) for s in args.seeds.replace(",", " ").split()]
    if len(seeds) < 3:
        raise ConfigError(f"ablation needs at least 3 seeds, got {len(seeds)}")
    if args.out:
        cfg.out_dir = args.out
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = ["ablation.csv", "ablation_runs.csv"]
    manifest = Manifest(out, _config_snapshot(cfg), seeds[0], outputs)
    rows = run_ablation(cfg, seeds)
    rows.sort(key=lambda r: (r["method"], r["seed"]))
    _write_rows_csv(
        rows,
        ("method", "seed", "target_accuracy", "pad_d_a", "kl_d_to_y", "kl_y_to_d", "error"),
        out / "ablation_runs.csv",
    )
    summary = summarize_ablation(rows)
    _write_rows_csv(
        summary,
        ("method", "runs", "failures", "mean_target_accuracy", "sd_target_accuracy",
         "mean_pad_d_a", "mean_kl_d_to_y", "mean_kl_y_to_d"),
        out / "ablation.csv",
    )
    manifest.finish()
    for entry in summary:
        print(
            f"{entry['method']}: target acc "
            f"{entry['mean_target_accuracy']:.3f} +/- {entry['sd_target_accuracy']:.3f}"
        )
    return 0


def cmd_eval(args):
    cfg = parse_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    out = Path(cfg.out_dir)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model, run_cfg = load_checkpoint(ckpt)
    source, target = _load_pair(cfg)
    out.mkdir(parents=True, exist_ok=True)
    report = trainer.TrainReport()
    _write_train_outputs(out, model, report, source, target, cfg, run_cfg)
    print((out / "metrics.csv").read_text().rstrip("\n"))
    return 0


def cmd_grad_check(args):
    cfg = parse_config(args.config)
    seed = cfg.train.seed if args.seed is None else args.seed
    gen_cfg = GenConfig(**{**vars(cfg.gen), "seed": seed})
    source, target, _ = generate_pair(gen_cfg)
    model = build_model_for(cfg, cfg.method, source.feature_dim, source.class_count, seed)
    run_cfg = TrainConfig.from_dict(cfg.train.to_dict())
    run_cfg.seed = seed
    errors = grad_check(
        model,
        (source.features[:6], source.labels[:6]),
        target.features[:6],
        run_cfg,
        h=1e-5,
    )
    worst = max(errors.values())
    for name, err in errors.items():
        print(f"{name}: max relative error {err:.3e}")
    print(f"worst: {worst:.3e} ({'ok' if worst <= 1e-4 else 'above 1e-4'})")
    return 0


def cmd_oracle_check(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    worst = 0.0
    for i in range(args.draws):
        k = int(rng.integers(3, 7))
        d = int(rng.integers(k + 2, 17))
        w = rng.standard_normal((d, k))
        closed = structure.precision_from_weights(w)
        oracle = structure.precision_oracle(w)
        rel = float(
            np.linalg.norm(closed.omega - oracle.omega) / np.linalg.norm(oracle.omega)
        )
        worst = max(worst, rel)
        print(f"draw {i}: d={d} K={k} relative difference {rel:.3e}")
    print(f"worst relative difference over {args.draws} draws: {worst:.3e}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rada",
        description="Relationship-aware adversarial domain adaptation experiments.",
    )
    parser.add_argument(
        "--print-defaults", action="store_true", help="print the default config and exit"
    )
    sub = parser.add_subparsers(dest="command")

    def add(name, func, **flags):
        p = sub.add_parser(name)
        p.set_defaults(func=func)
        p.add_argument("--config", required=flags.get("config_required", True))
        if flags.get("seed", True):
            p.add_argument("--seed", type=int, default=None)
        if flags.get("out", True):
            p.add_argument("--out", default=None)
        return p

    add("gen", cmd_gen)
    p_train = add("train", cmd_train)
    p_train.add_argument("--method", default=None)
    p_train.add_argument("--direction", choices=sorted(DIRECTIONS), default=None)
    p_train.add_argument("--resume", action="store_true")
    p_ablate = add("ablate", cmd_ablate)
    p_ablate.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_eval = add("eval", cmd_eval)
    p_eval.add_argument("--checkpoint", default=None)
    add("grad-check", cmd_grad_check, out=False)
    p_oracle = sub.add_parser("oracle-check")
    p_oracle.set_defaults(func=cmd_oracle_check)
    p_oracle.add_argument("--seed", type=int, default=None)
    p_oracle.add_argument("--draws", type=int, default=10)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(default_config_text(), end="")
        return 0
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
