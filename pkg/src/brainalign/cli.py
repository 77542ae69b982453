"""Command-line entry point.

Verbs: synth, train, extract, rdm, rsa, sweep, filters, report. Each runs
independently on intermediate artifacts so desk-scale partial runs are
cheap; `report` executes the whole pipeline from a config file.

Exit codes: 0 success, 2 configuration error, 3 data error. Flags given
on the command line override values from --config.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import stats
from .data import (
    SynthSpec,
    load_brain_rdm_dir,
    load_stimulus_dir,
    read_cifar10_binary,
    write_rdm_csv,
    write_synth_dataset,
)
from .errors import ConfigurationError, DataFormatError, TrainingDivergedError
from .filters import summarize_filters, write_filter_grid_csv, write_filter_scores_csv
from .network import TAPS, extract_all_taps, load_checkpoint, save_checkpoint
from .pipeline import (
    ExperimentConfig,
    best_layer_sweep,
    load_features_dir,
    run_experiment,
    _write_csv,
)
from .rdm import rdm_from_features, upper_triangle
from .rules import train as train_rule

log = logging.getLogger(__name__)


def _load_config(args) -> ExperimentConfig:
    cfg = (ExperimentConfig.from_file(args.config) if getattr(args, "config", None)
           else ExperimentConfig())
    overrides = {}
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "seeds", None):
        overrides["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if getattr(args, "rules", None):
        overrides["rules"] = tuple(args.rules.split(","))
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "resolution", None) is not None:
        overrides["resolution"] = args.resolution
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        num_train=args.train, num_test=args.test, num_classes=args.classes,
        num_stimuli=args.stimuli, stimulus_size=args.stim_size,
        extraction_resolution=args.resolution, noise_amplitude=args.noise,
        channels=tuple(int(c) for c in args.channels.split(",")),
    )
    paths = write_synth_dataset(spec, args.seed, args.out)
    cfg = ExperimentConfig(
        train_data=(str(paths["train"]),), test_data=(str(paths["test"]),),
        stimuli_dir=str(paths["stimuli"]), brain_rdm_dir=str(paths["brain"]),
        out_dir=str(Path(args.out) / "run"), resolution=args.resolution,
        channels=spec.channels, num_classes=args.classes,
        train_limit=args.train,
    )
    cfg.to_file(Path(args.out) / "synth.cfg")
    print(f"synthetic dataset written under {args.out} (config: synth.cfg)")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = read_cifar10_binary(list(cfg.train_data), limit=cfg.train_limit)
    rule_cfg = cfg.rule_config(args.rule)
    state = train_rule(rule_cfg, dataset, args.seed,
                       metrics_path=args.metrics, channels=cfg.channels,
                       num_classes=cfg.num_classes)
    ckpt = args.ckpt or f"{args.rule}_seed{args.seed}.ckpt"
    save_checkpoint(state, ckpt, rule=args.rule)
    print(f"checkpoint written to {ckpt}")
    return 0


def _cmd_extract(args) -> int:
    state, rule = load_checkpoint(args.ckpt)
    stimuli = load_stimulus_dir(args.stimuli, resolution=args.resolution)
    feats = extract_all_taps(state, stimuli)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tap, feat in feats.items():
        np.save(out / f"features_{tap}.npy", feat.matrix)
    (out / "stimulus_ids.txt").write_text("\n".join(stimuli.ids) + "\n")
    print(f"features for rule {rule!r} written to {out}")
    return 0


def _cmd_rdm(args) -> int:
    feats, ids = load_features_dir(args.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tap, feat in feats.items():
        write_rdm_csv(rdm_from_features(feat.matrix, ids), out / f"{tap}.csv")
    print(f"RDMs written to {out}")
    return 0


def _load_model_rdms(path):
    path = Path(path)
    if path.is_dir():
        return {p.stem: read_model_rdm(p) for p in sorted(path.glob("*.csv"))}
    return {path.stem: read_model_rdm(path)}


def read_model_rdm(path):
    # model RDM CSVs share the brain format but carry no subject/ROI stem,
    # so parse the matrix part only
    from .rdm import RDM
    lines = Path(path).read_text().splitlines()
    ids = tuple(h.strip() for h in lines[0].split(",")[1:])
    values = np.array([[float(c) for c in line.split(",")[1:]] for line in lines[1:]])
    return RDM(values=(values + values.T) / 2.0, ids=ids)


def _cmd_rsa(args) -> int:
    cfg = _load_config(args)
    models = _load_model_rdms(args.model_rdm)
    brain = load_brain_rdm_dir(args.brain_dir)
    by_roi: dict[str, list] = {}
    for b in brain:
        by_roi.setdefault(b.roi, []).append(b.rdm)
    rows = []
    from .rdm import average_rdms
    for name, model in sorted(models.items()):
        vec = upper_triangle(model)
        for roi in sorted(by_roi):
            mean_vec = upper_triangle(average_rdms(by_roi[roi]))
            res = stats.compute_rsa(vec, mean_vec, n_boot=cfg.n_boot,
                                    level=cfg.ci_level, seed=cfg.stats_seed)
            rows.append([name, roi, res.rho, res.ci_low, res.ci_high, res.n_pairs])
    _write_csv(args.out, ["model", "roi", "rho", "ci_low", "ci_high", "n_pairs"], rows)
    print(f"RSA table written to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    models = _load_model_rdms(args.rdm_dir)
    unknown = [t for t in models if t not in TAPS]
    if unknown:
        raise ConfigurationError(
            f"RDM files must be named <tap>.csv with tap in {TAPS}; got {unknown}")
    brain = load_brain_rdm_dir(args.brain_dir)
    from .rdm import average_rdms
    by_roi: dict[str, list] = {}
    for b in brain:
        by_roi.setdefault(b.roi, []).append(b.rdm)
    mean_brain = {roi: average_rdms(v) for roi, v in by_roi.items()}
    sweep = best_layer_sweep(models, mean_brain)
    rows = [[tap] + [float(v) for v in sweep.matrix[i]]
            for i, tap in enumerate(sweep.taps)]
    rows.append(["best"] + [sweep.best_tap[r] for r in sweep.rois])
    _write_csv(args.out, ["tap"] + list(sweep.rois), rows)
    print(f"sweep matrix written to {args.out}")
    return 0


def _cmd_filters(args) -> int:
    state, rule = load_checkpoint(args.ckpt)
    summary = summarize_filters(state, rule=rule or "unknown")
    write_filter_scores_csv(summary, args.out_scores)
    write_filter_grid_csv(summary, args.out_grid)
    print(f"filter scores -> {args.out_scores}, grid -> {args.out_grid}")
    return 0


def _cmd_report(args) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg)
    n_fail = len(report["failures"])
    print(f"run complete: {cfg.out_dir} ({n_fail} failed cells)"
          if n_fail else f"run complete: {cfg.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brainalign",
                                description="Learning-rule comparison pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("synth", help="generate a synthetic desk-scale dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train", type=int, default=512)
    s.add_argument("--test", type=int, default=128)
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--stimuli", type=int, default=100)
    s.add_argument("--stim-size", type=int, default=64)
    s.add_argument("--resolution", type=int, default=32)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--channels", default="32,64,128")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("train", help="train one rule x seed cell")
    s.add_argument("--config")
    s.add_argument("--rule", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--epochs", type=int)
    s.add_argument("--ckpt", help="checkpoint output path")
    s.add_argument("--metrics", help="per-epoch metrics CSV path")
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("extract", help="extract tap features from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--stimuli", required=True)
    s.add_argument("--resolution", type=int, default=224)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_extract)

    s = sub.add_parser("rdm", help="build RDM CSVs from extracted features")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_rdm)

    s = sub.add_parser("rsa", help="score model RDMs against brain RDMs")
    s.add_argument("--config")
    s.add_argument("--model-rdm", required=True, help="RDM CSV or directory")
    s.add_argument("--brain-dir", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_rsa)

    s = sub.add_parser("sweep", help="all-tap x all-ROI Spearman matrix")
    s.add_argument("--rdm-dir", required=True, help="directory of <tap>.csv model RDMs")
    s.add_argument("--brain-dir", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("filters", help="conv1 peakedness scores and filter grid")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--out-scores", required=True)
    s.add_argument("--out-grid", required=True)
    s.set_defaults(func=_cmd_filters)

    s = sub.add_parser("report", help="run the full experiment from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override the run directory")
    s.add_argument("--seeds", help="override seeds, e.g. 0,1")
    s.add_argument("--rules", help="override rules, e.g. random,bp")
    s.add_argument("--epochs", type=int)
    s.add_argument("--resolution", type=int)
    s.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError, TrainingDivergedError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
