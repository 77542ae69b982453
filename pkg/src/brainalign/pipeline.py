"""Config-driven experiment orchestration.

run_experiment covers train -> checkpoint -> extract -> RDM -> RSA ->
statistics -> report for every (rule, seed) cell, then writes one run
directory containing checkpoints, per-epoch metrics, features, RDMs,
result tables (CSV), a JSON report, and a manifest. Reruns with the same
config produce byte-identical outputs.

Aggregation follows two routes on purpose: headline scores are per-seed
RSA then averaged (with the seed std reported), while bootstrap CIs,
permutation tests, per-subject scores, sweeps and partial RSA all use the
seed-averaged model RDM. Permutation tests at one ROI share a null
stream, so every pair at that ROI sees the same permutations.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import zlib
from dataclasses import dataclass, fields
from itertools import combinations
from pathlib import Path

import numpy as np

from . import stats
from .data import (
    ROIS,
    BrainRdmFile,
    load_brain_rdm_dir,
    load_stimulus_dir,
    read_cifar10_binary,
    write_rdm_csv,
)
from .errors import ConfigurationError, DataFormatError
from .filters import summarize_filters, write_filter_grid_csv, write_filter_scores_csv
from .network import (
    DEFAULT_CHANNELS,
    TAPS,
    LayerFeatures,
    extract_all_taps,
    load_checkpoint,
    save_checkpoint,
)
from .rdm import RDM, average_rdms, pixel_rdm, rdm_from_features, upper_triangle
from .rules import RULES, LearningRuleConfig, evaluate_accuracy, train

log = logging.getLogger(__name__)

DEFAULT_ROI_MAP = (("V1", "conv1"), ("V2", "conv1"), ("LOC", "conv3"), ("IT", "fc1"))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs. Round-trips losslessly through the flat
    sectioned key=value file format (see to_text/from_text)."""

    # data
    train_data: tuple[str, ...] = ()
    test_data: tuple[str, ...] = ()
    stimuli_dir: str = ""
    brain_rdm_dir: str = ""
    out_dir: str = "run"
    # experiment
    rules: tuple[str, ...] = RULES
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    epochs: int = 40
    batch_size: int = 64
    train_limit: int = 8000
    resolution: int = 224
    # network
    channels: tuple[int, int, int] = DEFAULT_CHANNELS
    num_classes: int = 10
    # learning-rule hyperparameters
    lr: float = 0.01
    pc_t_inf: int = 10
    pc_alpha: float = 0.02
    pc_eta_w: float = 1e-4
    stdp_t: int = 10
    stdp_tau_plus_ms: float = 20.0
    stdp_tau_minus_ms: float = 20.0
    stdp_a_plus: float = 0.003
    stdp_a_minus: float = 0.003
    stdp_lr: float = 5e-4
    stdp_timestep_ms: float = 2.0
    # layer-to-ROI mapping
    roi_map: tuple[tuple[str, str], ...] = DEFAULT_ROI_MAP
    # statistics
    n_boot: int = 10000
    n_perm: int = 1000
    alpha: float = 0.05
    ci_level: float = 0.95
    stats_seed: int = 0
    noise_ceiling_splits: int = 100

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if len(set(self.rules)) != len(self.rules):
            raise ConfigurationError(f"duplicate rules in {self.rules}")
        for r in self.rules:
            if r not in RULES:
                raise ConfigurationError(f"unknown rule {r!r}; known rules: {RULES}")
        for roi, tap in self.roi_map:
            if tap not in TAPS:
                raise ConfigurationError(f"ROI map {roi}->{tap!r}: unknown tap; taps: {TAPS}")
            if roi not in ROIS:
                raise ConfigurationError(f"unknown ROI {roi!r}; known ROIs: {ROIS}")
        if not 0 < self.alpha < 1 or not 0 < self.ci_level < 1:
            raise ConfigurationError(
                f"alpha/ci_level must be in (0,1), got {self.alpha}/{self.ci_level}")

    @property
    def roi_map_dict(self) -> dict[str, str]:
        return dict(self.roi_map)

    def rule_config(self, rule: str) -> LearningRuleConfig:
        return LearningRuleConfig(
            rule=rule, epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            pc_t_inf=self.pc_t_inf, pc_alpha=self.pc_alpha, pc_eta_w=self.pc_eta_w,
            stdp_t=self.stdp_t, stdp_tau_plus_ms=self.stdp_tau_plus_ms,
            stdp_tau_minus_ms=self.stdp_tau_minus_ms, stdp_a_plus=self.stdp_a_plus,
            stdp_a_minus=self.stdp_a_minus, stdp_lr=self.stdp_lr,
            stdp_timestep_ms=self.stdp_timestep_ms)

    # -- serialization ------------------------------------------------------

    _SECTIONS = {
        "data": ("train_data", "test_data", "stimuli_dir", "brain_rdm_dir", "out_dir"),
        "experiment": ("rules", "seeds", "epochs", "batch_size", "train_limit", "resolution"),
        "network": ("channels", "num_classes"),
        "rule_params": ("lr", "pc_t_inf", "pc_alpha", "pc_eta_w", "stdp_t",
                        "stdp_tau_plus_ms", "stdp_tau_minus_ms", "stdp_a_plus",
                        "stdp_a_minus", "stdp_lr", "stdp_timestep_ms"),
        "stats": ("n_boot", "n_perm", "alpha", "ci_level", "stats_seed",
                  "noise_ceiling_splits"),
    }

    def to_text(self) -> str:
        def fmt(v):
            if isinstance(v, tuple):
                return ",".join(str(x) for x in v)
            if isinstance(v, float):
                return repr(v)
            return str(v)

        parser = configparser.ConfigParser()
        for section, keys in self._SECTIONS.items():
            parser[section] = {k: fmt(getattr(self, k)) for k in keys}
        parser["roi_map"] = {roi: tap for roi, tap in self.roi_map}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def to_file(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.read_string(text)
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for section in parser.sections():
            if section == "roi_map":
                # configparser lowercases keys; ROI names are canonically upper
                kwargs["roi_map"] = tuple(
                    (roi.upper(), tap) for roi, tap in parser.items(section))
                continue
            if section not in cls._SECTIONS:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in cls._SECTIONS[section]:
                    raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
                kwargs[key] = _parse_field(key, raw, types[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from None
        return cls.from_text(text)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _parse_field(key, raw, ftype):
    raw = raw.strip()
    try:
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
        if key in ("seeds",):
            return tuple(int(x) for x in raw.split(",") if x.strip() != "")
        if key in ("channels",):
            vals = tuple(int(x) for x in raw.split(","))
            return vals
        # string tuples (paths, rules)
        if key in ("train_data", "test_data", "rules"):
            return tuple(x.strip() for x in raw.split(",") if x.strip() != "")
        return raw
    except ValueError as e:
        raise ConfigurationError(f"config key {key!r}: {e}") from None


def _derived_seed(stats_seed: int, purpose: str) -> int:
    return zlib.crc32(f"{stats_seed}|{purpose}".encode("utf-8"))


# ---------------------------------------------------------------------------
# Standalone analyses
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    taps: tuple[str, ...]
    rois: tuple[str, ...]
    matrix: np.ndarray          # [len(taps), len(rois)] Spearman rho
    best_tap: dict              # roi -> tap with the highest rho


def best_layer_sweep(model_by_tap, brain_by_roi) -> SweepResult:
    """Spearman rho for every tap x ROI combination plus the argmax tap per
    ROI. `model_by_tap` maps tap -> RDM or LayerFeatures; `brain_by_roi`
    maps ROI -> RDM."""
    taps = tuple(t for t in TAPS if t in model_by_tap)
    rois = tuple(r for r in ROIS if r in brain_by_roi)
    brain_vecs = {r: upper_triangle(brain_by_roi[r]) for r in rois}
    matrix = np.empty((len(taps), len(rois)))
    for i, tap in enumerate(taps):
        model = model_by_tap[tap]
        if isinstance(model, LayerFeatures):
            ids = brain_by_roi[rois[0]].ids if rois else None
            model = rdm_from_features(model.matrix, ids)
        vec = upper_triangle(model)
        for j, roi in enumerate(rois):
            matrix[i, j] = stats.spearman(vec, brain_vecs[roi])
    best = {roi: taps[int(np.argmax(matrix[:, j]))] for j, roi in enumerate(rois)}
    return SweepResult(taps=taps, rois=rois, matrix=matrix, best_tap=best)


def per_subject_analysis(model_rdms, brain_files, roi_map) -> list[dict]:
    """RSA of each condition against each subject's RDM separately.

    `model_rdms` maps condition -> {tap: RDM}; returns rows of
    {condition, subject, roi, rho}, ordered by (condition, roi, subject).
    Missing subject x ROI data simply yields no row (the caller flags gaps).
    """
    rows = []
    by_roi: dict[str, list[BrainRdmFile]] = {}
    for b in brain_files:
        by_roi.setdefault(b.roi, []).append(b)
    for condition, rdms in model_rdms.items():
        for roi, tap in roi_map.items():
            if roi not in by_roi or tap not in rdms:
                continue
            vec = upper_triangle(rdms[tap])
            for b in sorted(by_roi[roi], key=lambda b: b.subject):
                rows.append({
                    "condition": condition, "subject": b.subject, "roi": roi,
                    "rho": stats.spearman(vec, upper_triangle(b.rdm)),
                })
    return rows


def partial_rsa_report(model_rdms, brain_by_roi, stimuli, roi_map) -> dict[str, list[dict]]:
    """Standard vs partial RSA per ROI with the pixel RDM as control.

    `model_rdms` maps condition -> {tap: RDM} built from seed-averaged
    features. Returns {roi: [{condition, rho_std, rho_partial, delta,
    degenerate}]}.
    """
    control = upper_triangle(pixel_rdm(stimuli))
    out: dict[str, list[dict]] = {}
    for roi, tap in roi_map.items():
        if roi not in brain_by_roi:
            continue
        brain_vec = upper_triangle(brain_by_roi[roi])
        rows = []
        for condition, rdms in model_rdms.items():
            if tap not in rdms:
                continue
            vec = upper_triangle(rdms[tap])
            rho_std = stats.spearman(vec, brain_vec)
            partial = stats.partial_spearman(vec, brain_vec, control)
            rows.append({
                "condition": condition,
                "rho_std": rho_std,
                "rho_partial": partial.rho,
                "delta": partial.rho - rho_std,
                "degenerate": partial.degenerate,
            })
        out[roi] = rows
    return out


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def _save_features(features: dict[str, LayerFeatures], ids, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for tap, feat in features.items():
        np.save(out_dir / f"features_{tap}.npy", feat.matrix)
    (out_dir / "stimulus_ids.txt").write_text("\n".join(ids) + "\n")


def load_features_dir(directory) -> tuple[dict[str, LayerFeatures], tuple[str, ...]]:
    directory = Path(directory)
    ids_path = directory / "stimulus_ids.txt"
    if not ids_path.exists():
        raise DataFormatError(f"{directory}: missing stimulus_ids.txt")
    ids = tuple(ids_path.read_text().splitlines())
    feats = {}
    for tap in TAPS:
        p = directory / f"features_{tap}.npy"
        if p.exists():
            feats[tap] = LayerFeatures(tap=tap, matrix=np.load(p))
    if not feats:
        raise DataFormatError(f"{directory}: no features_<tap>.npy files")
    return feats, ids


def _group_brain(brain_files, stimuli_ids) -> dict[str, list[BrainRdmFile]]:
    by_roi: dict[str, list[BrainRdmFile]] = {}
    for b in brain_files:
        if b.rdm.ids != tuple(stimuli_ids):
            raise DataFormatError(
                f"brain RDM {b.subject}/{b.roi} stimulus ids do not match the "
                f"stimulus set ordering")
        by_roi.setdefault(b.roi, []).append(b)
    for roi in by_roi:
        by_roi[roi].sort(key=lambda b: b.subject)
    return by_roi


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute the full pipeline for every (rule, seed) cell and write the
    run directory. Returns the report dict (also written as report.json).

    A failing cell is flagged in the report and the run continues.
    """
    out = Path(config.out_dir)
    for sub in ("checkpoints", "metrics", "features", "rdms", "tables"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    train_set = read_cifar10_binary(list(config.train_data), limit=config.train_limit)
    test_set = (read_cifar10_binary(list(config.test_data))
                if config.test_data else None)
    stimuli = load_stimulus_dir(config.stimuli_dir, resolution=config.resolution)
    brain_files = load_brain_rdm_dir(config.brain_rdm_dir)
    by_roi = _group_brain(brain_files, stimuli.ids)
    roi_map = {roi: tap for roi, tap in config.roi_map if roi in by_roi}
    for roi in config.roi_map_dict:
        if roi not in by_roi:
            log.warning("no brain RDMs for ROI %s; skipping it", roi)

    mean_brain = {roi: average_rdms([b.rdm for b in files])
                  for roi, files in by_roi.items()}

    failures: list[dict] = []
    seed_rdms: dict[str, dict[int, dict[str, RDM]]] = {r: {} for r in config.rules}
    accuracy: dict[str, dict[int, float]] = {r: {} for r in config.rules}
    states_path: dict[str, Path] = {}

    for rule in config.rules:
        for seed in config.seeds:
            cell = f"{rule}_seed{seed}"
            try:
                metrics_path = out / "metrics" / f"{cell}.csv"
                if metrics_path.exists():
                    metrics_path.unlink()
                state = train(config.rule_config(rule), train_set, seed,
                              eval_set=test_set, metrics_path=metrics_path,
                              channels=config.channels,
                              num_classes=config.num_classes)
                ckpt = out / "checkpoints" / f"{cell}.ckpt"
                save_checkpoint(state, ckpt, rule=rule)
                states_path.setdefault(rule, ckpt)
                if test_set is not None:
                    accuracy[rule][seed] = evaluate_accuracy(
                        state, test_set.images, test_set.labels)
                feats = extract_all_taps(state, stimuli)
                _save_features(feats, stimuli.ids, out / "features" / cell)
                rdms = {tap: rdm_from_features(feats[tap].matrix, stimuli.ids)
                        for tap in TAPS}
                for tap, r in rdms.items():
                    write_rdm_csv(r, out / "rdms" / f"{cell}_{tap}.csv")
                seed_rdms[rule][seed] = rdms
            except Exception as e:  # flagged, not fatal: the run continues
                log.exception("cell %s failed", cell)
                failures.append({"rule": rule, "seed": seed, "error": f"{type(e).__name__}: {e}"})

    # Seed-averaged model RDMs per condition
    mean_rdms: dict[str, dict[str, RDM]] = {}
    for rule in config.rules:
        if not seed_rdms[rule]:
            continue
        mean_rdms[rule] = {}
        for tap in TAPS:
            mean_rdms[rule][tap] = average_rdms(
                [seed_rdms[rule][s][tap] for s in sorted(seed_rdms[rule])])
            write_rdm_csv(mean_rdms[rule][tap], out / "rdms" / f"{rule}_mean_{tap}.csv")

    conditions = [r for r in config.rules if r in mean_rdms]

    # Per-seed RSA then seed aggregation (headline scores)
    per_seed_rho: dict[str, dict[str, dict[int, float]]] = {}
    for rule in conditions:
        per_seed_rho[rule] = {}
        for roi, tap in roi_map.items():
            brain_vec = upper_triangle(mean_brain[roi])
            per_seed_rho[rule][roi] = {
                seed: stats.spearman(upper_triangle(seed_rdms[rule][seed][tap]), brain_vec)
                for seed in sorted(seed_rdms[rule])
            }

    # Bootstrap CIs on the seed-averaged RDM
    ci: dict[str, dict[str, tuple[float, float]]] = {}
    for rule in conditions:
        ci[rule] = {}
        for roi, tap in roi_map.items():
            ci[rule][roi] = stats.bootstrap_ci(
                upper_triangle(mean_rdms[rule][tap]), upper_triangle(mean_brain[roi]),
                n_boot=config.n_boot, level=config.ci_level,
                seed=_derived_seed(config.stats_seed, f"boot|{rule}|{roi}"))

    # Pairwise permutation tests; one shared permutation stream per ROI
    pairwise: list[dict] = []
    tests: list[stats.PairwiseTest] = []
    for roi, tap in roi_map.items():
        brain_vec = upper_triangle(mean_brain[roi])
        roi_seed = _derived_seed(config.stats_seed, f"perm|{roi}")
        for a, b in combinations(conditions, 2):
            t = stats.permutation_test(
                upper_triangle(mean_rdms[a][tap]), upper_triangle(mean_rdms[b][tap]),
                brain_vec, n_perm=config.n_perm, seed=roi_seed, pair=(a, b))
            tests.append(t)
            pairwise.append({"roi": roi, "a": a, "b": b, "rho_a": t.rho_a,
                             "rho_b": t.rho_b, "delta_rho": t.delta_rho,
                             "p_value": t.p_value})
    flags = stats.fdr_bh([t["p_value"] for t in pairwise], alpha=config.alpha) if pairwise else []
    for row, flag in zip(pairwise, flags):
        row["fdr_significant"] = bool(flag)

    p_vs_random: dict[str, dict[str, float]] = {}
    fdr_vs_random: dict[str, dict[str, bool]] = {}
    for row in pairwise:
        if "random" in (row["a"], row["b"]):
            other = row["b"] if row["a"] == "random" else row["a"]
            p_vs_random.setdefault(other, {})[row["roi"]] = row["p_value"]
            fdr_vs_random.setdefault(other, {})[row["roi"]] = row["fdr_significant"]

    # Noise ceilings
    ceilings = {
        roi: stats.noise_ceiling(files, n_splits=config.noise_ceiling_splits,
                                 seed=_derived_seed(config.stats_seed, f"ceiling|{roi}"))
        for roi, files in by_roi.items()
    }

    # Per-subject scores and paired Cohen's d
    subject_rows = per_subject_analysis(mean_rdms, brain_files, roi_map)
    cohen_rows = []
    for roi in roi_map:
        subjects = sorted({b.subject for b in by_roi[roi]})
        if len(subjects) < 2:
            continue
        score = {(r["condition"], r["subject"]): r["rho"]
                 for r in subject_rows if r["roi"] == roi}
        for a, b in combinations(conditions, 2):
            d = stats.cohens_d_paired([score[(a, s)] for s in subjects],
                                      [score[(b, s)] for s in subjects])
            cohen_rows.append({"roi": roi, "a": a, "b": b, "d": d.d,
                               "degenerate": d.degenerate})

    # Best-layer sweep per condition
    sweeps = {rule: best_layer_sweep(mean_rdms[rule], mean_brain) for rule in conditions}

    # Partial RSA per ROI
    partial = partial_rsa_report(mean_rdms, mean_brain, stimuli, roi_map)

    # Conv1 filter summaries (first available seed's checkpoint per rule)
    filter_summaries = {}
    for rule in conditions:
        state, _ = load_checkpoint(states_path[rule])
        summary = summarize_filters(state, rule=rule)
        write_filter_scores_csv(summary, out / "tables" / f"filters_{rule}.csv")
        write_filter_grid_csv(summary, out / "tables" / f"filter_grid_{rule}.csv")
        filter_summaries[rule] = {"mean": summary.mean, "std": summary.std}

    report = _assemble_report(config, roi_map, conditions, per_seed_rho, ci,
                              pairwise, ceilings, subject_rows, cohen_rows,
                              sweeps, partial, accuracy, filter_summaries,
                              p_vs_random, fdr_vs_random, failures)
    _write_tables(out, config, roi_map, report, pairwise, subject_rows,
                  cohen_rows, sweeps, partial, ceilings)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    config.to_file(out / "config.cfg")
    _write_manifest(out, config)
    return report


def _assemble_report(config, roi_map, conditions, per_seed_rho, ci, pairwise,
                     ceilings, subject_rows, cohen_rows, sweeps, partial,
                     accuracy, filter_summaries, p_vs_random, fdr_vs_random,
                     failures) -> dict:
    rois = {}
    for roi, tap in roi_map.items():
        entry = {"layer": tap,
                 "noise_ceiling": {"lower": ceilings[roi].lower,
                                   "upper": ceilings[roi].upper},
                 "conditions": {}}
        for rule in conditions:
            rhos = [per_seed_rho[rule][roi][s] for s in sorted(per_seed_rho[rule][roi])]
            entry["conditions"][rule] = {
                "rho": float(np.mean(rhos)),
                "seed_std": float(np.std(rhos, ddof=1)) if len(rhos) > 1 else 0.0,
                "per_seed": rhos,
                "ci": list(ci[rule][roi]),
                "p_vs_random": p_vs_random.get(rule, {}).get(roi),
                "fdr_significant_vs_random": fdr_vs_random.get(rule, {}).get(roi),
            }
        rois[roi] = entry
    return {
        "config_hash": config.config_hash(),
        "conditions": list(conditions),
        "seeds": list(config.seeds),
        "notes": [
            "rho is the mean of per-seed scores; seed_std is their sample std",
            "bootstrap CIs, pairwise permutation tests, per-subject scores, "
            "sweeps and partial RSA are computed on the seed-averaged model RDM",
            "permutation tests at one ROI share a single permutation stream",
        ],
        "rois": rois,
        "pairwise_tests": pairwise,
        "per_subject": subject_rows,
        "cohens_d": cohen_rows,
        "best_layer": {rule: {"matrix": s.matrix.tolist(), "taps": list(s.taps),
                              "rois": list(s.rois), "best_tap": s.best_tap}
                       for rule, s in sweeps.items()},
        "partial_rsa": partial,
        "accuracy": {rule: {str(seed): acc for seed, acc in sorted(by.items())}
                     for rule, by in accuracy.items() if by},
        "filters": filter_summaries,
        "failures": failures,
    }


def _write_tables(out, config, roi_map, report, pairwise, subject_rows,
                  cohen_rows, sweeps, partial, ceilings):
    tables = out / "tables"
    rows = []
    for roi, tap in roi_map.items():
        for rule, entry in report["rois"][roi]["conditions"].items():
            p = entry["p_vs_random"]
            f = entry["fdr_significant_vs_random"]
            rows.append([rule, roi, tap, entry["rho"], entry["seed_std"],
                         entry["ci"][0], entry["ci"][1],
                         "" if p is None else repr(p),
                         "" if f is None else int(f),
                         len(entry["per_seed"])])
    _write_csv(tables / "rsa_results.csv",
               ["condition", "roi", "tap", "rho", "seed_std", "ci_low", "ci_high",
                "p_vs_random", "fdr_significant", "n_seeds"], rows)

    _write_csv(tables / "pairwise_tests.csv",
               ["roi", "condition_a", "condition_b", "rho_a", "rho_b",
                "delta_rho", "p_value", "fdr_significant"],
               [[r["roi"], r["a"], r["b"], r["rho_a"], r["rho_b"], r["delta_rho"],
                 r["p_value"], int(r["fdr_significant"])] for r in pairwise])

    _write_csv(tables / "per_subject.csv", ["condition", "subject", "roi", "rho"],
               [[r["condition"], r["subject"], r["roi"], r["rho"]] for r in subject_rows])

    _write_csv(tables / "cohens_d.csv",
               ["roi", "condition_a", "condition_b", "d", "degenerate"],
               [[r["roi"], r["a"], r["b"], r["d"], int(r["degenerate"])]
                for r in cohen_rows])

    _write_csv(tables / "noise_ceiling.csv", ["roi", "lower", "upper"],
               [[roi, c.lower, c.upper] for roi, c in ceilings.items()])

    for rule, s in sweeps.items():
        _write_csv(tables / f"sweep_{rule}.csv",
                   ["tap"] + list(s.rois),
                   [[tap] + [float(v) for v in s.matrix[i]] for i, tap in enumerate(s.taps)])

    for roi, rows_p in partial.items():
        _write_csv(tables / f"partial_rsa_{roi}.csv",
                   ["condition", "rho_std", "rho_partial", "delta"],
                   [[r["condition"], r["rho_std"], r["rho_partial"], r["delta"]]
                    for r in rows_p])


def _write_manifest(out: Path, config: ExperimentConfig) -> None:
    artifacts = sorted(str(p.relative_to(out)) for p in out.rglob("*")
                       if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_hash": config.config_hash(),
        "inputs": {
            "train_data": list(config.train_data),
            "test_data": list(config.test_data),
            "stimuli_dir": config.stimuli_dir,
            "brain_rdm_dir": config.brain_rdm_dir,
        },
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
