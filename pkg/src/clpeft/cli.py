"""``clpeft`` command line: synth, features, train, cv, merge, report.

Exit codes: 0 ok, 2 configuration, 3 data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .classifier import (ClassifierHead, DataError, Example, LabelError, NumericError, TrainConfig,
                         cross_validate, embed, predict, train)
from .data import (LABELS, ManifestError, StratificationError, SynthConfig, WavFormatError,
                   load_manifest, read_wav, resolve_audio_path, synthesize_dataset)
from .encoder import ConfigError, EncoderConfig, EncoderWeights, encoder_forward, init_weights
from .features import (FEATURE_NAMES, AudioLengthError, RateError, Standardizer, functional_features,
                       log_mel, normalize_log_mel, pad_or_truncate, pca_fit, pca_transform,
                       resample_to_16k)
from .metrics import MetricsReport, evaluate
from .peft import AdaptedModel, AdapterConfig, attach_adapters, merge
from .svm import BinarySVM, SVMModel, svm_train_multiclass

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
TASKS = {"detect": 2, "severity": 4}
VARIANTS = ("lora", "dora", "frozen-svm", "baseline-svm")
MERGE_TOLERANCE = 1e-10


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config_error(msg):
    return CommandError(EXIT_CONFIG, msg)


def _data_error(msg):
    return CommandError(EXIT_DATA, msg)


# ---------------------------------------------------------------- run config

@dataclass
class RunConfig:
    manifest: str = "manifest.jsonl"
    task: str = "severity"
    variant: str = "lora"
    seed: int = 0
    threads: int = 1
    duration_s: float = 3.0
    folds: int = 5
    svm_c: float = 1.0
    encoder: dict = field(default_factory=dict)
    adapter: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {sorted(TASKS)}, got {self.task!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {list(VARIANTS)}, got {self.variant!r}")
        if self.threads < 1 or self.folds < 2 or self.duration_s <= 0 or self.svm_c <= 0:
            raise ConfigError("threads >= 1, folds >= 2, duration_s > 0 and svm_c > 0 required")

    @property
    def n_classes(self) -> int:
        return TASKS[self.task]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**{"seed": self.seed, **self.encoder})

    def adapter_config(self) -> AdapterConfig:
        kw = dict(self.adapter)
        if "targets" in kw:
            kw["targets"] = tuple(kw["targets"])
        return AdapterConfig(variant=self.variant, **kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{"seed": self.seed, **self.train})


def load_run_config(args) -> RunConfig:
    raw, base = {}, Path.cwd()
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise _config_error(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise _config_error(f"{path}: invalid JSON ({exc})") from None
        base = path.parent
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise _config_error(f"unknown config keys: {sorted(unknown)}")
    for flag, key in (("task", "task"), ("variant", "variant"), ("seed", "seed"),
                      ("threads", "threads"), ("manifest", "manifest")):
        value = getattr(args, flag, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "rank", None) is not None:
        raw["adapter"] = {**raw.get("adapter", {}), "rank": args.rank}
    for flag, key in (("lr", "learning_rate"), ("epochs", "epochs")):
        value = getattr(args, flag, None)
        if value is not None:
            raw["train"] = {**raw.get("train", {}), key: value}
    if "manifest" in raw and args.manifest is None:
        raw["manifest"] = str(base / raw["manifest"])
    try:
        cfg = RunConfig(**raw)
        # surface nested config errors before any work is done
        cfg.encoder_config()
        cfg.train_config()
        if cfg.variant in ("lora", "dora"):
            rank = cfg.adapter_config().rank
            if rank > cfg.encoder_config().d_model:
                raise ConfigError(f"rank {rank} exceeds d_model {cfg.encoder_config().d_model}")
    except (ConfigError, TypeError, ValueError) as exc:
        raise _config_error(f"invalid run config: {exc}") from None
    return cfg


# ---------------------------------------------------------------------- data

def _class_index(label: str, task: str) -> int:
    idx = LABELS.index(label)
    return idx if task == "severity" else int(idx > 0)


def load_entries(cfg: RunConfig):
    try:
        entries = load_manifest(cfg.manifest)
    except FileNotFoundError:
        raise _data_error(f"manifest not found: {cfg.manifest}") from None
    except ManifestError as exc:
        raise _data_error(str(exc)) from None
    if not entries:
        raise _data_error(f"{cfg.manifest}: manifest is empty")
    return entries


def load_audio(manifest, entry):
    path = resolve_audio_path(manifest, entry)
    try:
        clip = read_wav(path)
    except FileNotFoundError:
        raise _data_error(f"audio file not found: {path}") from None
    except WavFormatError as exc:
        raise _data_error(str(exc)) from None
    if not np.all(np.isfinite(clip.samples)):
        raise _data_error(f"{path}: audio contains NaN or Inf samples")
    try:
        return resample_to_16k(clip)
    except RateError as exc:
        raise _data_error(f"{path}: {exc}") from None


def _parallel_map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def encoder_inputs(cfg, entries) -> dict[str, np.ndarray]:
    def one(entry):
        clip = pad_or_truncate(load_audio(cfg.manifest, entry), cfg.duration_s)
        try:
            return normalize_log_mel(log_mel(clip).frames)
        except AudioLengthError as exc:
            raise _data_error(f"{entry.id}: {exc}") from None
    return dict(zip([e.id for e in entries], _parallel_map(one, entries, cfg.threads)))


def functional_matrix(cfg, entries) -> np.ndarray:
    def one(entry):
        try:
            return functional_features(load_audio(cfg.manifest, entry))
        except AudioLengthError as exc:
            raise _data_error(f"{entry.id}: {exc}") from None
    return np.vstack(_parallel_map(one, entries, cfg.threads))


# ------------------------------------------------------------- checkpointing

def _config_tensors(prefix: str, obj) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": np.array(float(v)) for k, v in asdict(obj).items()
            if isinstance(v, (int, float))}


def encoder_tensors(weights: EncoderWeights) -> dict[str, np.ndarray]:
    return {**_config_tensors("config", weights.config), **weights.named_arrays()}


def encoder_from_tensors(tensors) -> EncoderWeights:
    try:
        cfg = EncoderConfig(**{f.name: int(tensors[f"config.{f.name}"])
                               for f in fields(EncoderConfig)})
        return EncoderWeights.from_named_arrays(cfg, tensors)
    except (KeyError, ValueError) as exc:
        raise _config_error(f"not an encoder checkpoint: {exc}") from None


_VARIANT_CODE = {"lora": 0, "dora": 1}


def adapter_tensors(model: AdaptedModel, head: ClassifierHead) -> dict[str, np.ndarray]:
    out = _config_tensors("config", model.base.config)
    out["adapter_config.variant"] = np.array(float(_VARIANT_CODE[model.config.variant]))
    out["adapter_config.rank"] = np.array(float(model.config.rank))
    out["adapter_config.scale"] = np.array(float(model.config.scale))
    out.update(model.trainable())
    out["head.W"], out["head.b"] = head.w, head.b
    return out


def adapted_from_tensors(base: EncoderWeights, tensors):
    """Rebuild ``(AdaptedModel, head)`` on ``base``; config and shapes must agree."""
    try:
        for f in fields(EncoderConfig):
            if int(tensors[f"config.{f.name}"]) != getattr(base.config, f.name):
                raise ConfigError(f"encoder config mismatch on {f.name}")
        variant = {v: k for k, v in _VARIANT_CODE.items()}[int(tensors["adapter_config.variant"])]
        acfg = AdapterConfig(variant=variant, rank=int(tensors["adapter_config.rank"]),
                             scale=float(tensors["adapter_config.scale"]))
        model = attach_adapters(base, acfg)
        expected = model.trainable()
        for name, arr in expected.items():
            if tensors[name].shape != arr.shape:
                raise ConfigError(f"{name}: shape {tensors[name].shape} != {arr.shape}")
        model.load_trainable(tensors)
        head = ClassifierHead(tensors["head.W"], tensors["head.b"])
    except KeyError as exc:
        raise _config_error(f"adapter checkpoint is missing entry {exc}") from None
    except (ConfigError, ValueError) as exc:
        raise _config_error(str(exc)) from None
    return model, head


@dataclass
class SVMPipeline:
    standardizer: Standardizer
    pca: object  # PCAModel or None
    svm: SVMModel

    def transform(self, x):
        z = self.standardizer.transform(x)
        return pca_transform(self.pca, z) if self.pca is not None else z

    def predict(self, x):
        return self.svm.predict(self.transform(x))


def fit_svm_pipeline(x, y, use_pca: bool, c: float) -> SVMPipeline:
    std = Standardizer.fit(x)
    z = std.transform(x)
    pca = None
    if use_pca:
        with warnings.catch_warnings():
            # 88-dim inputs always clamp below the nominal 100 components
            warnings.simplefilter("ignore", UserWarning)
            pca = pca_fit(z, 100)
        z = pca_transform(pca, z)
    return SVMPipeline(std, pca, svm_train_multiclass(z, y, C=c))


def svm_tensors(pipe: SVMPipeline) -> dict[str, np.ndarray]:
    out = {"standardizer.mean": pipe.standardizer.mean, "standardizer.scale": pipe.standardizer.scale}
    if pipe.pca is not None:
        out["pca.mean"] = pipe.pca.mean
        out["pca.components"] = pipe.pca.components
        out["pca.explained_variance"] = pipe.pca.explained_variance
    out["svm.classes"] = np.asarray(pipe.svm.classes, dtype=np.float64)
    out["svm.n_features"] = np.array(float(pipe.svm.n_features))
    for j, m in enumerate(pipe.svm.binaries):
        out[f"svm.{j}.support_vectors"] = m.support_vectors
        out[f"svm.{j}.dual_coef"] = m.dual_coef
        out[f"svm.{j}.bias"] = np.array(m.bias)
        out[f"svm.{j}.gamma"] = np.array(m.gamma)
        out[f"svm.{j}.C"] = np.array(m.C)
    return out


def svm_from_tensors(t) -> SVMPipeline:
    from .features import PCAModel
    pca = None
    if "pca.mean" in t:
        pca = PCAModel(t["pca.mean"], t["pca.components"], t["pca.explained_variance"])
    binaries, j = [], 0
    while f"svm.{j}.bias" in t:
        sv = t[f"svm.{j}.support_vectors"]
        binaries.append(BinarySVM(sv, t[f"svm.{j}.dual_coef"], float(t[f"svm.{j}.bias"]),
                                  float(t[f"svm.{j}.gamma"]), float(t[f"svm.{j}.C"]),
                                  alphas=np.abs(t[f"svm.{j}.dual_coef"]),
                                  support_index=np.arange(len(sv))))
        j += 1
    svm = SVMModel(t["svm.classes"].astype(np.int64), binaries, int(t["svm.n_features"]))
    return SVMPipeline(Standardizer(t["standardizer.mean"], t["standardizer.scale"]), pca, svm)


# ------------------------------------------------------------------ variants

def base_encoder(cfg: RunConfig) -> EncoderWeights:
    return init_weights(cfg.encoder_config())


def _examples(cfg, entries, inputs):
    return [Example(inputs[e.id], _class_index(e.label, cfg.task)) for e in entries]


def fit_peft(cfg, base, examples):
    model = attach_adapters(base, cfg.adapter_config(), seed=cfg.seed)
    head = ClassifierHead.zeros(base.config.d_model, cfg.n_classes)
    try:
        result = train(examples, model, head, cfg.train_config())
    except NumericError as exc:
        raise CommandError(EXIT_NUMERIC, str(exc)) from None
    except (DataError, LabelError) as exc:
        raise _data_error(str(exc)) from None
    return result


def run_variant(cfg, fit_entries, eval_sets):
    """Fit on ``fit_entries``; return (tensors, history, {name: predictions})."""
    y_fit = [_class_index(e.label, cfg.task) for e in fit_entries]
    all_entries = fit_entries + [e for _, es in eval_sets for e in es]
    if cfg.variant in ("lora", "dora"):
        base = base_encoder(cfg)
        inputs = encoder_inputs(cfg, all_entries)
        result = fit_peft(cfg, base, _examples(cfg, fit_entries, inputs))
        preds = {name: predict(result.model, result.head, [inputs[e.id] for e in es])
                 for name, es in eval_sets}
        return adapter_tensors(result.model, result.head), result.history, preds
    if cfg.variant == "frozen-svm":
        inputs = encoder_inputs(cfg, all_entries)
        mat = embed(base_encoder(cfg), [inputs[e.id] for e in all_entries])
        use_pca = False
    else:
        mat = functional_matrix(cfg, all_entries)
        use_pca = True
    feats = {e.id: row for e, row in zip(all_entries, mat)}
    pipe = fit_svm_pipeline(np.vstack([feats[e.id] for e in fit_entries]), y_fit, use_pca, cfg.svm_c)
    preds = {name: pipe.predict(np.vstack([feats[e.id] for e in es])) for name, es in eval_sets}
    return svm_tensors(pipe), None, preds


def score(cfg, eval_sets, preds) -> dict[str, MetricsReport]:
    return {name: evaluate(preds[name], [_class_index(e.label, cfg.task) for e in es],
                           cfg.n_classes) for name, es in eval_sets}


# ------------------------------------------------------------------- outputs

def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_history(path: Path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(history, start=1):
            w.writerow([i, repr(float(loss))])


def metrics_document(cfg, name, reports) -> dict:
    return {"run": name, "task": cfg.task, "variant": cfg.variant, "seed": cfg.seed,
            "n_classes": cfg.n_classes, "metrics": {k: r.to_dict() for k, r in reports.items()}}


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    try:
        config = SynthConfig.from_json(args.config) if args.config else SynthConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
    except FileNotFoundError:
        raise _config_error(f"config file not found: {args.config}") from None
    except (ValueError, TypeError) as exc:
        raise _config_error(f"invalid synth config: {exc}") from None
    manifest, entries = synthesize_dataset(config, _out_dir(args))
    print(f"wrote {len(entries)} clips to {manifest}")
    return 0


def cmd_features(args) -> int:
    cfg = load_run_config(args)
    entries = load_entries(cfg)
    mat = functional_matrix(cfg, entries)
    out = _out_dir(args) / "features.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "split", "label", *FEATURE_NAMES])
        for e, row in zip(entries, mat):
            w.writerow([e.id, e.split, e.label, *(repr(float(v)) for v in row)])
    print(f"wrote {mat.shape[0]}x{mat.shape[1]} functional features to {out}")
    return 0


def _split(entries, split):
    return [e for e in entries if e.split == split]


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    entries = load_entries(cfg)
    fit_entries = _split(entries, "train")
    if not fit_entries:
        raise _data_error("no train-split entries in manifest")
    eval_sets = [(s, _split(entries, s)) for s in ("dev", "eval") if _split(entries, s)]
    tensors, history, preds = run_variant(cfg, fit_entries, eval_sets)
    reports = score(cfg, eval_sets, preds)
    out = _out_dir(args)
    if cfg.variant in ("lora", "dora"):
        ckpt.write_checkpoint(out / "encoder.ckpt", encoder_tensors(base_encoder(cfg)))
        ckpt.write_checkpoint(out / "adapters.ckpt", tensors)
        write_history(out / "history.csv", history)
    else:
        ckpt.write_checkpoint(out / "svm.ckpt", tensors)
    name = args.name or f"{cfg.variant}-{cfg.task}"
    _write_json(out / "metrics.json", metrics_document(cfg, name, reports))
    for split, rep in reports.items():
        print(f"{split}: accuracy={rep.accuracy:.4f} macro_f1={rep.macro_f1:.4f}")
    return 0


def cmd_cv(args) -> int:
    cfg = load_run_config(args)
    entries = load_entries(cfg)
    pooled = _split(entries, "train") + _split(entries, "dev")
    labels = [_class_index(e.label, cfg.task) for e in pooled]
    fold_cfg = replace(cfg, threads=1) if cfg.threads > 1 else cfg

    def fit(train_idx):
        chosen = set(train_idx)
        held = [i for i in range(len(pooled)) if i not in chosen]
        tensors, _, preds = run_variant(fold_cfg, [pooled[i] for i in train_idx],
                                        [("val", [pooled[i] for i in held])])
        by_index = dict(zip(held, preds["val"]))
        return (lambda idx: np.array([by_index[i] for i in idx])), tensors

    try:
        result = cross_validate([e.id for e in pooled], labels, cfg.n_classes, fit, k=cfg.folds,
                                seed=cfg.seed, threads=cfg.threads)
    except StratificationError as exc:
        raise _data_error(str(exc)) from None
    out = _out_dir(args)
    doc = {"k": cfg.folds, "seed": cfg.seed, "task": cfg.task, "variant": cfg.variant,
           "fold_of": {e.id: int(f) for e, f in zip(pooled, result.fold_assignment)},
           "folds": [{"fold": fr.fold, "metrics": fr.metrics.to_dict()} for fr in result.folds],
           "selected": result.selected}
    _write_json(out / "folds.json", doc)
    ckpt.write_checkpoint(out / "selected.ckpt", result.selected_checkpoint)
    for fr in result.folds:
        mark = " *" if fr.fold == result.selected else ""
        print(f"fold {fr.fold}: macro_f1={fr.metrics.macro_f1:.4f}{mark}")
    return 0


def cmd_merge(args) -> int:
    try:
        base_t = ckpt.read_checkpoint(args.base)
        adapter_t = ckpt.read_checkpoint(args.adapters)
    except FileNotFoundError as exc:
        raise _data_error(f"checkpoint not found: {exc.filename}") from None
    except ckpt.CheckpointError as exc:
        raise _data_error(str(exc)) from None
    base = encoder_from_tensors(base_t)
    model, _ = adapted_from_tensors(base, adapter_t)
    merged = merge(model)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    frames = min(16, base.config.max_frames)
    dev = 0.0
    for _ in range(16):
        x = rng.normal(size=(frames, base.config.n_mels))
        dev = max(dev, float(np.max(np.abs(encoder_forward(x, merged).value
                                           - model.forward(x).value))))
    out = _out_dir(args) / "merged.ckpt"
    ckpt.write_checkpoint(out, encoder_tensors(merged))
    print(f"max_forward_dev={dev:.6e}")
    if not dev <= MERGE_TOLERANCE:
        print(f"merge deviation {dev:.3e} exceeds {MERGE_TOLERANCE:g}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


REPORT_TASKS = (("detect", "Detection"), ("severity", "Severity"))


def report_rows(docs, split="eval"):
    rows: dict[str, dict] = {}
    for doc in docs:
        rep = doc["metrics"].get(split)
        if rep is None:
            raise _data_error(f"run {doc.get('run')!r} has no {split!r} metrics")
        rows.setdefault(doc["run"], {})[doc["task"]] = MetricsReport.from_dict(rep)
    return rows


def render_report(rows) -> tuple[str, str]:
    tasks = [(t, title) for t, title in REPORT_TASKS if any(t in r for r in rows.values())]
    header = ["Model"]
    for _, title in tasks:
        header += [f"{title} Accuracy (%)", f"{title} F1"]
    table = [header]
    for run, by_task in rows.items():
        line = [run]
        for t, _ in tasks:
            rep = by_task.get(t)
            line += [f"{100 * rep.accuracy:.2f}", f"{rep.macro_f1:.2f}"] if rep else ["-", "-"]
        table.append(line)
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    text = "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(r, widths))) for r in table)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(table)
    return text + "\n", buf.getvalue()


def cmd_report(args) -> int:
    docs = []
    for path in args.metrics:
        try:
            docs.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise _data_error(f"cannot read metrics file {path}: {exc}") from None
    try:
        text, table_csv = render_report(report_rows(docs, args.split))
    except (KeyError, TypeError) as exc:
        raise _data_error(f"malformed metrics file: missing {exc}") from None
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args)
        (out / "table.txt").write_text(text, encoding="utf-8")
        (out / "table.csv").write_text(table_csv, encoding="utf-8")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clpeft", description="PEFT adapters and SVM baselines for pathological speech.")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--manifest", help="manifest path (overrides config)")
        p.add_argument("--task", choices=sorted(TASKS))
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--rank", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--config", help="synth config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="write functional features for every manifest entry")
    run_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit on train, evaluate on dev and eval")
    run_flags(p)
    p.add_argument("--name", help="run name used in reports")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation over train + dev")
    run_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("merge", help="fold adapters into the base encoder")
    p.add_argument("--adapters", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("report", help="render metrics files as a comparison table")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--split", default="eval")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
