"""Command-line surface and batch workflows.

Subcommands: gen-synth, thresholds, slic, pseudolabel, train, eval,
gradcheck.  Configuration is a flat JSON document; CLI flags override
file keys, and the effective config is echoed into every output
directory.  Exit codes: 0 success, 2 validation error, 3 I/O error,
4 numeric failure.
"""

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import tensorio
from .core import IGNORE, validate_prob_map
from .errors import (
    InvalidConfigError,
    MissingFilesError,
    NumericCheckError,
    TooManySegmentsError,
    ValidationError,
)
from .losses import LossWeights
from .metrics import ConfusionMatrix, accumulate, summary
from .pseudo_label import generate
from .superpixel import SlicParams, slic
from .thresholds import ClassThresholds, CurriculumSchedule, determine_lambdas
from .toy_pipeline import SynthConfig, TrainConfig, train, gen_synthetic, gradcheck

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

MAX_SEGMENT_ID = 65534  # 65535 is the mask IGNORE sentinel

CONFIG_DEFAULTS = {
    # synthetic data
    "image_size": 32,
    "num_classes": 2,
    "source_count": 200,
    "target_count": 100,
    "shift_brightness": 60.0,
    "shift_noise": 4.0,
    # training
    "epochs": 15,
    "batch_size": 4,
    "learning_rate": 1e-4,
    "lr_decay_rate": 0.7,
    "lr_decay_step": 950,
    "eta": 0.3,
    "mu": 10.0,
    "alpha": 1.0,
    "lambda_global": 0.0,
    "p0": 0.25,
    "p_step": 0.05,
    "p_max": 0.55,
    "gamma": 0.7,
    "use_pl": True,
    "use_srt": True,
    "use_adv": True,
    "refine_by_classification": False,
    "gate_by_image_label": False,
    # superpixels
    "n_segments": 100,
    "compactness": 10.0,
    "slic_iterations": 10,
    "enforce_connectivity": True,
    # shared
    "seed": 0,
}


def load_config(path=None, overrides=None) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if path is not None:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidConfigError(f"config is not valid JSON: {e}")
        if not isinstance(doc, dict):
            raise InvalidConfigError("config must be a flat JSON object")
        unknown = sorted(set(doc) - set(CONFIG_DEFAULTS))
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    # the dataclass constructors own the invariants; build them all once
    try:
        synth_config(cfg)
        train_config(cfg)
        slic_params(cfg)
    except ValidationError:
        raise
    except (TypeError, ValueError) as e:
        raise InvalidConfigError(str(e))


def synth_config(cfg: dict) -> SynthConfig:
    return SynthConfig(
        image_size=int(cfg["image_size"]),
        num_classes=int(cfg["num_classes"]),
        source_count=int(cfg["source_count"]),
        target_count=int(cfg["target_count"]),
        shift_brightness=float(cfg["shift_brightness"]),
        shift_noise=float(cfg["shift_noise"]),
        seed=int(cfg["seed"]),
    )


def slic_params(cfg: dict) -> SlicParams:
    return SlicParams(
        n_segments=int(cfg["n_segments"]),
        compactness=float(cfg["compactness"]),
        iterations=int(cfg["slic_iterations"]),
        enforce_connectivity=bool(cfg["enforce_connectivity"]),
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        learning_rate=float(cfg["learning_rate"]),
        lr_decay_rate=float(cfg["lr_decay_rate"]),
        lr_decay_step=int(cfg["lr_decay_step"]),
        weights=LossWeights(eta=float(cfg["eta"]), mu=float(cfg["mu"]),
                            alpha=float(cfg["alpha"]),
                            lambda_global=float(cfg["lambda_global"])),
        schedule=CurriculumSchedule(p0=float(cfg["p0"]), step=float(cfg["p_step"]),
                                    p_max=float(cfg["p_max"])),
        gamma=float(cfg["gamma"]),
        seed=int(cfg["seed"]),
        use_pl=bool(cfg["use_pl"]),
        use_srt=bool(cfg["use_srt"]),
        use_adv=bool(cfg["use_adv"]),
        refine_by_classification=bool(cfg["refine_by_classification"]),
        gate_by_image_label=bool(cfg["gate_by_image_label"]),
        slic=slic_params(cfg),
    )


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _echo_config(out_dir, cfg):
    tensorio.atomic_write_json(os.path.join(out_dir, "config.json"), cfg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_synth(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    scfg = synth_config(cfg)
    data = gen_synthetic(scfg)

    out = args.out
    os.makedirs(os.path.join(out, "source", "images"), exist_ok=True)
    os.makedirs(os.path.join(out, "source", "masks"), exist_ok=True)
    os.makedirs(os.path.join(out, "target", "images"), exist_ok=True)
    os.makedirs(os.path.join(out, "target_eval", "masks"), exist_ok=True)
    _echo_config(out, cfg)

    names = {"source": [], "target": []}
    for i, (img, mask) in enumerate(zip(data["source"]["images"], data["source"]["masks"])):
        name = f"im_{i:04d}"
        names["source"].append(name)
        tensorio.write_tensor(os.path.join(out, "source", "images", name + ".tnsr"),
                              img, tensorio.DTYPE_U8)
        tensorio.write_tensor(os.path.join(out, "source", "masks", name + ".tnsr"),
                              mask, tensorio.DTYPE_U16)
    for j, (img, mask) in enumerate(zip(data["target"]["images"], data["target"]["eval_masks"])):
        name = f"im_{j:04d}"
        names["target"].append(name)
        tensorio.write_tensor(os.path.join(out, "target", "images", name + ".tnsr"),
                              img, tensorio.DTYPE_U8)
        tensorio.write_tensor(os.path.join(out, "target_eval", "masks", name + ".tnsr"),
                              mask, tensorio.DTYPE_U16)
    tensorio.atomic_write_json(os.path.join(out, "source", "labels.json"),
                               {"files": names["source"],
                                "image_labels": data["source"]["image_labels"]})
    tensorio.atomic_write_json(os.path.join(out, "target", "labels.json"),
                               {"files": names["target"],
                                "image_labels": data["target"]["image_labels"]})
    tensorio.atomic_write_json(os.path.join(out, "summary.json"), {
        "source_count": scfg.source_count,
        "target_count": scfg.target_count,
        "image_size": scfg.image_size,
        "num_classes": scfg.num_classes,
        "source_lesion_images": int(sum(data["source"]["image_labels"])),
        "target_lesion_images": int(sum(data["target"]["image_labels"])),
    })
    _say(args, f"wrote {scfg.source_count} source and {scfg.target_count} target "
               f"images ({scfg.image_size}x{scfg.image_size}) to {out}")
    return EXIT_OK


def _load_prob_dir(prob_dir):
    files = sorted(f for f in os.listdir(prob_dir) if f.endswith(".tnsr"))
    if not files:
        raise MissingFilesError(f"no .tnsr files in {prob_dir}")
    maps = []
    for f in files:
        arr = tensorio.read_tensor(os.path.join(prob_dir, f)).astype(np.float64)
        validate_prob_map(arr)
        maps.append(arr)
    return files, maps


def cmd_thresholds(args) -> int:
    if not (0.0 < args.p <= 1.0):
        raise InvalidConfigError(f"portion p must be in (0, 1], got {args.p}")
    _, maps = _load_prob_dir(args.prob_dir)
    thr = determine_lambdas(maps, args.p)
    tensorio.atomic_write_json(args.out, thr.to_json_dict())

    counts = np.zeros(thr.num_classes, dtype=np.int64)
    total = 0
    from .pseudo_label import assign_initial
    for m in maps:
        mask = assign_initial(m, thr)
        total += mask.size
        for k in range(thr.num_classes):
            counts[k] += int((mask == k).sum())
    _say(args, f"wrote thresholds for K={thr.num_classes} to {args.out}")
    for k in range(thr.num_classes):
        _say(args, f"  class {k}: threshold {thr.thresholds[k]:.6f}, "
                   f"selected {counts[k] / total:.4f} of all pixels")
    return EXIT_OK


def cmd_slic(args) -> int:
    cfg = load_config(args.config, {
        "seed": args.seed,
        "n_segments": args.n_segments,
        "compactness": args.compactness,
    })
    img = tensorio.read_tensor(args.image)
    labels = slic(img, slic_params(cfg))
    n_final = int(labels.max()) + 1
    if n_final > MAX_SEGMENT_ID:
        raise TooManySegmentsError(f"{n_final} segments exceed the 16-bit map format")
    tensorio.write_tensor(args.out, labels.astype(np.uint16), tensorio.DTYPE_U16)
    _say(args, f"wrote superpixel map with {n_final} segments to {args.out}")
    return EXIT_OK


def cmd_pseudolabel(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    probs = tensorio.read_tensor(args.probs).astype(np.float64)
    validate_prob_map(probs)
    with open(args.thresholds) as fh:
        thr = ClassThresholds.from_json_dict(json.load(fh))
    img = tensorio.read_tensor(args.image)
    sp = slic(img, slic_params(cfg))
    mask = generate(probs, thr, sp)
    tensorio.write_tensor(args.out, mask, tensorio.DTYPE_U16)

    total = mask.size
    fractions = [(k, float((mask == k).sum()) / total) for k in range(thr.num_classes)]
    selected = float((mask != IGNORE).sum()) / total
    _say(args, f"wrote pseudo labels to {args.out}; selected {selected:.4f} of pixels")
    for k, frac in fractions:
        _say(args, f"  class {k}: {frac:.4f}")
    return EXIT_OK


def _load_dataset(data_dir):
    def load_labels(sub):
        with open(os.path.join(data_dir, sub, "labels.json")) as fh:
            return json.load(fh)

    src_doc = load_labels("source")
    tgt_doc = load_labels("target")
    src_images, src_masks = [], []
    for name in src_doc["files"]:
        src_images.append(tensorio.read_tensor(
            os.path.join(data_dir, "source", "images", name + ".tnsr")))
        src_masks.append(tensorio.read_tensor(
            os.path.join(data_dir, "source", "masks", name + ".tnsr")))
    tgt_images, tgt_eval = [], []
    for name in tgt_doc["files"]:
        tgt_images.append(tensorio.read_tensor(
            os.path.join(data_dir, "target", "images", name + ".tnsr")))
        tgt_eval.append(tensorio.read_tensor(
            os.path.join(data_dir, "target_eval", "masks", name + ".tnsr")))
    num_classes = 1 + max(int(m[m != IGNORE].max(initial=0)) for m in src_masks)
    return {
        "source": {"images": src_images, "masks": src_masks,
                   "image_labels": src_doc["image_labels"]},
        "target": {"images": tgt_images, "image_labels": tgt_doc["image_labels"],
                   "eval_masks": tgt_eval},
        "num_classes": max(num_classes, 2),
    }, tgt_doc["files"]


def cmd_train(args) -> int:
    overrides = {"seed": args.seed}
    if args.no_pl:
        overrides["use_pl"] = False
    if args.no_srt:
        overrides["use_srt"] = False
    if args.no_adv:
        overrides["use_adv"] = False
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    cfg = load_config(args.config, overrides)
    tcfg = train_config(cfg)
    data, tgt_names = _load_dataset(args.data_dir)

    out = args.out
    os.makedirs(os.path.join(out, "models"), exist_ok=True)
    os.makedirs(os.path.join(out, "pseudo_labels"), exist_ok=True)
    _echo_config(out, cfg)

    result = train(tcfg, data)

    log_lines = [json.dumps(rec, sort_keys=True) for rec in result.log]
    tensorio.atomic_write_bytes(os.path.join(out, "log.jsonl"),
                                ("".join(line + "\n" for line in log_lines)).encode())

    columns = ["epoch", "p", "pl_fraction", "lr", "L_C", "L_S", "L_D", "L_SRT",
               "L_disc", "total", "miou", "iou_n", "iou_d"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in result.log:
        writer.writerow([rec.get(c, "") for c in columns])
    tensorio.atomic_write_bytes(os.path.join(out, "log.csv"), buf.getvalue().encode())

    tensorio.write_tensor(os.path.join(out, "models", "segmenter.tnsr"),
                          result.models.segmenter.weights.astype(np.float32),
                          tensorio.DTYPE_F32)
    tensorio.write_tensor(os.path.join(out, "models", "classifier.tnsr"),
                          result.models.classifier.weights.astype(np.float32),
                          tensorio.DTYPE_F32)
    tensorio.write_tensor(os.path.join(out, "models", "discriminator.tnsr"),
                          result.models.discriminator.weights.astype(np.float32),
                          tensorio.DTYPE_F32)
    for bank, tag in ((result.bank_s, "source"), (result.bank_t, "target")):
        tensorio.write_tensor(os.path.join(out, "models", f"centroids_{tag}.tnsr"),
                              bank.centroids.astype(np.float32), tensorio.DTYPE_F32)
        tensorio.atomic_write_json(os.path.join(out, "models", f"centroids_{tag}.json"),
                                   {"gamma": bank.gamma, "steps": bank.steps})
    for name, mask in zip(tgt_names, result.pseudo_masks):
        tensorio.write_tensor(os.path.join(out, "pseudo_labels", name + ".tnsr"),
                              mask, tensorio.DTYPE_U16)

    if result.log:
        miou = result.log[-1]["miou"]
        shown = f"{miou:.4f}" if miou is not None else "undefined"
        _say(args, f"trained {tcfg.epochs} epochs; final target miou {shown}")
    else:
        _say(args, "trained 0 epochs; nothing to log")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_files = sorted(f for f in os.listdir(args.pred_dir) if f.endswith(".tnsr"))
    gt_files = sorted(f for f in os.listdir(args.gt_dir) if f.endswith(".tnsr"))
    if not pred_files or not gt_files:
        raise MissingFilesError("empty prediction or ground-truth directory")
    if pred_files != gt_files:
        raise MissingFilesError("prediction and ground-truth file sets differ")

    preds, gts = [], []
    num_classes = 2
    for f in pred_files:
        pred = tensorio.read_tensor(os.path.join(args.pred_dir, f))
        gt = tensorio.read_tensor(os.path.join(args.gt_dir, f))
        preds.append(pred)
        gts.append(gt)
        hi = max(int(pred[pred != IGNORE].max(initial=0)),
                 int(gt[gt != IGNORE].max(initial=0)))
        num_classes = max(num_classes, hi + 1)
    cm = ConfusionMatrix(num_classes)
    for pred, gt in zip(preds, gts):
        accumulate(cm, pred, gt)
    doc = summary(cm)
    out = json.dumps(doc, sort_keys=True)
    if args.out:
        tensorio.atomic_write_bytes(args.out, (out + "\n").encode())
    print(out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradcheck(args.seed if args.seed is not None else 0)
    for block in ("classifier", "segmenter", "discriminator"):
        _say(args, f"{block}: max relative error {report[block]:.3e}")
    if report["max"] >= 1e-4:
        raise NumericCheckError(f"gradient check failed: max relative error {report['max']:.3e}")
    _say(args, "gradient check passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segtransfer",
        description="Self-training semantic transfer toolkit")
    parser.add_argument("--config", default=None, help="flat JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for interface stability; execution is single-process")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a two-domain synthetic dataset")
    p.add_argument("out")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("thresholds", help="determine class-balance thresholds")
    p.add_argument("prob_dir")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("slic", help="superpixel segmentation of one image")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--n-segments", type=int, default=None, dest="n_segments")
    p.add_argument("--compactness", type=float, default=None)
    p.set_defaults(func=cmd_slic)

    p = sub.add_parser("pseudolabel", help="generate a pseudo-label mask")
    p.add_argument("probs")
    p.add_argument("thresholds")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("train", help="run the toy training pipeline")
    p.add_argument("data_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--no-pl", action="store_true", dest="no_pl")
    p.add_argument("--no-srt", action="store_true", dest="no_srt")
    p.add_argument("--no-adv", action="store_true", dest="no_adv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="IoU metrics from prediction and gt masks")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify analytic gradients")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericCheckError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
