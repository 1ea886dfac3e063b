"""``lvseg`` command line: one subcommand per pipeline stage plus ``pipeline``.

Every invocation writes into a fresh run directory
``<out>/<UTC timestamp>_<config hash>/`` holding a resolved copy of the
configuration next to its outputs. Study collections are directories with one
canonical study directory per patient.

Exit codes: 0 success, 2 invalid input or configuration, 3 unreadable or
inconsistent data, 4 anything else.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import postproc, roi, synthetic
from .errors import DataError, InvalidConfig, LVSegError, MissingFile, ValidationError
from .estimators import mask_stack, preprocess_stack
from .evaluation import EvalReport, PatientRow, emit_report
from .imgproc import PreprocessRecipe
from .ingest import load_study, stack_from_dicom_files, stack_from_nifti, store_study
from .types import ImageStack
from .unet import (SegModel, TrainHyper, UNetConfig, augment, binarize, evaluate, load_weights,
                   predict, save_weights, split_patients, train, write_history_csv)
from .volume import estimate_patient

log = logging.getLogger("lvseg")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "out": "runs",
    "ingest": {"lv_class": 3, "phantom_size": 128, "phantom_frames": 20},
    "preprocess": {"method": "m2t2", "crop": 176, "clahe_clip": 2.0, "clahe_grid": [1, 1],
                   "norm": "minmax", "target_spacing": 1.0},
    "roi": {"r_min": 15, "r_max": 64, "keep": 30, "expand": 0.10},
    "unet": {"input_size": 176, "base_filters": 64, "conv_layers": 23, "dropout_rate": 0.5,
             "batch_norm": False},
    "train": {"loss": "logdice", "optimizer": "adam", "learning_rate": 1e-4, "batch_size": 4,
              "epochs": 100, "augment_factor": 0, "threshold": 0.5, "dice_smooth": 1.0},
    "postproc": {"method": "center", "fraction": 0.9, "connectivity": 8},
    "volume": {"mode": "am", "fallback": True},
    "eval": {"bands": [[0.0, 0.4], [0.4, 0.5], [0.5, 1.0]]},
}


# -- configuration ---------------------------------------------------------------

def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key not in base:
            raise InvalidConfig(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise InvalidConfig(f"config key {path}{key} must be a table")
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise MissingFile(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc


# CLI flag dest -> (section, key)
_FLAG_KEYS = {
    "lv_class": ("ingest", "lv_class"),
    "method": ("preprocess", "method"), "crop": ("preprocess", "crop"),
    "clahe_clip": ("preprocess", "clahe_clip"), "norm": ("preprocess", "norm"),
    "r_min": ("roi", "r_min"), "r_max": ("roi", "r_max"), "keep": ("roi", "keep"),
    "expand": ("roi", "expand"),
    "input_size": ("unet", "input_size"), "base_filters": ("unet", "base_filters"),
    "conv_layers": ("unet", "conv_layers"), "batch_norm": ("unet", "batch_norm"),
    "loss": ("train", "loss"), "optimizer": ("train", "optimizer"),
    "learning_rate": ("train", "learning_rate"), "batch_size": ("train", "batch_size"),
    "epochs": ("train", "epochs"), "augment_factor": ("train", "augment_factor"),
    "filter_method": ("postproc", "method"),
    "mode": ("volume", "mode"), "fallback": ("volume", "fallback"),
}


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        cfg = _merge(cfg, load_config(args.config))
    for top in ("seed", "jobs", "out"):
        if getattr(args, top, None) is not None:
            cfg[top] = getattr(args, top)
    for dest, (section, key) in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[section][key] = value
    if cfg["jobs"] < 1:
        raise InvalidConfig("jobs must be >= 1")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:10]


def make_run_dir(cfg: dict, command: str) -> Path:
    stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    run = Path(cfg["out"]) / f"{stamp}_{config_hash(cfg)}"
    run.mkdir(parents=True, exist_ok=False)
    # the copy is a valid --config input; the command rides along as a comment
    with open(run / "config.toml", "wb") as fh:
        fh.write(f"# lvseg {command}\n".encode())
        tomli_w.dump(cfg, fh)
    return run


def recipe_from(cfg) -> PreprocessRecipe:
    p = cfg["preprocess"]
    return PreprocessRecipe(p["method"], p["crop"], p["clahe_clip"], tuple(p["clahe_grid"]),
                            p["norm"], p["target_spacing"])


def unet_config_from(cfg) -> UNetConfig:
    u = cfg["unet"]
    return UNetConfig(u["input_size"], u["base_filters"], u["conv_layers"], u["dropout_rate"],
                      u["batch_norm"], cfg["seed"]).validate()


def hyper_from(cfg) -> TrainHyper:
    t = cfg["train"]
    return TrainHyper(t["loss"], t["optimizer"], t["learning_rate"], t["batch_size"],
                      t["epochs"], t["augment_factor"], t["threshold"],
                      t["dice_smooth"]).validate()


# -- study collections -----------------------------------------------------------

def study_dirs(root) -> list[Path]:
    root = Path(root)
    if (root / "manifest.json").is_file():
        return [root]
    if not root.is_dir():
        raise MissingFile(f"no study collection at {root}")
    dirs = sorted(p for p in root.iterdir() if (p / "manifest.json").is_file())
    if not dirs:
        raise MissingFile(f"{root} holds no studies")
    return dirs


def load_collection(root) -> list[ImageStack]:
    return [load_study(d) for d in study_dirs(root)]


def save_collection(stacks, root) -> Path:
    root = Path(root)
    for st in sorted(stacks, key=lambda s: s.patient_id):
        store_study(st, root / st.patient_id)
    return root


def _pmap(fn, items, jobs: int):
    """Order-preserving map over patients, in worker processes when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class _Preprocess:
    def __init__(self, recipe):
        self.recipe = recipe

    def __call__(self, stack):
        return preprocess_stack(stack, self.recipe)


class _Filter:
    def __init__(self, p):
        self.p = p

    def __call__(self, stack):
        masks = postproc.filter_record(stack.masks, self.p["method"], self.p["connectivity"],
                                       self.p["fraction"])
        return ImageStack(stack.patient_id, stack.data, stack.meta, masks)


class _Volume:
    def __init__(self, v):
        self.v = v

    def __call__(self, pair):
        es, ed = pair
        return estimate_patient(es, mode=self.v["mode"], fallback=self.v["fallback"],
                                edv_masks=None if ed is None else ed.masks)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- stages ----------------------------------------------------------------------

def run_ingest(args, cfg, run: Path) -> dict:
    out = run / "studies"
    stacks = []
    if args.phantom:
        i = cfg["ingest"]
        stacks, truth = synthetic.phantom_cohort(args.phantom, cfg["seed"], i["phantom_size"],
                                                 i["phantom_frames"])
        _write_csv(run / "truth.csv", ("patient_id", "esv_ml", "edv_ml", "ef"),
                   [(pid, repr(t["esv_ml"]), repr(t["edv_ml"]), repr(t["ef"]))
                    for pid, t in sorted(truth.items())])
    for d in args.dicom or []:
        d = Path(d)
        groups = sorted(p for p in d.iterdir() if p.is_dir()) or [d]
        for g in groups:
            files = sorted(g.glob("*.dcm")) or sorted(p for p in g.iterdir() if p.is_file())
            stacks.append(stack_from_dicom_files([f.read_bytes() for f in files]))
    for path in args.nifti or []:
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"no NIfTI file at {path}")
        label = Path(args.label).read_bytes() if args.label else None
        pid = path.name.split(".")[0]
        stacks.append(stack_from_nifti(path.read_bytes(), pid, label, cfg["ingest"]["lv_class"],
                                       args.age, args.sex or "Unknown"))
    if not stacks:
        raise ValidationError("nothing to ingest: give --dicom, --nifti or --phantom")
    save_collection(stacks, out)
    return {"studies": str(out), "patients": len(stacks)}


def run_preprocess(args, cfg, run: Path) -> dict:
    stacks = load_collection(args.studies)
    done = _pmap(_Preprocess(recipe_from(cfg)), stacks, cfg["jobs"])
    return {"studies": str(save_collection(done, run / "studies")), "patients": len(done)}


def _write_pgm(path, mask):
    mask = np.asarray(mask, dtype=np.uint8) * 255
    with open(path, "wb") as fh:
        fh.write(f"P5 {mask.shape[1]} {mask.shape[0]} 255\n".encode() + mask.tobytes())


def run_roi(args, cfg, run: Path) -> dict:
    r = cfg["roi"]
    stacks = load_collection(args.studies)
    (run / "roi").mkdir()
    masked = []
    for st in stacks:
        rect = roi.detect_roi(st.data, r["r_min"], r["r_max"], r["keep"], r["expand"])
        (run / "roi" / f"{st.patient_id}.json").write_text(
            json.dumps({"patient_id": st.patient_id, **rect.as_dict()}, sort_keys=True) + "\n")
        if args.mask:
            _write_pgm(run / "roi" / f"{st.patient_id}_mask.pgm", roi.roi_mask(st.data.shape[2:], rect))
        if args.apply:
            masked.append(mask_stack(st, rect))
    out = {"roi": str(run / "roi"), "patients": len(stacks)}
    if args.apply:
        out["studies"] = str(save_collection(masked, run / "studies"))
    return out


def _images_and_masks(stacks):
    x = np.concatenate([s.data.reshape((-1,) + s.data.shape[2:]) for s in stacks])
    y = np.concatenate([s.masks.reshape((-1,) + s.masks.shape[2:]) for s in stacks])
    return x.astype(np.float32), y.astype(np.uint8)


def run_train(args, cfg, run: Path) -> dict:
    stacks = load_collection(args.studies)
    missing = [s.patient_id for s in stacks if s.masks is None]
    if missing:
        raise ValidationError(f"training studies without masks: {missing}")
    by_id = {s.patient_id: s for s in stacks}
    tr, va, te = split_patients(sorted(by_id), cfg["seed"])
    (run / "split.json").write_text(json.dumps({"train": tr, "val": va, "test": te}, indent=2) + "\n")
    hyper = hyper_from(cfg)
    x, y = _images_and_masks([by_id[p] for p in tr])
    if hyper.augment_factor:
        pairs = augment(list(zip(x, y)), hyper.augment_factor, cfg["seed"])
        x = np.asarray([p[0] for p in pairs], dtype=np.float32)
        y = np.asarray([p[1] for p in pairs], dtype=np.uint8)
    model = SegModel.build(unet_config_from(cfg))
    train(model, (x, y), _images_and_masks([by_id[p] for p in va]), hyper, seed=cfg["seed"],
          callback=lambda row: log.info("epoch %d loss %.4f val_dsc %.4f", row["epoch"],
                                        row["loss"], row["val_dsc"]) and False)
    save_weights(model, run / "weights.lvw")
    write_history_csv(model.history, run / "history.csv")
    test = evaluate(model, *_images_and_masks([by_id[p] for p in te]), hyper.threshold)
    (run / "test_metrics.json").write_text(json.dumps(test.as_dict(), indent=2) + "\n")
    return {"weights": str(run / "weights.lvw"), "test_dsc": test.dsc}


def _oracle_stacks(stacks, oracle_root):
    out = []
    for st in stacks:
        d = Path(oracle_root) / st.patient_id
        if not (d / "manifest.json").is_file():
            raise MissingFile(f"no oracle study for patient {st.patient_id} in {oracle_root}")
        ref = load_study(d)
        if ref.masks is None or ref.masks.shape != st.data.shape:
            raise DataError(f"oracle masks for {st.patient_id} do not match the study")
        out.append(ImageStack(st.patient_id, st.data, st.meta, ref.masks))
    return out


def segment_stacks(stacks, weights=None, oracle=None, threshold=0.5):
    if (weights is None) == (oracle is None):
        raise ValidationError("give exactly one of --weights or --oracle-masks")
    if oracle is not None:
        return _oracle_stacks(stacks, oracle)
    model = load_weights(weights)
    out = []
    for st in stacks:
        flat = st.data.reshape((-1,) + st.data.shape[2:])
        masks = binarize(predict(model, flat), threshold).reshape(st.data.shape)
        out.append(ImageStack(st.patient_id, st.data, st.meta, masks))
    return out


def run_segment(args, cfg, run: Path) -> dict:
    stacks = segment_stacks(load_collection(args.studies), args.weights, args.oracle_masks,
                            cfg["train"]["threshold"])
    return {"studies": str(save_collection(stacks, run / "studies")), "patients": len(stacks)}


def run_postproc(args, cfg, run: Path) -> dict:
    stacks = load_collection(args.studies)
    missing = [s.patient_id for s in stacks if s.masks is None]
    if missing:
        raise ValidationError(f"studies without masks: {missing}")
    done = _pmap(_Filter(cfg["postproc"]), stacks, cfg["jobs"])
    return {"studies": str(save_collection(done, run / "studies")), "patients": len(done)}


VOLUME_HEADER = ("patient_id", "esv_ml", "edv_ml", "ef", "flags")


def volumes_for(es_root, ed_root, cfg) -> list[tuple]:
    es = {s.patient_id: s for s in load_collection(es_root)}
    ed = {s.patient_id: s for s in load_collection(ed_root)} if ed_root else {}
    if ed and set(ed) != set(es):
        raise DataError("ESV and EDV model outputs cover different patients")
    ids = sorted(es)
    results = _pmap(_Volume(cfg["volume"]), [(es[p], ed.get(p)) for p in ids], cfg["jobs"])
    return [(p, r) for p, r in zip(ids, results)]


def write_volumes_csv(path, rows):
    _write_csv(path, VOLUME_HEADER,
               [(p, repr(r.esv_ml), repr(r.edv_ml), "" if r.ef is None else repr(r.ef),
                 ";".join(sorted(f.value if hasattr(f, "value") else str(f) for f in r.flags)))
                for p, r in rows])


def run_volume(args, cfg, run: Path) -> dict:
    es_root = args.esv_model or args.studies
    if es_root is None:
        raise ValidationError("give --studies or --esv-model")
    rows = volumes_for(es_root, args.edv_model, cfg)
    write_volumes_csv(run / "volumes.csv", rows)
    return {"volumes": str(run / "volumes.csv"), "patients": len(rows)}


def _read_table(path, need) -> dict:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise MissingFile(f"cannot read {path}: {exc}") from exc
    out = {}
    for row in rows:
        if any(k not in row for k in need):
            raise DataError(f"{path} lacks one of the columns {need}")
        try:
            out[row["patient_id"]] = {k: float(row[k]) for k in need if k != "patient_id"}
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric value for {row['patient_id']}") from exc
        out[row["patient_id"]]["flags"] = row.get("flags", "")
    return out


def report_from(pred: dict, truth: dict, bands) -> EvalReport:
    missing = sorted(set(pred) - set(truth))
    if missing:
        raise DataError(f"no ground truth for {missing}")
    rows = []
    for pid in sorted(pred):
        p, t = pred[pid], truth[pid]
        if p["edv_ml"] <= 0 or t["edv_ml"] <= 0:
            raise DataError(f"ejection fraction undefined for {pid}: EDV is not positive")
        ef_p = (p["edv_ml"] - p["esv_ml"]) / p["edv_ml"]
        ef_t = (t["edv_ml"] - t["esv_ml"]) / t["edv_ml"]
        flags = tuple(f for f in str(p.get("flags", "")).split(";") if f)
        rows.append(PatientRow(pid, t["esv_ml"], p["esv_ml"], t["edv_ml"], p["edv_ml"], ef_t, ef_p,
                               flags))
    return EvalReport.build(rows, bands)


def run_eval(args, cfg, run: Path) -> dict:
    need = ("patient_id", "esv_ml", "edv_ml")
    rep = report_from(_read_table(args.pred, need), _read_table(args.truth, need),
                      cfg["eval"]["bands"])
    emit_report(rep, run / "report")
    return {"report": str(run / "report"), **{k: v for k, v in rep.summary().items()
                                              if k.endswith("rmse_ml") or k == "accuracy"}}


def run_pipeline(args, cfg, run: Path) -> dict:
    """preprocess -> [roi] -> segment -> postproc -> volume -> [eval]."""
    recipe = recipe_from(cfg)
    raw = load_collection(args.studies)
    if args.oracle_masks:
        # oracle masks share the raw geometry, so they ride through the recipe with the images
        raw = _oracle_stacks(raw, args.oracle_masks)
    stacks = _pmap(_Preprocess(recipe), raw, cfg["jobs"])
    if args.roi:
        r = cfg["roi"]
        stacks = [mask_stack(s, roi.detect_roi(s.data, r["r_min"], r["r_max"], r["keep"],
                                               r["expand"])) for s in stacks]
    if not args.oracle_masks:
        stacks = segment_stacks(stacks, weights=args.weights, threshold=cfg["train"]["threshold"])
    stacks = _pmap(_Filter(cfg["postproc"]), stacks, cfg["jobs"])
    save_collection(stacks, run / "studies")
    rows = volumes_for(run / "studies", None, cfg)
    write_volumes_csv(run / "volumes.csv", rows)
    out = {"volumes": str(run / "volumes.csv"), "patients": len(rows)}
    if args.truth:
        need = ("patient_id", "esv_ml", "edv_ml")
        rep = report_from(_read_table(run / "volumes.csv", need), _read_table(args.truth, need),
                          cfg["eval"]["bands"])
        emit_report(rep, run / "report")
        out.update(report=str(run / "report"), esv_rmse_ml=rep.esv_rmse_ml,
                   edv_rmse_ml=rep.edv_rmse_ml, accuracy=rep.accuracy)
    return out


# -- argument parsing ------------------------------------------------------------

def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes for per-patient work")
    common.add_argument("--out", help="parent directory of run directories (default: runs)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lvseg", description="Left-ventricle segmentation and volumetry.")
    sub = p.add_subparsers(dest="command", required=True)

    def studies(sp, required=True):
        sp.add_argument("--studies", required=required, help="study collection directory")

    sp = sub.add_parser("ingest", parents=[common], help="DICOM/NIfTI/phantoms -> canonical studies")
    sp.add_argument("--dicom", action="append", help="directory of patient folders of .dcm files")
    sp.add_argument("--nifti", action="append", help="4-D NIfTI-1 image (.nii or .nii.gz)")
    sp.add_argument("--label", help="label volume for --nifti")
    sp.add_argument("--lv-class", dest="lv_class", type=int)
    sp.add_argument("--age", type=int)
    sp.add_argument("--sex", choices=("M", "F", "Unknown"))
    sp.add_argument("--phantom", type=int, default=0, help="generate N synthetic patients")

    sp = sub.add_parser("preprocess", parents=[common], help="orientation, resampling, crop, CLAHE")
    studies(sp)
    _recipe_flags(sp)

    sp = sub.add_parser("roi", parents=[common], help="Hough-based LV bounding box")
    studies(sp)
    sp.add_argument("--r-min", dest="r_min", type=int)
    sp.add_argument("--r-max", dest="r_max", type=int)
    sp.add_argument("--keep", type=int)
    sp.add_argument("--expand", type=float)
    sp.add_argument("--mask", action="store_true", help="also write a PGM mask per patient")
    sp.add_argument("--apply", action="store_true", help="write studies masked to the ROI")

    sp = sub.add_parser("train", parents=[common], help="train a U-Net on studies with ground-truth masks")
    studies(sp)
    _unet_flags(sp)

    sp = sub.add_parser("segment", parents=[common], help="predict masks")
    studies(sp)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights")
    src.add_argument("--oracle-masks", dest="oracle_masks",
                     help="collection whose stored masks are used instead of a network")

    sp = sub.add_parser("postproc", parents=[common], help="remove spurious contours")
    studies(sp)
    sp.add_argument("--method", dest="filter_method", choices=("largest", "center"))

    sp = sub.add_parser("volume", parents=[common], help="ESV/EDV/EF per patient")
    studies(sp, required=False)
    _volume_flags(sp)
    sp.add_argument("--esv-model", dest="esv_model", help="segmented collection used for ESV")
    sp.add_argument("--edv-model", dest="edv_model", help="segmented collection used for EDV")

    sp = sub.add_parser("eval", parents=[common], help="RMSE and EF-class confusion report")
    sp.add_argument("--pred", required=True, help="volumes.csv")
    sp.add_argument("--truth", required=True, help="CSV with patient_id, esv_ml, edv_ml")

    sp = sub.add_parser("pipeline", parents=[common], help="run every stage")
    studies(sp)
    _recipe_flags(sp)
    _volume_flags(sp)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights")
    src.add_argument("--oracle-masks", dest="oracle_masks")
    sp.add_argument("--roi", action="store_true", help="mask images to the detected ROI first")
    sp.add_argument("--method-filter", dest="filter_method", choices=("largest", "center"))
    sp.add_argument("--truth", help="ground-truth CSV; enables the report")
    return p


def _recipe_flags(sp):
    sp.add_argument("--method", choices=("baseline", "m1t0", "m1t1", "m1t2", "m2t0", "m2t1", "m2t2"))
    sp.add_argument("--crop", type=int)
    sp.add_argument("--clahe-clip", dest="clahe_clip", type=float)
    sp.add_argument("--norm", choices=("minmax", "zscore", "none"))


def _unet_flags(sp):
    sp.add_argument("--input-size", dest="input_size", type=int)
    sp.add_argument("--base-filters", dest="base_filters", type=int)
    sp.add_argument("--conv-layers", dest="conv_layers", type=int, choices=(18, 23, 28))
    sp.add_argument("--batch-norm", dest="batch_norm", type=_on_off)
    sp.add_argument("--loss", choices=("bce", "dice", "logdice", "bce_dice"))
    sp.add_argument("--optimizer", choices=("adam", "rmsprop"))
    sp.add_argument("--lr", dest="learning_rate", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--augment", dest="augment_factor", type=int, choices=(0, 4, 10))


def _volume_flags(sp):
    sp.add_argument("--mode", choices=("am", "tc"))
    sp.add_argument("--fallback", type=_on_off, help="on|off")


COMMANDS = {
    "ingest": run_ingest, "preprocess": run_preprocess, "roi": run_roi, "train": run_train,
    "segment": run_segment, "postproc": run_postproc, "volume": run_volume, "eval": run_eval,
    "pipeline": run_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        run = make_run_dir(cfg, args.command)
        result = COMMANDS[args.command](args, cfg, run)
    except ValidationError as exc:
        print(f"lvseg: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, OSError) as exc:
        print(f"lvseg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LVSegError, Exception) as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"lvseg: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(json.dumps({"run": str(run), **result}, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
