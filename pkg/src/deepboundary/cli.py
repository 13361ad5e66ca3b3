"""Command-line pipeline with reproducible run manifests.

Every run writes `<output>.manifest` (or `run.manifest` inside an output
directory): the resolved options as `key=value` lines plus a `sha256:` digest
per input file. Identical manifests imply byte-identical outputs.

Exit codes: 0 success, 1 usage error, 2 I/O or input-format error,
3 numeric failure (divergence or non-convergence).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import boundary_map, candidates, evaluation, features, regressor
from . import spectral, tensor_io

SUBCOMMANDS = ("convert", "candidates", "describe", "train", "probe",
               "detect", "eval", "eval-sem", "eval-iou", "eval-proposals",
               "spectral", "label")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(target: Path, command: str, options: dict,
                    inputs: list[Path]) -> None:
    lines = [f"command={command}"]
    for key in sorted(options):
        val = options[key]
        if isinstance(val, float):
            val = repr(val)
        lines.append(f"{key}={val}")
    for p in inputs:
        lines.append(f"sha256:{p}={_sha256(Path(p))}")
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _manifest_beside(out_path: Path) -> Path:
    out_path = Path(out_path)
    if out_path.is_dir():
        return out_path / "run.manifest"
    return Path(str(out_path) + ".manifest")


def _options_of(args, skip=("config", "func", "command")) -> dict:
    return {k: v for k, v in vars(args).items()
            if k not in skip and not k.startswith("_")}


def _stack_inputs(manifest_path: Path) -> list[Path]:
    stack = tensor_io.read_stack_manifest(manifest_path)
    files = [Path(manifest_path)]
    files += [Path(manifest_path).parent / f"{spec.name}.hflt"
              for spec in stack.layers]
    return files


# --- subcommand handlers -------------------------------------------------

def _cmd_convert(args) -> None:
    src, dst = Path(args.input), Path(args.out)
    arr = tensor_io.load_raster(src)
    tensor_io.save_raster(arr, dst)
    _write_manifest(_manifest_beside(dst), "convert", _options_of(args), [src])


def _load_candidate_source(args, dims=None):
    if args.candidates_map is not None:
        raw = tensor_io.load_raster(args.candidates_map)
        if dims is not None and raw.shape != tuple(dims):
            raise ValueError(
                f"{args.candidates_map}: dims {raw.shape} do not match the "
                f"stack input dims {tuple(dims)}")
        return candidates.detect_candidates(
            imported_map=raw, threshold=args.threshold, max_count=args.max)
    if args.image is not None:
        img = tensor_io.load_raster(args.image)
        if dims is not None and img.shape != tuple(dims):
            raise ValueError(
                f"{args.image}: dims {img.shape} do not match the stack "
                f"input dims {tuple(dims)}")
        return candidates.detect_candidates(
            image=img, threshold=args.threshold, max_count=args.max)
    raise UsageError("need --image or --candidates")


def _cmd_candidates(args) -> None:
    cands = _load_candidate_source(args)
    candidates.save_candidates_csv(cands, args.out)
    inputs = [Path(p) for p in (args.image, args.candidates_map) if p]
    if args.annotations:
        if not args.labels_out:
            raise UsageError("--annotations requires --labels-out")
        ann = tensor_io.load_tensor(args.annotations)
        if ann.ndim != 3 or ann.shape[1:] != cands.image_dims:
            raise ValueError(
                f"{args.annotations}: expected [K, {cands.image_dims[0]}, "
                f"{cands.image_dims[1]}] annotations, got {ann.shape}")
        labels = evaluation.agreement_labels(ann, cands, args.agreement_tol)
        candidates.save_labels_csv(labels, args.labels_out)
        inputs.append(Path(args.annotations))
    _write_manifest(_manifest_beside(Path(args.out)), "candidates",
                    _options_of(args), inputs)


def _cmd_describe(args) -> None:
    stack = tensor_io.read_stack_manifest(args.stack)
    cands = candidates.load_candidates_csv(args.candidates, stack.input_dims)
    mat = features.batch_descriptors(stack, cands, mode=args.mode,
                                     jobs=args.jobs)
    tensor_io.save_tensor(mat.values, args.out)
    sidecar = Path(str(args.out) + ".layers")
    sidecar.write_text(
        "".join(f"{s.name} {s.channels} {s.height} {s.width}\n"
                for s in mat.layers), encoding="utf-8")
    inputs = _stack_inputs(Path(args.stack)) + [Path(args.candidates)]
    _write_manifest(_manifest_beside(Path(args.out)), "describe",
                    _options_of(args), inputs)


def _train_config(args) -> regressor.TrainConfig:
    return regressor.TrainConfig(
        epochs_phase1=args.epochs_phase1, epochs_phase2=args.epochs_phase2,
        learning_rate=args.learning_rate, momentum=args.momentum,
        batch_size=args.batch_size, fn_threshold=args.fn_threshold,
        dropout_rate=args.dropout, hidden=args.hidden, seed=args.seed)


def _cmd_train(args) -> None:
    x = tensor_io.load_tensor(args.descriptors).astype(np.float64)
    if x.ndim != 2:
        raise ValueError(f"{args.descriptors}: descriptors must be 2-D")
    y = candidates.load_labels_csv(args.labels)
    if len(y) != x.shape[0]:
        raise ValueError(
            f"{args.labels}: {len(y)} labels for {x.shape[0]} descriptors")
    if not 0 < args.holdout_frac < 1:
        raise UsageError("--holdout-frac must lie in (0, 1)")
    cfg = _train_config(args)
    rng = np.random.default_rng([cfg.seed, 9])
    order = rng.permutation(len(y))
    n_hold = max(1, round(len(y) * args.holdout_frac))
    hold, keep = order[:n_hold], order[n_hold:]
    if not len(keep):
        raise UsageError("holdout fraction leaves no training samples")
    report = regressor.train_protocol(x[keep], y[keep], x[hold], y[hold], cfg)
    out_dir = Path(args.out)
    regressor.save_head(report.head, out_dir)
    log = [
        f"samples_total={len(y)}",
        f"samples_train={len(keep)}",
        f"samples_holdout={len(hold)}",
        f"balanced={report.balanced_count}",
        f"mined_false_negatives={report.mined_fn}",
        f"mined_true_negatives={report.mined_tn}",
        f"holdout_fn_phase1={report.fn_count_phase1}",
        f"holdout_fn_phase2={report.fn_count_phase2}",
        f"loss_phase1_final={report.trace_phase1[-1]:.9f}"
        if report.trace_phase1 else "loss_phase1_final=nan",
        f"loss_phase2_final={report.trace_phase2[-1]:.9f}"
        if report.trace_phase2 else "loss_phase2_final=nan",
    ]
    (out_dir / "runlog.txt").write_text("\n".join(log) + "\n", encoding="utf-8")
    _write_manifest(out_dir / "run.manifest", "train", _options_of(args),
                    [Path(args.descriptors), Path(args.labels)])


def _cmd_probe(args) -> None:
    x = tensor_io.load_tensor(args.descriptors).astype(np.float64)
    y = candidates.load_labels_csv(args.labels)
    if len(y) != x.shape[0]:
        raise ValueError(
            f"{args.labels}: {len(y)} labels for {x.shape[0]} descriptors")
    slices = None
    inputs = [Path(args.descriptors), Path(args.labels)]
    if args.layers:
        slices, start = [], 0
        for line in Path(args.layers).read_text(encoding="utf-8").splitlines():
            fields = line.split()
            if len(fields) != 4:
                continue
            channels = int(fields[1])
            slices.append((fields[0], start, start + channels))
            start += channels
        if start != x.shape[1]:
            raise ValueError(
                f"{args.layers}: layer channels sum to {start}, descriptors "
                f"have {x.shape[1]}")
        inputs.append(Path(args.layers))
    mags, profile = regressor.linear_probe(x, y, args.ridge_lambda, slices)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("channel,magnitude\n")
        for i, m in enumerate(mags):
            f.write(f"{i},{m:.9f}\n")
    if profile is not None:
        layer_path = Path(args.out).with_name(Path(args.out).stem + "_layers.csv")
        with open(layer_path, "w", encoding="utf-8") as f:
            f.write("layer,mean_magnitude\n")
            for name, m in profile:
                f.write(f"{name},{m:.9f}\n")
    _write_manifest(_manifest_beside(Path(args.out)), "probe",
                    _options_of(args), inputs)


def _cmd_detect(args) -> None:
    stack = tensor_io.read_stack_manifest(args.stack)
    head = regressor.load_head(args.head)
    stack.require_channels(head.input_dim)
    cands = _load_candidate_source(args, dims=stack.input_dims)
    mat = features.batch_descriptors(stack, cands, mode=args.mode,
                                     jobs=args.jobs)
    preds = np.empty(len(cands))
    for start in range(0, len(cands), 8192):
        block = mat.values[start:start + 8192].astype(np.float64)
        preds[start:start + 8192] = regressor.forward(head, block)
    out_map = boundary_map.assemble(preds, cands, stack.input_dims)
    if args.out_dims:
        out_map = boundary_map.downscale(out_map, tuple(args.out_dims))
    tensor_io.save_raster(out_map, args.out)
    inputs = _stack_inputs(Path(args.stack))
    inputs += [Path(args.head) / n for n in
               ("w1.hflt", "b1.hflt", "w2.hflt", "b2.hflt", "head.txt")]
    inputs += [Path(p) for p in (args.image, args.candidates_map) if p]
    _write_manifest(_manifest_beside(Path(args.out)), "detect",
                    _options_of(args), inputs)


def _pred_files(directory: Path) -> list[Path]:
    files = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in (".pgm", ".hflt"))
    if not files:
        raise ValueError(f"{directory}: no .pgm or .hflt predictions found")
    return files


def _cmd_eval(args) -> None:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    curves, names, inputs = [], [], []
    for pred_path in _pred_files(pred_dir):
        gt_path = gt_dir / f"{pred_path.stem}.hflt"
        if not gt_path.exists():
            raise ValueError(f"{gt_path}: no annotations for {pred_path.name}")
        pred = tensor_io.load_raster(pred_path)
        ann = tensor_io.load_tensor(gt_path)
        if ann.ndim != 3 or ann.shape[1:] != pred.shape:
            raise ValueError(
                f"{gt_path}: annotation dims {ann.shape} do not match "
                f"prediction dims {pred.shape} from {pred_path}")
        tol = args.tol if args.tol is not None else None
        curves.append(evaluation.pr_curve(pred, ann, mode=args.mode,
                                          tol_px=tol))
        names.append(pred_path.stem)
        inputs += [pred_path, gt_path]
    bench = evaluation.aggregate(curves)
    out = Path(args.out)
    out.write_text(
        "ods_f,ods_threshold,ois_f,ap\n"
        f"{bench.ods_f:.6f},{bench.ods_threshold:.6f},"
        f"{bench.ois_f:.6f},{bench.ap:.6f}\n", encoding="utf-8")
    curves_path = out.with_name(out.stem + "_curves.csv")
    with open(curves_path, "w", encoding="utf-8") as f:
        f.write("image,threshold,tp,fp,fn,precision,recall,f1\n")
        for name, c in zip(names, curves):
            for i, t in enumerate(c.thresholds):
                f.write(f"{name},{t:.6f},{c.tp[i]},{c.fp[i]},{c.fn[i]},"
                        f"{c.precision[i]:.6f},{c.recall[i]:.6f},"
                        f"{c.f1[i]:.6f}\n")
    _write_manifest(_manifest_beside(out), "eval", _options_of(args), inputs)


def _cmd_eval_sem(args) -> None:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    class_dirs = sorted(d for d in pred_dir.iterdir()
                        if d.is_dir() and d.name.startswith("class_"))
    if not class_dirs:
        raise ValueError(f"{pred_dir}: no class_<id> subdirectories")
    class_maps, class_gt, inputs = {}, {}, []
    for cdir in class_dirs:
        cls = int(cdir.name.split("_", 1)[1])
        maps, gts = [], []
        for pred_path in _pred_files(cdir):
            gt_path = gt_dir / cdir.name / f"{pred_path.stem}.hflt"
            if not gt_path.exists():
                raise ValueError(f"{gt_path}: missing ground truth")
            pred = tensor_io.load_raster(pred_path)
            ann = tensor_io.load_tensor(gt_path)
            if ann.ndim == 2:
                ann = ann[None]
            if ann.shape[1:] != pred.shape:
                raise ValueError(
                    f"{gt_path}: dims {ann.shape} do not match {pred.shape} "
                    f"from {pred_path}")
            maps.append(pred)
            gts.append(ann)
            inputs += [pred_path, gt_path]
        class_maps[cls] = maps
        class_gt[cls] = gts
    report = evaluation.semantic_pr(class_maps, class_gt, tol_px=args.tol)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("class,mf,ap\n")
        for cls in sorted(report.per_class):
            mf, ap = report.per_class[cls]
            f.write(f"{cls},{mf:.6f},{ap:.6f}\n")
        f.write(f"mean,{report.mean_mf:.6f},{report.mean_ap:.6f}\n")
    _write_manifest(_manifest_beside(Path(args.out)), "eval-sem",
                    _options_of(args), inputs)


def _cmd_eval_iou(args) -> None:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds, gts, inputs = [], [], []
    for pred_path in _pred_files(pred_dir):
        gt_path = gt_dir / f"{pred_path.stem}.hflt"
        if not gt_path.exists():
            raise ValueError(f"{gt_path}: missing ground truth")
        pred = tensor_io.load_tensor(pred_path)
        gt = tensor_io.load_tensor(gt_path)
        if pred.shape != gt.shape:
            raise ValueError(
                f"{gt_path}: dims {gt.shape} do not match {pred.shape} "
                f"from {pred_path}")
        preds.append(np.rint(pred).astype(np.int64))
        gts.append(np.rint(gt).astype(np.int64))
        inputs += [pred_path, gt_path]
    mode = "per_pixel" if args.mode == "per-pixel" else "per_image"
    result = evaluation.segmentation_iou(preds, gts, mode=mode)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("class,iou\n")
        for cls in sorted(result["per_class"]):
            f.write(f"{cls},{result['per_class'][cls]:.6f}\n")
        f.write(f"mean,{result['mean']:.6f}\n")
    _write_manifest(_manifest_beside(Path(args.out)), "eval-iou",
                    _options_of(args), inputs)


def _load_boxes_csv(path: Path) -> np.ndarray:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("x0"):
            continue
        fields = line.split(",")
        rows.append([float(v) for v in fields[:4]])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def _cmd_eval_proposals(args) -> None:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    proposals, gt_boxes, inputs = [], [], []
    files = sorted(pred_dir.glob("*.csv"))
    if not files:
        raise ValueError(f"{pred_dir}: no proposal CSV files")
    for pred_path in files:
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            raise ValueError(f"{gt_path}: missing ground-truth boxes")
        proposals.append(_load_boxes_csv(pred_path))
        gt_boxes.append(_load_boxes_csv(gt_path))
        inputs += [pred_path, gt_path]
    thresholds = tuple(float(t) for t in args.iou_thresholds.split(","))
    result = evaluation.proposal_metrics(proposals, gt_boxes,
                                         iou_thresholds=thresholds,
                                         budget=args.budget)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("iou_threshold,auc,n_at_75,max_recall\n")
        for thr in thresholds:
            m = result[thr]
            n75 = "inf" if math.isinf(m.n_at_75) else f"{m.n_at_75:.0f}"
            f.write(f"{thr:.6f},{m.auc:.6f},{n75},{m.max_recall:.6f}\n")
    _write_manifest(_manifest_beside(Path(args.out)), "eval-proposals",
                    _options_of(args), inputs)


def _cmd_spectral(args) -> None:
    vals = tensor_io.load_raster(args.boundary)
    channels = spectral.boundary_embedding(
        vals, k=args.k, radius=args.radius, sigma_frac=args.sigma_frac,
        sigma=args.sigma, decimate_max=args.decimate_max,
        drop_trivial=args.drop_trivial, metric=args.metric, seed=args.seed,
        jobs=args.jobs)
    tensor_io.save_tensor(channels, args.out)
    _write_manifest(_manifest_beside(Path(args.out)), "spectral",
                    _options_of(args), [Path(args.boundary)])


def _cmd_label(args) -> None:
    from . import semlabel

    bvals = tensor_io.load_raster(args.boundary)
    inputs = [Path(args.boundary)]
    if (args.probs is None) == (args.seg is None):
        raise UsageError("need exactly one of --probs or --seg")
    if args.probs:
        probs = tensor_io.load_tensor(args.probs)
        labels, conf = semlabel.label_with_probs(bvals, probs, args.grid,
                                                 args.bthresh)
        inputs.append(Path(args.probs))
    else:
        seg = tensor_io.load_tensor(args.seg)
        if seg.shape != bvals.shape:
            raise ValueError(
                f"{args.seg}: dims {seg.shape} do not match boundary dims "
                f"{bvals.shape}")
        labels, conf = semlabel.label_with_segmentation(
            bvals, np.rint(seg).astype(np.int64), args.grid, args.bthresh)
        inputs.append(Path(args.seg))
    prefix = Path(args.out)
    tensor_io.save_tensor(labels.astype(np.float32),
                          prefix.with_suffix(".labels.hflt"))
    tensor_io.save_tensor(conf, prefix.with_suffix(".confidence.hflt"))
    _write_manifest(Path(str(prefix) + ".manifest"), "label",
                    _options_of(args), inputs)


# --- parser construction --------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="deepboundary",
                     description="Boundary detection from deep feature "
                                 "stacks, spectral embedding, benchmarks.")
    sub = parser.add_subparsers(dest="command")

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=handler)
        p.add_argument("--config", default=None,
                       help="key=value file; explicit flags override it")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("convert", _cmd_convert, "convert between PGM and HFLT rasters")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("candidates", _cmd_candidates, "select candidate contour points")
    p.add_argument("--image", default=None, help="luminance PGM")
    p.add_argument("--candidates", dest="candidates_map", default=None,
                   help="import an external boundary map instead")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--max", type=int, default=20000)
    p.add_argument("--out", required=True, help="output CSV (x,y,score)")
    p.add_argument("--annotations", default=None,
                   help="[K,H,W] HFLT annotations for agreement labels")
    p.add_argument("--agreement-tol", type=float, default=1.0)
    p.add_argument("--labels-out", default=None)

    p = add("describe", _cmd_describe, "interpolate per-candidate descriptors")
    p.add_argument("--stack", required=True, help="stack manifest path")
    p.add_argument("--candidates", required=True, help="candidate CSV")
    p.add_argument("--mode", choices=features.MODES, default="bilinear")
    p.add_argument("--out", required=True, help="output HFLT [n, channels]")

    p = add("train", _cmd_train, "train the agreement-regression head")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--holdout-frac", type=float, default=1 / 3)
    p.add_argument("--epochs-phase1", type=int, default=25)
    p.add_argument("--epochs-phase2", type=int, default=25)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--fn-threshold", type=float, default=0.5)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--hidden", type=int, default=1024)
    p.add_argument("--out", required=True, help="output head directory")

    p = add("probe", _cmd_probe, "ridge-regression weight-magnitude profile")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--lambda", dest="ridge_lambda", type=float, required=True)
    p.add_argument("--layers", default=None,
                   help="layer sidecar from describe, for per-layer means")
    p.add_argument("--out", required=True)

    p = add("detect", _cmd_detect, "full boundary-map pipeline")
    p.add_argument("--stack", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--candidates", dest="candidates_map", default=None)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--max", type=int, default=20000)
    p.add_argument("--mode", choices=features.MODES, default="bilinear")
    p.add_argument("--out-dims", type=int, nargs=2, default=None,
                   metavar=("H", "W"))
    p.add_argument("--out", required=True, help="output raster (.pgm or .hflt)")

    p = add("eval", _cmd_eval, "boundary benchmark (ODS/OIS/AP)")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--mode", choices=("any", "consensus"), default="any")
    p.add_argument("--tol", type=float, default=None,
                   help="match tolerance px; default 0.0075 * diagonal")
    p.add_argument("--out", required=True)

    p = add("eval-sem", _cmd_eval_sem, "semantic boundary MF/AP per class")
    p.add_argument("--pred-dir", required=True,
                   help="directory of class_<id>/ prediction subdirectories")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", required=True)

    p = add("eval-iou", _cmd_eval_iou, "segmentation IOU (per pixel or image)")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--mode", choices=("per-pixel", "per-image"),
                   default="per-pixel")
    p.add_argument("--out", required=True)

    p = add("eval-proposals", _cmd_eval_proposals,
            "ranked-proposal recall metrics")
    p.add_argument("--pred-dir", required=True, help="ranked box CSVs")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--iou-thresholds", default="0.65,0.7,0.75")
    p.add_argument("--budget", type=int, default=5000)
    p.add_argument("--out", required=True)

    p = add("spectral", _cmd_spectral, "normalized-cut eigenvector channels")
    p.add_argument("--boundary", required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--sigma-frac", type=float, default=spectral.SIGMA_FRACTION)
    p.add_argument("--sigma", type=float, default=None,
                   help="absolute sigma override")
    p.add_argument("--decimate-max", type=int, default=160)
    p.add_argument("--drop-trivial", action="store_true")
    p.add_argument("--metric", choices=("euclidean", "chebyshev"),
                   default="euclidean")
    p.add_argument("--out", required=True)

    p = add("label", _cmd_label, "attach class labels to boundary pixels")
    p.add_argument("--boundary", required=True)
    p.add_argument("--probs", default=None, help="[C+1,H,W] HFLT stack")
    p.add_argument("--seg", default=None, help="label raster HFLT")
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--bthresh", type=float, default=0.4)
    p.add_argument("--out", required=True, help="output prefix")

    return parser


def _read_config(path: Path) -> list[str]:
    """Turn a key=value file into CLI tokens, injected before user flags."""
    tokens = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if val.lower() in ("true", "false"):
            if val.lower() == "true":
                tokens.append(flag)
        else:
            tokens += [flag, val]
    return tokens


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            raise UsageError("no subcommand given")
        if argv[0] not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {argv[0]!r}")
        if "--config" in argv:
            cfg_path = argv[argv.index("--config") + 1]
            argv = [argv[0]] + _read_config(Path(cfg_path)) + argv[1:]
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (tensor_io.TensorIOError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (regressor.TrainingDivergedError, spectral.EigensolverError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
