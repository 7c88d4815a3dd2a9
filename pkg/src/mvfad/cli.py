"""Command-line interface: synth, render, train, eval, infer, gradcheck, metrics."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import data_root, discover_samples, load_point_grid, load_sample
from .estimator import MultiViewAnomalyDetector
from .geometry import DEFAULT_VIEW_ANGLES, fit_camera, rotation_matrix, view_grid
from .imgio import load_image, load_mask, save_image, save_map16, save_mask
from .metrics import aupr, aupro, auroc, p_auroc
from .rendering import ViewProjection
from .synthesis import PerlinParams, procedural_texture, synthesize_anomaly
from .training import GRAD_CHECK_COMPONENTS, grad_check

__all__ = ["main"]


def _add_synth(sub):
    p = sub.add_parser("synth", help="synthesize an anomalous image from a normal sample")
    p.add_argument("--image", required=True, help="normal RGB image (PNG/PPM)")
    p.add_argument("--grid", required=True, help="point-grid file (.pcg); depth gates the mask")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source-image", help="anomaly texture image; default is procedural noise")
    p.add_argument("--source-dir", help="directory of anomaly textures, picked by seed")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--periods", type=int, nargs=2, default=(4, 4), metavar=("PX", "PY"))
    p.add_argument("--octaves", type=int, default=2)
    p.add_argument("--persistence", type=float, default=0.5)
    p.set_defaults(func=_run_synth)


def _run_synth(args) -> int:
    image = load_image(args.image)
    grid = load_point_grid(args.grid)
    if (grid.height, grid.width) != image.shape[:2]:
        raise ValueError(
            f"grid {grid.height}x{grid.width} does not match image {image.shape[:2]}"
        )
    depth = np.where(grid.valid, grid.points[..., 2], 0.0)
    h, w = image.shape[:2]
    if args.source_image:
        source = _fit_texture(load_image(args.source_image), h, w)
    elif args.source_dir:
        files = sorted(p for p in Path(args.source_dir).iterdir()
                       if p.suffix in (".png", ".ppm", ".jpg", ".jpeg"))
        if not files:
            raise ValueError(f"no texture images in {args.source_dir}")
        pick = np.random.default_rng(args.seed).integers(len(files))
        source = _fit_texture(load_image(files[pick]), h, w)
    else:
        source = procedural_texture(h, w, args.seed)

    params = PerlinParams(grid_periods=tuple(args.periods), octaves=args.octaves,
                          persistence=args.persistence, threshold=args.threshold)
    sample = synthesize_anomaly(image, depth, source, params, args.seed)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "x_minus.png", sample.x_minus)
    save_mask(out / "mask.pgm", sample.mask)
    meta = {
        "seed": sample.seed,
        "beta": sample.beta,
        "degenerate": sample.degenerate,
        "params": {"grid_periods": list(params.grid_periods), "octaves": params.octaves,
                   "persistence": params.persistence, "threshold": params.threshold},
        "mask_pixels": int(sample.mask.sum()),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {out / 'x_minus.png'}, {out / 'mask.pgm'}, {out / 'meta.json'}")
    return 0


def _fit_texture(tex: np.ndarray, h: int, w: int) -> np.ndarray:
    from .data import resize_image

    if tex.shape[:2] == (h, w):
        return tex
    if h != w:
        raise ValueError("non-square texture resize is not supported")
    return resize_image(tex, h)


def _add_render(sub):
    p = sub.add_parser("render", help="render a textured point grid from the view grid")
    p.add_argument("--grid", required=True, help="point-grid file (.pcg)")
    p.add_argument("--texture", required=True, help="grid-aligned RGB texture")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--canvas", type=int, default=240)
    p.add_argument("--angles", type=float, nargs=3, default=list(DEFAULT_VIEW_ANGLES),
                   metavar=("A1", "A2", "A3"), help="the three per-axis grid angles (radians)")
    p.add_argument("--views", type=int, nargs="+", help="1-based view indices (default: all 27)")
    p.add_argument("--format", choices=("png", "ppm"), default="png")
    p.add_argument("--background", type=float, nargs=3, default=(0.0, 0.0, 0.0),
                   metavar=("R", "G", "B"))
    p.set_defaults(func=_run_render)


def _run_render(args) -> int:
    grid = load_point_grid(args.grid)
    texture = load_image(args.texture)
    if (grid.height, grid.width) != texture.shape[:2]:
        raise ValueError("texture shape does not match point grid")
    angles_list = view_grid(tuple(args.angles))
    indices = args.views or list(range(1, len(angles_list) + 1))
    if len(set(indices)) != len(indices):
        raise ValueError(f"view indices must be distinct, got {indices}")
    for idx in indices:
        if not 1 <= idx <= len(angles_list):
            raise ValueError(f"view index {idx} out of range 1..{len(angles_list)}")

    centered = grid.centered()
    cam = fit_camera(centered, args.canvas, args.canvas)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ["# view_index theta_x theta_y theta_z"]
    for idx in indices:
        ang = angles_list[idx - 1]
        proj = ViewProjection(centered, rotation_matrix(ang), cam, args.canvas, args.canvas)
        view = proj.paint(texture, tuple(args.background))
        save_image(out / f"view_{idx:02d}.{args.format}", view.image)
        manifest.append(f"{idx} {ang.theta_x:.9g} {ang.theta_y:.9g} {ang.theta_z:.9g}")
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print(f"wrote {len(indices)} views and manifest.txt to {out}")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="fit the detector on K normal samples of one class")
    p.add_argument("--data", help="dataset root (default: $MVFAD_DATA_ROOT)")
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--shots", type=int, choices=(1, 2, 4), default=2)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of estimator parameter overrides")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--no-multiview", action="store_true",
                   help="disable both multi-view fusion branches (ablation)")
    p.set_defaults(func=_run_train)


def _estimator_from_args(args) -> MultiViewAnomalyDetector:
    params = {}
    if args.config:
        params.update(json.loads(Path(args.config).read_text()))
    params["k_shot"] = args.shots
    params["epochs"] = args.epochs
    params["seed"] = args.seed
    params["class_name"] = args.class_name
    if args.no_multiview:
        params["use_multiview"] = False
    return MultiViewAnomalyDetector(**params)


def _run_train(args) -> int:
    est = _estimator_from_args(args)
    root = data_root(args.data)
    splits = discover_samples(root, args.class_name)
    train = [s for s in splits["train"] if s.label == 0]
    if len(train) < est.k_shot:
        raise ValueError(f"need {est.k_shot} training samples, found {len(train)}")
    pairs = []
    for s in train[: est.k_shot]:
        image, grid, _ = load_sample(s, est.image_size)
        pairs.append((image, grid))
    est.fit(pairs)
    est.save(args.out)
    last = est.history_[-1]
    print(f"trained {est.k_shot}-shot for {est.epochs} epochs; "
          f"final losses: total={last.l_tot:.4f} contrastive={last.l_con:.4f} "
          f"segmentation={last.l_seg:.4f}")
    print(f"checkpoint written to {args.out}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--data", help="dataset root (default: $MVFAD_DATA_ROOT)")
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", required=True, help="JSON report output path")
    p.add_argument("--csv", help="optional per-sample CSV output path")
    p.add_argument("--fpr-limit", type=float, default=0.3)
    p.set_defaults(func=_run_eval)


def _run_eval(args) -> int:
    est = MultiViewAnomalyDetector.load(args.checkpoint)
    root = data_root(args.data)
    samples = discover_samples(root, args.class_name)["test"]
    if not samples:
        raise ValueError(f"no test samples for class {args.class_name}")
    pairs, labels, masks, names = [], [], [], []
    for s in samples:
        image, grid, mask = load_sample(s, est.image_size)
        pairs.append((image, grid))
        labels.append(s.label)
        masks.append(mask)
        names.append(s.name)
    report = est.evaluate(pairs, labels, masks=masks, names=names, fpr_limit=args.fpr_limit)
    Path(args.report).write_text(report.to_json())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print(f"I-AUROC={report.i_auroc:.4f} AUPR={report.aupr:.4f} "
          f"P-AUROC={report.p_auroc:.4f} AUPRO={report.aupro:.4f}"
          if report.p_auroc is not None and report.aupro is not None else
          f"I-AUROC={report.i_auroc:.4f} AUPR={report.aupr:.4f}")
    print(f"report written to {args.report}")
    return 0


def _add_infer(sub):
    p = sub.add_parser("infer", help="score one sample and write its anomaly map")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out-map", required=True, help="16-bit grayscale map (.png or .pgm)")
    p.add_argument("--json", dest="json_out", help="optional JSON score output")
    p.set_defaults(func=_run_infer)


def _run_infer(args) -> int:
    est = MultiViewAnomalyDetector.load(args.checkpoint)
    from .data import resize_image

    image = resize_image(load_image(args.image), est.image_size)
    from .data import resize_grid

    grid = resize_grid(load_point_grid(args.grid), est.image_size)
    score, s_map = est.score_one(image, grid)
    save_map16(args.out_map, s_map)
    payload = {"a_score": score.a_score, "s_plus": score.s_plus,
               "s_minus": score.s_minus, "max_map": score.max_map}
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload))
    print(f"anomaly map written to {args.out_map}")
    return 0


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="finite-difference check of every trainable component")
    p.add_argument("--all", action="store_true", help="check all components (default)")
    p.add_argument("--component", choices=GRAD_CHECK_COMPONENTS + ("encoder",))
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--dims", type=int, default=16, help="joint and feature width of the probe")
    p.add_argument("--n-patches", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_run_gradcheck)


def _run_gradcheck(args) -> int:
    components = (args.component,) if args.component else GRAD_CHECK_COMPONENTS
    worst = 0.0
    for comp in components:
        result = grad_check(comp, joint_dim=args.dims, feature_dim=args.dims,
                            n_patches=args.n_patches, eps=args.eps, seed=args.seed)
        if result.max_rel_err is None:
            print(f"{comp}: {result.message}")
            continue
        status = "ok" if result.passed else "FAIL"
        print(f"{comp}: max rel err {result.max_rel_err:.3e} "
              f"({result.checked_coords} coords) {status}")
        worst = max(worst, result.max_rel_err)
    return 0 if worst <= 1e-4 else 1


def _add_metrics(sub):
    p = sub.add_parser("metrics", help="compute metrics from scores and optional map files")
    p.add_argument("--scores", required=True,
                   help="CSV with 'label' and 'score' (or 'a_score') columns")
    p.add_argument("--maps-dir", help="directory of anomaly maps (16-bit PNG/PGM)")
    p.add_argument("--masks-dir", help="directory of ground-truth masks, matching filenames")
    p.add_argument("--fpr-limit", type=float, default=0.3)
    p.set_defaults(func=_run_metrics)


def _run_metrics(args) -> int:
    labels, scores = [], []
    with open(args.scores, newline="") as fh:
        for row in csv.DictReader(fh):
            labels.append(int(row["label"]))
            scores.append(float(row.get("score") or row["a_score"]))
    result = {"i_auroc": auroc(scores, labels), "aupr": aupr(scores, labels)}
    if args.maps_dir and args.masks_dir:
        from .imgio import load_map16

        map_files = sorted(Path(args.maps_dir).iterdir())
        maps = [load_map16(p) for p in map_files]
        masks = [load_mask(Path(args.masks_dir) / p.name) for p in map_files]
        result["p_auroc"] = p_auroc(maps, masks)
        result["aupro"] = aupro(maps, masks, args.fpr_limit)
    print(json.dumps(result, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfad",
        description="Few-shot 3D anomaly classification and segmentation via "
                    "multi-view point-cloud rendering.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_render(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_infer(sub)
    _add_gradcheck(sub)
    _add_metrics(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report, do not traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
