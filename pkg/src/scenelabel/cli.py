"""Command-line entry points.

``annotate serve`` hosts the HTTP service; ``annotate eval`` runs the
incremental-learning protocol; ``annotate parse`` dumps the parsed structure
of one frame; ``annotate synth`` writes synthetic frames with ground truth.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _cmd_serve(args):
    import uvicorn

    from .priors import load_model
    from .service import create_app, default_model

    model = load_model(args.model) if args.model else default_model()
    app = create_app(args.data, model=model, m=args.suggestions,
                     allow_new_categories=args.allow_new_categories)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def _cmd_eval(args):
    from .evalrun import format_report_table, record_to_scene, reports_to_csv, run_trials
    from .simgen import DEFAULT_SIZE_SPEC, GenParams, load_size_spec

    size_spec = load_size_spec(args.sizes) if args.sizes else DEFAULT_SIZE_SPEC
    params = GenParams(width=args.width, height=args.height,
                       count_range=(args.min_objects, args.max_objects),
                       occlusion_rate=args.occlusion, depth_noise=args.noise)
    provider = None
    bootstrap_graphs = None
    if args.dataset:
        from .rgbd_io import load_annotation, load_frame
        root = Path(args.dataset)
        dirs = sorted(p for p in root.iterdir()
                      if (p / "meta.json").exists()
                      and (p / "annotation.json").exists())
        need = args.bootstrap + args.trials * args.per_trial
        if len(dirs) < need:
            sys.exit(f"dataset has {len(dirs)} annotated frames; "
                     f"{need} required")
        scenes = [record_to_scene(load_frame(p), load_annotation(p / "annotation.json"))
                  for p in dirs[:need]]
        bootstrap_graphs = [s.gt_graph for s in scenes[:args.bootstrap]]
        trial_scenes = scenes[args.bootstrap:]
        provider = lambda idx: trial_scenes[idx]

    def progress(trial, k, total):
        print(f"\rtrial {trial}: scene {k}/{total}", end="", flush=True)

    reports, model = run_trials(
        params, n_trials=args.trials, per_trial=args.per_trial,
        bootstrap=args.bootstrap, m=args.suggestions, seed=args.seed,
        scene_provider=provider, bootstrap_graphs=bootstrap_graphs,
        progress=progress)
    print("\r" + " " * 40 + "\r", end="")
    print(format_report_table(reports))
    if args.csv:
        reports_to_csv(reports, args.csv)
        print(f"wrote {args.csv}")
    if args.save_model:
        from .priors import save_model
        save_model(model, args.save_model)
        print(f"wrote {args.save_model}")


def _cmd_parse(args):
    import numpy as np

    from .rgbd_io import decode_rle, load_annotation, load_frame
    from .scene_parse import ParseConfig, parse_scene
    from .segmentation import compute_normals, oversegment
    from .structure_graph import SGNode, build_graph

    frame = load_frame(args.frame)
    normals, valid = compute_normals(frame, window=5)
    seg = oversegment(frame, normals, valid)
    masks = []
    if args.masks:
        record = load_annotation(args.masks)
        masks = [decode_rle(o.mask_rle, frame.depth.shape)
                 for o in record.objects]
    parsed = parse_scene(frame, seg, normals, masks)
    nodes = [SGNode(id=k, cuboid=c) for k, c in enumerate(parsed.cuboids)]
    graph = build_graph(parsed.layout, nodes, ParseConfig())
    out = {
        "frame_id": frame.frame_id,
        "floor": parsed.layout.floor.to_dict(),
        "walls": [w.to_dict() for w in parsed.layout.walls],
        "n_segments": len(seg.segments),
        "graph": graph.to_dict(),
        "warnings": list(parsed.warnings),
    }
    with open(args.dump_structure, "w") as f:
        json.dump(out, f, indent=1)
    print(f"wrote {args.dump_structure} "
          f"({len(parsed.cuboids)} objects, {len(parsed.layout.walls)} walls)")


def _cmd_synth(args):
    from .rgbd_io import save_annotation, save_frame
    from .simgen import GenParams, generate_scene

    params = GenParams(width=args.width, height=args.height,
                       count_range=(args.min_objects, args.max_objects),
                       occlusion_rate=args.occlusion, depth_noise=args.noise)
    out = Path(args.out)
    for k in range(args.count):
        scene = generate_scene(params, seed=args.seed + k)
        frame_dir = out / scene.frame.frame_id
        save_frame(scene.frame, frame_dir)
        save_annotation(scene.gt_record, frame_dir / "annotation.json")
        print(f"wrote {frame_dir} ({len(scene.masks)} objects)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annotate",
        description="Interactive RGBD indoor-scene annotation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--data", required=True, help="directory of frame folders")
    p.add_argument("--model", default=None, help="prior model JSON")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--suggestions", type=int, default=6)
    p.add_argument("--allow-new-categories", action="store_true")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("eval", help="run the incremental-learning evaluation")
    p.add_argument("--trials", type=int, default=7)
    p.add_argument("--per-trial", type=int, default=18)
    p.add_argument("--bootstrap", type=int, default=10)
    p.add_argument("--suggestions", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--synthetic", action="store_true", default=True)
    src.add_argument("--dataset", default=None,
                     help="directory of frames with annotation.json ground truth")
    p.add_argument("--noise", type=float, default=0.003,
                   help="depth noise coefficient (sigma = noise * z^2)")
    p.add_argument("--occlusion", type=float, default=0.3)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--min-objects", type=int, default=2)
    p.add_argument("--max-objects", type=int, default=6)
    p.add_argument("--sizes", default=None, help="size catalog JSON")
    p.add_argument("--csv", default=None)
    p.add_argument("--save-model", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("parse", help="parse one frame and dump its structure")
    p.add_argument("frame", help="frame directory")
    p.add_argument("--dump-structure", required=True)
    p.add_argument("--masks", default=None,
                   help="annotation JSON supplying object masks")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("synth", help="generate synthetic frames with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--min-objects", type=int, default=2)
    p.add_argument("--max-objects", type=int, default=6)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
