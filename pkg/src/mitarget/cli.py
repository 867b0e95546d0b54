"""Command-line interface.

Errors are reported on stderr as a single line ``mitarget: <category>: <detail>``
with exit status 2 for input problems and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import io
from .background import fit_background, fit_background_from_bags
from .errors import InputError, MitargetError
from .evaluation import detection_map, grid_search_2d, roc
from .evolution import run
from .objective import BagObjective
from .synth import generate_scene, sample_bags

log = logging.getLogger("mitarget")


def _scene(args, cfg):
    scene = io.load_scene(args.scene, getattr(args, "rows", None), getattr(args, "cols", None))
    return io.band_average(scene, cfg.band_average)


def _background(scene, bags, cfg):
    if cfg.background_source == "negative-bags":
        return fit_background_from_bags(bags, cfg.regularization)
    return fit_background(scene.pixels, cfg.regularization)


def cmd_generate(args, cfg) -> None:
    scene, truth = generate_scene(cfg.synthetic)
    bags = sample_bags(scene, truth, cfg.synthetic)
    io.save_scene(args.out_scene, scene)
    io.save_truth(args.out_truth, truth)
    io.save_bags(args.out_bags, bags)
    log.info("wrote %d x %d x %d scene, %d/%d bags", scene.rows, scene.cols, scene.bands,
             bags.n_positive, bags.n_negative)


def cmd_estimate(args, cfg) -> None:
    scene = _scene(args, cfg)
    bags = io.load_bags(args.bags, scene)
    model = _background(scene, bags, cfg)
    objective = BagObjective.matched_filter(model, bags, cfg.objective)
    result = run(objective, bags, cfg.ea)
    parts = objective.breakdown(result.best_signature)
    extra = {
        "seed": cfg.ea.seed,
        "n_pop": cfg.ea.n_pop,
        "n_iter": cfg.ea.n_iter,
        "background_mean": model.mean.tolist(),
        "positive_terms": list(parts.positive_terms),
        "negative_terms": list(parts.negative_terms),
        "argmax_pixels": list(parts.argmax_pixels),
    }
    io.save_result(args.out, result, extra)
    log.info("best objective %.6g after %d evaluations", result.best_objective, result.evaluations)


def cmd_detect(args, cfg) -> None:
    scene = _scene(args, cfg)
    doc = io.load_result(args.signature)
    signature = np.asarray(doc["best_signature"], dtype=np.float64)
    if signature.size != scene.bands:
        raise InputError(f"signature has {signature.size} bands, scene has {scene.bands}")
    model = fit_background(scene.pixels, cfg.regularization)
    io.save_map(args.out, detection_map(scene, model, signature))


def cmd_roc(args, cfg) -> None:
    dmap = io.load_map(args.map)
    truth = io.load_truth(args.truth)
    area = cfg.area_per_pixel if args.area is None else args.area
    max_far = cfg.max_far if args.max_far is None else args.max_far
    curve = roc(dmap, truth, area, max_far, halo=args.halo)
    io.save_roc_csv(args.out, curve)


def cmd_grid(args, cfg) -> None:
    scene = _scene(args, cfg)
    bags = io.load_bags(args.bags, scene)
    model = _background(scene, bags, cfg)
    lo, hi = args.bounds
    grid = grid_search_2d(model, bags, cfg.objective, bounds=((lo, hi), (lo, hi)), step=args.step)
    out_json = args.out_json or str(args.out) + ".json"
    io.save_grid(args.out, out_json, grid)
    log.info("grid argmax %s value %.6g", grid.argmax.tolist(), grid.argmax_value)


def cmd_validate(args, cfg) -> None:
    scene = _scene(args, cfg)
    bags = io.load_bags(args.bags, scene)
    print(json.dumps({"valid": True, "positive": bags.n_positive, "negative": bags.n_negative,
                      "bands": bags.bands}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mitarget", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scene=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        if scene:
            sp.add_argument("--scene", required=True)
            sp.add_argument("--rows", type=int, help="extent for CSV scenes")
            sp.add_argument("--cols", type=int, help="extent for CSV scenes")

    g = sub.add_parser("generate", help="write a synthetic scene, truth and bag spec")
    common(g, scene=False)
    g.add_argument("--out-scene", required=True)
    g.add_argument("--out-truth", required=True)
    g.add_argument("--out-bags", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="learn a target signature from bags")
    common(e)
    e.add_argument("--bags", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate)

    d = sub.add_parser("detect", help="matched-filter detection map for a learned signature")
    common(d)
    d.add_argument("--signature", required=True, help="result JSON from 'estimate'")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    r = sub.add_parser("roc", help="ROC table (threshold, far, pd) as CSV")
    common(r, scene=False)
    r.add_argument("--map", required=True)
    r.add_argument("--truth", required=True)
    r.add_argument("--area", type=float, help="area per pixel (m^2)")
    r.add_argument("--max-far", type=float, help="truncate at this false-alarm rate")
    r.add_argument("--halo", type=int, help="target halo radius in pixels")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_roc)

    gr = sub.add_parser("grid", help="exhaustive 2-D objective grid")
    common(gr)
    gr.add_argument("--bags", required=True)
    gr.add_argument("--bounds", type=float, nargs=2, default=(0.0, 11.0), metavar=("LO", "HI"))
    gr.add_argument("--step", type=float, default=0.01)
    gr.add_argument("--out", required=True)
    gr.add_argument("--out-json", help="default: <out>.json")
    gr.set_defaults(func=cmd_grid)

    v = sub.add_parser("validate", help="check a bag spec against a scene")
    common(v)
    v.add_argument("--bags", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = io.RunConfig.load(args.config, args.seed)
        args.func(args, cfg)
    except MitargetError as exc:
        print(f"mitarget: {exc.category}: {_oneline(exc)}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"mitarget: input-error: {_oneline(exc)}", file=sys.stderr)
        return 2
    return 0


def _oneline(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
