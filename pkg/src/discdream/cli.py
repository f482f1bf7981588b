"""Command-line entry points: dream, video, inspect (and logits for tooling)."""

import argparse
import json
import os
import sys

import numpy as np

from . import ops
from .dreaming import DreamConfig, dream, random_start
from .errors import DiscDreamError, UnknownLayerError
from .frames import BLACK, FrameTransform, VideoConfig, render_video
from .graph import TapSet, layer_names, parameter_shapes, truncated_forward_min_size
from .imageio import load_png, save_png
from .weights_io import load_weights, weights_digest


def _parse_layers(text):
    entries = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            name, w = item.rsplit(":", 1)
            entries.append((name, float(w)))
        else:
            entries.append((item, 1.0))
    return TapSet(tuple(entries))


def _parse_fill(text):
    parts = [float(p) for p in text.split(",")]
    return tuple(parts)


def _add_dream_flags(p):
    p.add_argument("--layers", help="comma-separated layer taps, e.g. b16.conv1 or b16.conv1:0.5,b8.conv1")
    p.add_argument("--norm", choices=("none", "count", "sqrt"), default="none")
    p.add_argument("--octaves", type=int, default=10)
    p.add_argument("--octave-scale", type=float, default=1.4)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument(
        "--resize-octaves",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="evaluate gradients at the graph's native resolution per octave",
    )
    p.add_argument("--image", help="starting PNG; omitted = seeded noise start")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    ap = argparse.ArgumentParser(prog="discdream", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dream", help="dream a single image")
    d.add_argument("--weights", help="DDRW weights file")
    d.add_argument("--out", default="dream.png")
    d.add_argument("--from-manifest", help="replay a previous run's manifest")
    _add_dream_flags(d)

    v = sub.add_parser("video", help="render an iterative frame sequence")
    v.add_argument("--weights", required=True)
    v.add_argument("--out-dir", required=True)
    _add_dream_flags(v)
    v.add_argument("--fps", type=int, default=30)
    v.add_argument("--duration", type=float, default=30.0)
    v.add_argument("--iterations-per-frame", type=int, default=10)
    v.add_argument("--zoom-px", type=int, default=0)
    v.add_argument("--rotate-deg", type=float, default=0.0)
    v.add_argument("--tx-px", type=int, default=0)
    v.add_argument("--ty-px", type=int, default=0)
    v.add_argument("--fill", type=_parse_fill, default=BLACK, help="r,g,b in [-1,1]")
    v.add_argument("--reverse", action="store_true", help="emit frames in reversed order")

    i = sub.add_parser("inspect", help="print the architecture of a weights file")
    i.add_argument("--weights", required=True)

    lg = sub.add_parser("logits", help="print the b4.out logit for a raw .npy image")
    lg.add_argument("--weights", required=True)
    lg.add_argument("--input", required=True, help=".npy float32 [1,C,R,R] image")
    return ap


def _load_start(args, cfg):
    if args.image:
        img = load_png(args.image)
        r = cfg.img_resolution
        if img.shape[2:] != (r, r):
            img = ops.bilinear_resize(img, r, r)
        return img, args.image
    return random_start(args.seed, cfg.img_channels, cfg.img_resolution, cfg.img_resolution), None


def _dream_config(args, taps):
    return DreamConfig(
        taps=taps,
        norm=args.norm,
        octaves=args.octaves,
        octave_scale=args.octave_scale,
        learning_rate=args.lr,
        iterations=args.iterations,
        resize_octaves=args.resize_octaves,
        seed=args.seed,
    )


def _dream_manifest(args, dcfg, start_image, digest, out):
    return {
        "command": "dream",
        "weights": args.weights,
        "weights_digest": digest,
        "seed": dcfg.seed,
        "start_image": start_image,
        "output": out,
        "config": {
            "layers": [list(e) for e in dcfg.taps.entries],
            "norm": dcfg.norm,
            "octaves": dcfg.octaves,
            "octave_scale": dcfg.octave_scale,
            "learning_rate": dcfg.learning_rate,
            "iterations": dcfg.iterations,
            "resize_octaves": dcfg.resize_octaves,
        },
    }


def _apply_manifest(args, path):
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    c = m["config"]
    args.weights = args.weights or m["weights"]
    args.layers = ",".join("%s:%g" % (n, w) for n, w in c["layers"])
    args.norm = c["norm"]
    args.octaves = c["octaves"]
    args.octave_scale = c["octave_scale"]
    args.lr = c["learning_rate"]
    args.iterations = c["iterations"]
    args.resize_octaves = c["resize_octaves"]
    args.seed = m["seed"]
    args.image = m["start_image"]
    return m


def cmd_dream(args):
    if args.from_manifest:
        _apply_manifest(args, args.from_manifest)
    if not args.weights:
        raise SystemExit(_usage_error("--weights is required"))
    if not args.layers:
        raise SystemExit(_usage_error("--layers is required"))
    cfg, g = load_weights(args.weights)
    taps = _parse_layers(args.layers)
    taps.validate(cfg)
    dcfg = _dream_config(args, taps)
    start, start_image = _load_start(args, cfg)
    result = dream(g, start, dcfg)
    save_png(result, args.out)
    digest = weights_digest(args.weights)
    manifest_path = os.path.splitext(args.out)[0] + ".manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(_dream_manifest(args, dcfg, start_image, digest, args.out), fh, sort_keys=True, indent=2)
    return 0


def cmd_video(args):
    if not args.layers:
        raise SystemExit(_usage_error("--layers is required"))
    cfg, g = load_weights(args.weights)
    taps = _parse_layers(args.layers)
    taps.validate(cfg)
    dcfg = _dream_config(args, taps)
    tf = FrameTransform(
        zoom_px=args.zoom_px,
        rotate_deg=args.rotate_deg,
        translate_px=(args.tx_px, args.ty_px),
        fill=args.fill,
    )
    vcfg = VideoConfig(
        fps=args.fps,
        duration_sec=args.duration,
        iterations_per_frame=args.iterations_per_frame,
        dream=dcfg,
        transform=tf,
        out_dir=args.out_dir,
        reverse=args.reverse,
    )
    start, _ = _load_start(args, cfg)
    total = render_video(g, start, vcfg, weights_digest=weights_digest(args.weights))
    print("wrote %d frames to %s" % (total, args.out_dir))
    return 0


def cmd_inspect(args):
    cfg, g = load_weights(args.weights)
    shapes = parameter_shapes(cfg)
    n_params = sum(int(np.prod(s)) for s in shapes.values())
    print("resolution:   %d" % cfg.img_resolution)
    print("img_channels: %d" % cfg.img_channels)
    print("channel_base: %d" % cfg.channel_base)
    print("channel_max:  %d" % cfg.channel_max)
    print("latent_dim:   %d" % cfg.latent_dim)
    print("blocks:       %d (%s)" % (cfg.num_blocks, ", ".join("b%d" % r for r in cfg.block_resolutions)))
    print("parameters:   %d" % n_params)
    print("b4.fc output width: %d" % cfg.latent_dim)
    print()
    print("%-16s %-8s %s" % ("layer", "min in", "parameter shapes"))
    for name in layer_names(cfg):
        mins = truncated_forward_min_size(TapSet.of([name]), cfg)
        pshapes = ", ".join(
            "%s%s" % (k.split(".")[-1], list(v)) for k, v in shapes.items() if k.startswith(name + ".")
        )
        print("%-16s %-8d %s" % (name, mins, pshapes))
    return 0


def cmd_logits(args):
    cfg, g = load_weights(args.weights)
    img = np.load(args.input).astype(np.float32)
    taps = TapSet.of(["b4.out"])
    acts = g.forward_with_taps(img, taps)
    print(json.dumps({"logit": float(acts["b4.out"][0, 0])}))
    return 0


def _usage_error(msg):
    print("error: %s" % msg, file=sys.stderr)
    return 2


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    handlers = {
        "dream": cmd_dream,
        "video": cmd_video,
        "inspect": cmd_inspect,
        "logits": cmd_logits,
    }
    try:
        return handlers[args.command](args)
    except UnknownLayerError as exc:
        return _usage_error(str(exc))
    except (DiscDreamError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
