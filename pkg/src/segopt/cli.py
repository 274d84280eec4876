"""Command-line entry point: ``segopt synth | targets | run | compare``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .functionals import save_histogram, save_moments
from .grid import bin_counts, load_image, load_mask, save_image, save_mask
from .trace import ensure_dir


def _cmd_synth(args):
    out = ensure_dir(args.out)
    if args.kind == "circle":
        img, init = bench.synth_circle_image(args.size, args.seed, args.noise, args.v0)
        save_image(out / "image.pgm", img)
        save_mask(out / "init.pgm", init)
        print(f"wrote {out / 'image.pgm'} and {out / 'init.pgm'}")
    else:
        img, gt = bench.synth_object_image(args.size, args.seed, channels=args.channels,
                                           noise=args.noise or 25.0)
        name = "image.pgm" if img.ndim == 2 else "image.ppm"
        save_image(out / name, img)
        save_mask(out / "gt.pgm", gt)
        print(f"wrote {out / name} and {out / 'gt.pgm'}")


def _cmd_targets(args):
    img = load_image(args.image)
    out = ensure_dir(args.out)
    if args.ellipse:
        e = bench.EllipseSpec.parse(args.ellipse)
        moments, fg, bg = bench.targets_from_ellipse(e, img, args.bins, args.order)
        save_moments(out / "moments.txt", moments)
        save_histogram(out / "fg_hist.txt", fg)
        save_histogram(out / "bg_hist.txt", bg)
        print(f"wrote moments.txt, fg_hist.txt, bg_hist.txt to {out}")
    else:
        gt = load_mask(args.gt)
        hist = bin_counts(img, gt, args.bins)
        save_histogram(out / "target_counts.txt", hist)
        save_histogram(out / "target_dist.txt", hist.normalize())
        save_moments(out / "moments.txt", bench.moments_of(gt, args.order))
        print(f"wrote target_counts.txt, target_dist.txt, moments.txt to {out}")


def _cmd_run(args, overrides):
    settings = bench.read_config(args.config) if args.config else {}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    cfg = bench.ExperimentConfig.from_mapping(settings)
    summary, _ = bench.run_experiment(cfg)
    for row in summary:
        print(f"{row['solver']:>17} param={row['param']:<8g} {row['status']:<9} "
              f"iters={row['iterations']:<6} evals={row['evaluations']:<6} "
              f"E_crofton={row['E_crofton']:.6g} E_cont={row['E_continuous']:.6g} "
              f"area={row['area']} iso={row['isoperimetric']:.3f} cpu_ms={row['cpu_ms']:.0f}")
    print(f"summary: {Path(cfg.out) / 'summary.csv'}")


def _cmd_compare(args):
    a = bench.read_summary(args.summary_a)
    b = bench.read_summary(args.summary_b)
    report = bench.compare(a, b)
    text = report.to_text()
    print(text)
    if args.out:
        out = ensure_dir(args.out)
        (out / "comparison.txt").write_text(text + "\n")
        report.write_csv(out / "comparison.csv")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="segopt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic test image")
    s.add_argument("--kind", choices=("circle", "object"), default="circle")
    s.add_argument("--size", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--v0", type=float, default=2000.0)
    s.add_argument("--channels", type=int, choices=(1, 3), default=1)
    s.add_argument("--out", default="synth")

    t = sub.add_parser("targets", help="compute moment and histogram targets")
    t.add_argument("--image", required=True)
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--ellipse", help="cx,cy,a,b[,theta]")
    g.add_argument("--gt", help="ground-truth mask (PGM)")
    t.add_argument("--bins", type=int, default=100)
    t.add_argument("--order", type=int, default=2)
    t.add_argument("--out", default="targets")

    r = sub.add_parser("run", help="run a solver sweep from a key=value config")
    r.add_argument("--config")
    for key in bench.ExperimentConfig.keys():
        r.add_argument("--" + key.replace("_", "-"), dest=key, default=None)

    c = sub.add_parser("compare", help="compare two summary.csv files")
    c.add_argument("summary_a")
    c.add_argument("summary_b")
    c.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        if args.command == "synth":
            _cmd_synth(args)
        elif args.command == "targets":
            _cmd_targets(args)
        elif args.command == "run":
            overrides = {k: getattr(args, k) for k in bench.ExperimentConfig.keys()}
            _cmd_run(args, overrides)
        else:
            _cmd_compare(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"segopt: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
