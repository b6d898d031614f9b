"""Command-line surface: two-view matching, staged on-demand matching,
synthetic parameter sweeps, ground-truth evaluation, and overlays.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 no geometry found.
Deterministic output (stdout and files) for a fixed seed; timing goes to
stderr, except the time_ms column of eval/sweep reports.
"""

import argparse
import sys
import time
from pathlib import Path

from .frames import DETECTORS
from .image import load_image, save_rgb
from .matcher import FIRST_GEOM_INCONSISTENT, SECOND_NEAREST
from .overlay import render_match_overlay
from .pipeline import (DEFAULT_THETA_M, ModsStage, default_stages,
                       match_single, run_mods)
from .sweeps import (DEFAULT_LATITUDES, SweepSpec, report_to_csv,
                     run_scale_sweep, run_tilt_sweep)
from .synthesis import PRESETS, SynthesisConfig, enumerate_views, get_preset
from .verify import (FUNDAMENTAL, HOMOGRAPHY, load_homography,
                     normalize_homography, save_homography,
                     score_against_ground_truth)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NO_GEOMETRY = 3

CORR_CSV_HEADER = "x1,y1,x2,y2,ratio,duplicate_count,detector"
EVAL_CSV_HEADER = ("correct_inliers,inliers,correct_matches,tentatives,"
                   "correct_pct,regions1,regions2,time_ms")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config_file(path):
    """Flat key = value format; sets are comma lists.

    Keys: detector, scales, tilts, delta_phi_base, sigma_base.
    """
    kv = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    detector = kv.pop("detector", None)
    def floats(s):
        return tuple(float(x) for x in s.split(",") if x.strip())
    cfg = SynthesisConfig(
        scales=floats(kv.pop("scales", "1")),
        tilts=floats(kv.pop("tilts", "1")),
        delta_phi_base=float(kv.pop("delta_phi_base", "360")),
        sigma_base=float(kv.pop("sigma_base", "0.8")))
    if kv:
        raise ValueError(f"unknown config keys: {sorted(kv)}")
    return detector, cfg


def resolve_config(args):
    if getattr(args, "preset", None):
        det, cfg = get_preset(args.preset)
        name = args.preset
    elif getattr(args, "config", None):
        det, cfg = parse_config_file(args.config)
        name = Path(args.config).name
    else:
        raise UsageError("one of --preset or --config is required")
    if getattr(args, "detector", None):
        det = args.detector
    if det is None:
        raise UsageError("config file has no detector; pass --detector")
    if det not in DETECTORS:
        raise UsageError(f"unknown detector {det!r}")
    return name, det, cfg


def _fmt_set(vals):
    return ",".join(f"{v:g}" for v in vals)


def echo_config(name, det, cfg, extra=""):
    n_views = len(enumerate_views(cfg))
    print(f"config {name}: detector={det} scales={_fmt_set(cfg.scales)} "
          f"tilts={_fmt_set(cfg.tilts)} dphi_base={cfg.delta_phi_base:g} "
          f"sigma_base={cfg.sigma_base:g} views={n_views}{extra}")


def correspondences_to_csv(tcs):
    lines = [CORR_CSV_HEADER]
    for t in tcs:
        lines.append(f"{t.frame1.x!r},{t.frame1.y!r},{t.frame2.x!r},"
                     f"{t.frame2.y!r},{t.ratio!r},{t.duplicate_count},"
                     f"{t.frame1.detector}")
    return "\n".join(lines) + "\n"


def _strategy_kind(args):
    return (SECOND_NEAREST if args.strategy == "second-nearest"
            else FIRST_GEOM_INCONSISTENT)


def _write(path, text):
    Path(path).write_text(text)


def _result_summary(res):
    n_inl = res.geometry.n_inliers if res.geometry is not None else 0
    print(f"stage_reached={res.stage_reached} tentatives={len(res.correspondences)} "
          f"inliers={n_inl} regions1={res.regions1} regions2={res.regions2}")
    if res.geometry is not None:
        m = normalize_homography(res.geometry.M) \
            if res.geometry.model == HOMOGRAPHY else res.geometry.M
        for row in m:
            print(" ".join(repr(float(v)) for v in row))


def _emit_outputs(args, res, img1, img2):
    if args.out_csv:
        _write(args.out_csv, correspondences_to_csv(res.correspondences))
    if args.out_h and res.geometry is not None:
        save_homography(args.out_h, res.geometry.M)
    if args.overlay:
        h_gt = load_homography(args.gt) if getattr(args, "gt", None) else None
        save_rgb(args.overlay, render_match_overlay(img1, img2, res, h_gt))


def _timing_stderr(res):
    totals = res.phase_totals()
    total = sum(totals.values()) or 1.0
    parts = " ".join(f"{k}={v * 1000.0:.1f}ms({100.0 * v / total:.0f}%)"
                     for k, v in totals.items())
    print(f"timing: {parts}", file=sys.stderr)


def cmd_presets(args):
    for name in PRESETS:
        det, cfg = PRESETS[name]
        echo_config(name, det, cfg)
    return EXIT_OK


def cmd_match(args):
    name, det, cfg = resolve_config(args)
    echo_config(name, det, cfg, extra=f" strategy={args.strategy} seed={args.seed}")
    img1 = load_image(args.image1)
    img2 = load_image(args.image2)
    res = match_single(img1, img2, det, cfg, model=args.model, seed=args.seed,
                       ransac_threshold=args.ransac_threshold,
                       strategy_kind=_strategy_kind(args),
                       root=not args.plain_sift, label=name)
    _result_summary(res)
    _emit_outputs(args, res, img1, img2)
    _timing_stderr(res)
    return EXIT_OK if res.geometry is not None else EXIT_NO_GEOMETRY


def cmd_mods(args):
    if args.steps:
        stages = [ModsStage(*get_preset(p), label=p)
                  for p in args.steps.split(",")]
    else:
        stages = default_stages()
    for st in stages:
        echo_config(st.label, st.detector, st.config)
    print(f"theta_m={args.theta_m} s_max={args.s_max or len(stages)} "
          f"model={args.model} seed={args.seed}")
    img1 = load_image(args.image1)
    img2 = load_image(args.image2)
    res = run_mods(img1, img2, stages, theta_m=args.theta_m, s_max=args.s_max,
                   model=args.model, seed=args.seed,
                   ransac_threshold=args.ransac_threshold,
                   strategy_kind=_strategy_kind(args),
                   root=not args.plain_sift)
    _result_summary(res)
    _emit_outputs(args, res, img1, img2)
    _timing_stderr(res)
    for label, rec in zip(res.stage_labels, res.per_stage_timing):
        line = " ".join(f"{k}={v * 1000.0:.1f}ms" for k, v in rec.items())
        print(f"stage {label}: {line}", file=sys.stderr)
    return EXIT_OK if res.geometry is not None else EXIT_NO_GEOMETRY


def cmd_eval(args):
    name, det, cfg = resolve_config(args)
    echo_config(name, det, cfg, extra=f" strategy={args.strategy} seed={args.seed}")
    img1 = load_image(args.image1)
    img2 = load_image(args.image2)
    h_gt = load_homography(args.gt)
    t0 = time.perf_counter()
    res = match_single(img1, img2, det, cfg, model=HOMOGRAPHY, seed=args.seed,
                       ransac_threshold=args.ransac_threshold,
                       strategy_kind=_strategy_kind(args),
                       root=not args.plain_sift, label=name)
    dt_ms = (time.perf_counter() - t0) * 1000.0
    score = score_against_ground_truth(res.geometry, res.correspondences,
                                       h_gt, tol=args.tol)
    row = (f"{score['correct_inliers']},{score['inliers']},"
           f"{score['correct_matches']},{score['tentatives']},"
           f"{score['correct_pct']!r},{res.regions1},{res.regions2},"
           f"{dt_ms!r}")
    text = EVAL_CSV_HEADER + "\n" + row + "\n"
    print(text, end="")
    if args.out:
        _write(args.out, text)
    return EXIT_OK


def _sweep_common(args, scale=False):
    configs = []
    for p in args.presets.split(","):
        det, cfg = get_preset(p.strip())
        configs.append((p.strip(), det, cfg))
    for name, det, cfg in configs:
        echo_config(name, det, cfg)
    kw = dict(configs=tuple(configs), n_images=args.n_images,
              quantile=args.quantile, seed=args.seed,
              strategy=_strategy_kind(args))
    if scale:
        factors = tuple(float(v) for v in args.factors.split(","))
        spec = SweepSpec(latitudes=(), scale_factors=factors, **kw)
        report = run_scale_sweep(spec, args.images)
    else:
        lats = tuple(float(v) for v in args.latitudes.split(","))
        spec = SweepSpec(latitudes=lats, **kw)
        report = run_tilt_sweep(spec, args.images)
    text = report_to_csv(report, include_timing=not args.no_timing)
    print(text, end="")
    if args.out:
        _write(args.out, text)
    return EXIT_OK


def cmd_sweep_tilt(args):
    return _sweep_common(args, scale=False)


def cmd_sweep_scale(args):
    return _sweep_common(args, scale=True)


def _add_match_opts(p, strategy_default=FIRST_GEOM_INCONSISTENT):
    p.add_argument("--preset", help="named detector+synthesis configuration")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--detector", choices=DETECTORS,
                   help="override the config's detector")
    p.add_argument("--strategy", default=strategy_default,
                   choices=[FIRST_GEOM_INCONSISTENT, SECOND_NEAREST])
    p.add_argument("--model", default=HOMOGRAPHY,
                   choices=[HOMOGRAPHY, FUNDAMENTAL])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ransac-threshold", type=float, default=2.0)
    p.add_argument("--plain-sift", action="store_true",
                   help="SIFT L2 descriptors instead of RootSIFT")


def _add_output_opts(p):
    p.add_argument("--out-csv", help="write the correspondence CSV here")
    p.add_argument("--out-h", help="write the estimated 3x3 matrix here")
    p.add_argument("--overlay", help="write a side-by-side PNG here")
    p.add_argument("--gt", help="3x3 ground-truth file for the overlay")


def build_parser():
    top = _Parser(prog="mods", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list named configurations")
    p.set_defaults(fn=cmd_presets)

    p = sub.add_parser("match", help="two-view matching, one configuration")
    p.add_argument("image1")
    p.add_argument("image2")
    _add_match_opts(p)
    _add_output_opts(p)
    p.set_defaults(fn=cmd_match)

    p = sub.add_parser("mods", help="staged on-demand matching")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--steps", help="comma list of stage presets")
    p.add_argument("--theta-m", type=int, default=DEFAULT_THETA_M,
                   help="stop once this many inliers are verified")
    p.add_argument("--s-max", type=int, default=None)
    _add_match_opts(p)
    _add_output_opts(p)
    p.set_defaults(fn=cmd_mods)

    p = sub.add_parser("eval", help="score a pair against a known homography")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("gt", help="3x3 ground-truth homography file")
    p.add_argument("--tol", type=float, default=3.0,
                   help="pixel tolerance for a correct correspondence")
    p.add_argument("--out", help="write the score CSV here")
    _add_match_opts(p)
    p.set_defaults(fn=cmd_eval)

    for name, fn, extra in (("sweep-tilt", cmd_sweep_tilt, "latitudes"),
                            ("sweep-scale", cmd_sweep_scale, "factors")):
        p = sub.add_parser(name, help=f"synthetic {extra} sweep over an image directory")
        p.add_argument("--images", required=True)
        p.add_argument("--presets", required=True,
                       help="comma list of configuration presets")
        if extra == "latitudes":
            p.add_argument("--latitudes",
                           default=",".join(f"{v:g}" for v in DEFAULT_LATITUDES))
        else:
            p.add_argument("--factors", default="1,2,3,4,5,6,7,8,9")
        p.add_argument("--n-images", type=int, default=10)
        p.add_argument("--quantile", type=float, default=0.04)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-timing", action="store_true",
                       help="omit the volatile time_ms column")
        p.add_argument("--out", help="write the report CSV here")
        p.add_argument("--strategy", default=FIRST_GEOM_INCONSISTENT,
                       choices=[FIRST_GEOM_INCONSISTENT, SECOND_NEAREST])
        p.set_defaults(fn=fn)

    return top


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
