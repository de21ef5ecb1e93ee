"""Command-line entry point: ``slameval {eval,run,report,simulate}``."""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from pathlib import Path

from . import __version__
from .datasets import correlate_windows, load_manifest, load_trajectory, load_windows
from .errors import SlamEvalError
from .geometry import AssociationPolicy, associate, trajectory_length
from .harness.runner import (RESTART_DISCARD, RESTART_RESUME, load_sequences, run_lifelong,
                             run_repeated)
from .harness.simulators import COMMON_PARAMS, MODELS, parse_sim_spec, simulator_factory
from .harness.sut import SubprocessSut
from .metrics import AlignMode, CrtMode, RpeDelta, ate, normalized_ate_rmse, rpe
from .report import (build_document, comparison_table, dumps, frame_rate_table, read_document,
                     run_entry, series_rows, write_document, write_plot_data, write_series)

log = logging.getLogger("slameval")


def _add_metric_flags(p):
    p.add_argument("--max-time-diff", type=float, default=0.02,
                   help="association tolerance in seconds (default 0.02)")
    p.add_argument("--association", choices=["nearest", "interpolate"], default="nearest")
    p.add_argument("--align", choices=[m.value for m in AlignMode], default="se3")
    p.add_argument("--rpe-delta", default="1s",
                   help="RPE interval: seconds ('1s', '0.5') or frames ('1f')")


def _metric_opts(args):
    return dict(
        policy=AssociationPolicy(args.max_time_diff, args.association),
        mode=AlignMode(args.align),
        rpe_delta=RpeDelta.parse(args.rpe_delta),
    )


def cmd_eval(args):
    est = load_trajectory(args.est, args.est_format, strict=not args.lenient)
    gt = load_trajectory(args.gt, args.gt_format, strict=not args.lenient)
    opts = _metric_opts(args)
    matched = associate(est, gt, opts["policy"])
    a = ate(matched, opts["mode"])
    r = rpe(matched, opts["rpe_delta"])
    length = trajectory_length(gt)
    entry = {
        "run": 0, "sequence": Path(args.gt).stem,
        "exit": {"kind": "completed", "frame": None}, "restarts": 0, "failures": 0,
        "delivered_frames": None,
        "ate": a.summary(), "rpe": r.summary(), "crt": None,
        "normalized_ate": normalized_ate_rmse(a.rmse, length) if length > 0 else None,
        "frame_rate": None, "error": None,
        "association": {"pairs": len(matched), "unmatched_est": matched.unmatched_est,
                        "unmatched_gt": matched.unmatched_gt},
        "alignment": a.alignment_used.to_dict(),
    }
    doc = build_document("eval", {
        "sut": Path(args.est).stem, "sequence": Path(args.gt).stem, "seed": None,
        "repetitions": 1, "platform": args.platform, "gt_length": length,
        "max_time_diff": args.max_time_diff, "association": args.association,
        "align": args.align, "rpe_delta": str(opts["rpe_delta"]),
    }, [entry])
    if args.output:
        write_document(doc, args.output)
    else:
        sys.stdout.write(dumps(doc))
    return 0


def _sut_factory(spec, gt_by_seq, windows, seed):
    if spec.startswith("cmd:"):
        command = spec[4:]
        return lambda run_index=0: SubprocessSut(command), spec
    if spec.startswith("sim:"):
        spec = spec[4:]
    cfg = parse_sim_spec(spec, windows)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return simulator_factory(cfg, gt_by_seq), f"sim:{cfg.model}"


def cmd_run(args):
    manifest = load_manifest(args.manifest)
    windows_dir = None
    shared_windows = None
    if args.windows:
        wpath = Path(args.windows)
        if wpath.is_dir():
            windows_dir = wpath
        else:
            shared_windows = load_windows(wpath)
    seqs = load_sequences(manifest, windows_dir)
    if shared_windows is not None:
        for s in seqs:
            s.windows = list(shared_windows)
    gt_by_seq = {s.id: s.gt for s in seqs}
    factory, sut_name = _sut_factory(args.sut, gt_by_seq, {s.id: s.windows for s in seqs},
                                     args.seed)
    out_dir = Path(args.out_dir)
    opts = _metric_opts(args)
    common = dict(timeout=args.timeout, monitor=not args.no_monitor, **opts)
    safe_sut = sut_name.replace(":", "_").replace("/", "_").replace(" ", "_")
    meta = {"sut": sut_name, "seed": args.seed, "platform": args.platform,
            "restart_policy": args.restart_policy}
    written = []

    if args.lifelong:
        res = run_lifelong(factory, seqs, reset_between=args.reset_between,
                           restart_policy=args.restart_policy, crt_mode=CrtMode(args.crt_mode),
                           **common)
        runs, win_rows = [], []
        for k, o in enumerate(res.sequences):
            sp = out_dir / f"{safe_sut}__lifelong__{o.sequence.id}.series.csv"
            write_series(sp, series_rows(o.result.record, o.result.series))
            runs.append(run_entry(k, o.metrics, o.result.record, o.sequence.id, sp.name))
            if o.sequence.windows and o.result.series is not None and len(o.result.series):
                for row in correlate_windows(o.result.series, o.sequence.windows):
                    win_rows.append({"sequence": o.sequence.id, **row})
        doc = build_document("lifelong", {**meta, "sequence": "lifelong", "repetitions": 1,
                                          "reset_between": args.reset_between,
                                          "sequences": [s.id for s in seqs]}, runs, win_rows)
        path = out_dir / f"{safe_sut}__lifelong.json"
        write_document(doc, path)
        written.append(path)
    else:
        for seq in seqs:
            rep = run_repeated(factory, seq.schedule, seq.gt, args.repeat, workers=args.workers,
                               crt_threshold=seq.crt_threshold,
                               restart_policy=args.restart_policy, **common)
            runs, win_rows = [], []
            for k, (r, m) in enumerate(zip(rep.runs, rep.metrics)):
                sp = out_dir / f"{safe_sut}__{seq.id}__run{k:03d}.series.csv"
                write_series(sp, series_rows(r.record, r.series))
                runs.append(run_entry(k, m, r.record, seq.id, sp.name))
                if seq.windows and r.series is not None and len(r.series):
                    for row in correlate_windows(r.series, seq.windows):
                        win_rows.append({"sequence": seq.id, "run": k, **row})
            doc = build_document("repeated", {**meta, "sequence": seq.id,
                                              "repetitions": args.repeat,
                                              "environment": seq.environment,
                                              "gt_length": trajectory_length(seq.gt)},
                                 runs, win_rows)
            path = out_dir / f"{safe_sut}__{seq.id}.json"
            write_document(doc, path)
            written.append(path)
    for p in written:
        print(p)
    return 0


def cmd_report(args):
    docs = [read_document(p) for p in args.results]
    sys.stdout.write(comparison_table(docs))
    sys.stdout.write("\n")
    sys.stdout.write(frame_rate_table(docs))
    if args.out_dir:
        write_plot_data(docs, args.results, args.out_dir)
    return 0


def cmd_simulate(args):
    for name, desc in MODELS.items():
        print(f"{name:24s} {desc}")
    print(COMMON_PARAMS)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="slameval", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="batch ATE/RPE of an estimate against ground truth")
    p.add_argument("est")
    p.add_argument("gt")
    p.add_argument("--est-format", choices=["tum", "euroc"])
    p.add_argument("--gt-format", choices=["tum", "euroc"])
    p.add_argument("--lenient", action="store_true", help="skip malformed lines with warnings")
    p.add_argument("--platform", default=platform.node() or "local")
    p.add_argument("-o", "--output", help="write the document here instead of stdout")
    _add_metric_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run a SUT over the sequences of a manifest")
    p.add_argument("manifest")
    p.add_argument("--sut", required=True,
                   help="'sim:<model>[:k=v,...]' or 'cmd:<command line>'")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--lifelong", action="store_true")
    p.add_argument("--reset-between", action="store_true")
    p.add_argument("--windows", help="window sidecar file, or directory of <id>.windows.yaml")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--seed", type=int)
    p.add_argument("--timeout", type=float, default=30.0, help="per-frame timeout in seconds")
    p.add_argument("--restart-policy", choices=[RESTART_DISCARD, RESTART_RESUME],
                   default=RESTART_DISCARD)
    p.add_argument("--crt-mode", choices=[m.value for m in CrtMode], default="frame_count")
    p.add_argument("--no-monitor", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--platform", default=platform.node() or "local")
    _add_metric_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="compare result documents")
    p.add_argument("results", nargs="+")
    p.add_argument("--out-dir", help="also write plot-ready CSV files here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="list the built-in simulator models")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SlamEvalError as exc:
        print(f"slameval: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
