"""Command line interface: generate, train, evaluate, detect, report."""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .core import NonFiniteError
from .embednet import CheckpointError, ModelParams, load_checkpoint
from .optflow import FlowCache, FlowError
from .retrieval import EVAL_MODES, build_index, detection, embed_queries, evaluate, write_results_csv
from .synthdata import DatasetError, SpecError, generate_dataset, load_dataset
from .training import STREAMS, StreamData, TrainingError, train_stream
from .training.weak import train_weak

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
RUN_DIR_ENV = "SKETCHVID_RUN_DIR"
MODE_ALIASES = {"app": "appearance", "appearance": "appearance", "motion": "motion",
                "rankfuse": "rankfuse", "concat": "concat"}

log = logging.getLogger("sketchvid")


class UsageError(Exception):
    pass


def _run_dir(args):
    d = args.run_dir or os.environ.get(RUN_DIR_ENV) or "runs"
    return Path(d)


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_data(args, cfg, split):
    ds = load_dataset(args.dataset)
    if ds.manifest.config_hash != cfg.generator.digest():
        log.warning("dataset was generated with a different generator config (%s vs %s)",
                    ds.manifest.config_hash, cfg.generator.digest())
    cache = FlowCache(Path(args.dataset) / "flows", cfg.flow)
    return StreamData(ds, split, cache, flow_length=cfg.training.flow_length,
                      max_flow=cfg.flow.max_displacement)


# ------------------------------------------------------------------ commands

def cmd_generate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out}: {exc}") from exc
    ds = generate_dataset(cfg.generator, cfg.sub_seed("generator"), out)
    cfg.save(out / "config.ini")
    counts = {s: len(ds.split(s)) for s in ("train", "val", "test")}
    pages = sum(len(ds.sketch(e.sequence_id).pages) for e in ds.entries)
    twins = sorted({e.twin.split(":")[0] for e in ds.entries if e.twin})
    print(f"clips: {len(ds.entries)}  sketches: {pages}  "
          f"splits: train={counts['train']} val={counts['val']} test={counts['test']}")
    for kind in twins:
        n = len({e.twin for e in ds.entries if e.twin and e.twin.startswith(kind)})
        print(f"{kind}-twin pairs: {n}")
    print(f"digest: {ds.digest()}")
    return EXIT_OK


def _stream_list(value):
    return list(STREAMS) if value == "both" else [value]


def cmd_train(args):
    cfg = load_config(args.config)
    run = _run_dir(args) / args.supervision
    run.mkdir(parents=True, exist_ok=True)
    cfg.save(run / "config.ini")
    data = _load_data(args, cfg, cfg.retrieval.train_split)
    tc = cfg.train_config()
    digest = cfg.digest()
    streams = _stream_list(args.stream)
    if args.supervision == "strong":
        for s in streams:
            params = ModelParams.create(tc.seed, flow_length=tc.flow_length, dtype=np.dtype(tc.dtype))
            res = train_stream(s, data, tc, params=params, out_dir=run, resume=args.resume, config_hash=digest)
            print(f"{s}: {len(res.trace)} iterations, epoch-mean L_t "
                  f"{res.epoch_means[0]:.4f} -> {res.epoch_means[-1]:.4f}; checkpoint {run / (s + '.ckpt')}")
    else:
        if args.resume:
            log.warning("weak training restarts its rounds; --resume applies to strong training")
        params = ModelParams.create(tc.seed, flow_length=tc.flow_length, dtype=np.dtype(tc.dtype))
        res = train_weak(data, tc, params=params, streams=streams, out_dir=run, config_hash=digest)
        for r in res.rounds:
            print(f"MIL {r['stream']} round {r['round']}: {r['positives']} positives remain "
                  f"({r['flipped']} flipped, {r['precision']:.3f} inside true intervals, T={tc.T})")
        from .embednet import save_checkpoint
        for s in streams:
            save_checkpoint(run / f"{s}.ckpt", params, digest, {"stream": s, "supervision": "weak"})
        _dump(run / "mil_rounds.json", res.rounds)
    return EXIT_OK


def load_models(run, digest):
    """ModelParams whose appearance nets come from appearance.ckpt and motion nets from motion.ckpt."""
    paths = {s: run / f"{s}.ckpt" for s in STREAMS}
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise DatasetError(f"missing checkpoints: {', '.join(missing)}")
    ap, _ = load_checkpoint(paths["appearance"], expect_hash=digest)
    mo, _ = load_checkpoint(paths["motion"], expect_hash=digest)
    ap.motion_sketch, ap.motion_flow, ap.relation_mo = mo.motion_sketch, mo.motion_flow, mo.relation_mo
    return ap


def _modes(values):
    out = []
    for v in values or ["app", "motion", "rankfuse", "concat"]:
        for part in v.split(","):
            if part not in MODE_ALIASES:
                raise UsageError(f"unknown mode {part!r}")
            out.append(MODE_ALIASES[part])
    return list(dict.fromkeys(out))


def cmd_evaluate(args):
    cfg = load_config(args.config)
    run = _run_dir(args) / args.supervision
    params = load_models(run, cfg.digest())
    data = _load_data(args, cfg, cfg.retrieval.eval_split)
    ks = [int(k) for k in args.k.split(",")] if args.k else cfg.retrieval.k_list()
    modes = _modes(args.mode)
    metrics, results = evaluate(params, data, modes=modes, ks=sorted(ks), lam2=cfg.retrieval.lam2)
    for m in modes:
        row = "  ".join(f"{k}={v:.4f}" for k, v in metrics[m].items())
        print(f"{m:10s} {row}")
    out = {"supervision": args.supervision, "metrics": metrics, "lam2": cfg.retrieval.lam2,
           "n_queries": len(data.sequence_ids), "config_digest": cfg.digest(),
           "params_digest": params.digest()}
    _dump(run / "metrics.json", out)
    write_results_csv(run / "results.csv", results)
    return EXIT_OK


def cmd_detect(args):
    cfg = load_config(args.config)
    run = _run_dir(args) / args.supervision
    params = load_models(run, cfg.digest())
    data = _load_data(args, cfg, cfg.retrieval.eval_split)
    index = build_index(params, data)
    queries = embed_queries(params, data)
    tol = cfg.retrieval.tolerance
    print(f"success: proposed frame within +-{tol} frames of the true interval")
    summary = {}
    rows = []
    for m in _modes(args.mode):
        if m == "rankfuse":
            log.info("detection has no rank-fusion variant; skipping")
            continue
        acc, r = detection(params, data, m, index, queries, tol)
        summary[m] = acc
        rows.extend(r)
        print(f"{m:10s} detection accuracy {acc:.4f} over {len(r)} pages")
    with open(run / "detection.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["mode", "sequence_id", "page", "clip_id", "proposed", "start", "end",
                                          "success"])
        w.writeheader()
        w.writerows(rows)
    _dump(run / "detection.json", {"tolerance": tol, "accuracy": summary, "config_digest": cfg.digest()})
    return EXIT_OK


def report_table(run_dir):
    """Rows (supervision, mode, acc@1, acc@5, acc@10) with None for absent entries."""
    rows = []
    for sup in ("strong", "weak"):
        path = Path(run_dir) / sup / "metrics.json"
        metrics = json.loads(path.read_text())["metrics"] if path.exists() else None
        for mode in EVAL_MODES:
            m = metrics.get(mode) if metrics else None
            rows.append((sup, mode) + tuple(m.get(f"acc@{k}") if m else None for k in (1, 5, 10)))
    return rows


def cmd_report(args):
    run = Path(args.run_dir_pos) if args.run_dir_pos else _run_dir(args)
    if not run.is_dir():
        raise DatasetError(f"run directory {run} does not exist")
    rows = report_table(run)
    lines = [f"{'supervision':<12}{'mode':<12}{'acc@1':>8}{'acc@5':>8}{'acc@10':>8}"]
    for sup, mode, *accs in rows:
        cells = "".join(f"{a:>8.4f}" if a is not None else f"{'absent':>8}" for a in accs)
        lines.append(f"{sup:<12}{mode:<12}{cells}")
    for sup in ("strong", "weak"):
        det = run / sup / "detection.json"
        if det.exists():
            d = json.loads(det.read_text())
            accs = ", ".join(f"{m} {v:.4f}" for m, v in sorted(d["accuracy"].items()))
            lines.append(f"{sup} detection (+-{d['tolerance']} frames): {accs}")
        else:
            lines.append(f"{sup} detection: absent")
    rel = run / "relation_effect.json"
    if rel.exists():
        d = json.loads(rel.read_text())
        for mode, deltas in sorted(d["delta_acc1"].items()):
            lines.append(f"relation module effect on {mode} acc@1 (with - without) per seed: "
                         + ", ".join(f"{x:+.4f}" for x in deltas))
    text = "\n".join(lines) + "\n"
    (run / "report.txt").write_text(text)
    with open(run / "report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["supervision", "mode", "acc@1", "acc@5", "acc@10"])
        for row in rows:
            w.writerow(["" if v is None else v for v in row])
    print(text, end="")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="sketchvid", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a synthetic dataset")
    g.add_argument("--config", help="INI file or preset name (default: benchmark)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    def common(sp):
        sp.add_argument("dataset")
        sp.add_argument("--config")
        sp.add_argument("--run-dir", help=f"run directory (default: ${RUN_DIR_ENV} or ./runs)")
        sp.add_argument("--supervision", choices=("strong", "weak"), default="strong")

    t = sub.add_parser("train", help="train one or both streams")
    common(t)
    t.add_argument("--stream", choices=("appearance", "motion", "both"), default="both")
    t.add_argument("--resume", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="rank queries and report acc@K")
    common(e)
    e.add_argument("--mode", action="append", help="app, motion, rankfuse, concat (repeatable)")
    e.add_argument("--k", help="comma-separated K values, default from config")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("detect", help="locate each sketch page within its true clip")
    common(d)
    d.add_argument("--mode", action="append")
    d.set_defaults(func=cmd_detect)

    r = sub.add_parser("report", help="summarise a run directory")
    r.add_argument("run_dir_pos", nargs="?", metavar="run_dir")
    r.add_argument("--run-dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, SpecError, CheckpointError, FlowError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, TrainingError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
