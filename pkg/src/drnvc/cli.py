"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import codec, frames, metrics, synth
from .config import default_config, parse_config
from .errors import DataError, NumericError, ShapeError
from .estimator import LearnedRateEstimator, train_estimator
from .framecodec import FrameCodec
from .codec import make_oracle_estimator, oracle_record_bits
from .model import DraModel
from .modelio import (load_estimator, load_model, save_estimator, save_model)
from .motion import block_motion
from .rng import RngHub
from .statsio import read_stats_csv, write_stats_csv
from .training import (LambdaSchedule, PairSampler, jro, train_initial,
                       trajectory_csv_rows)


def _load_training_data(cfg):
    if not cfg.data_dir:
        raise DataError("config must set data_dir for training")
    sequences = frames.load_dataset(cfg.data_dir)
    if cfg.val_dir:
        val_sequences = frames.load_dataset(cfg.val_dir)
    else:
        n_val = max(1, int(round(len(sequences) * cfg.val_fraction)))
        if n_val >= len(sequences):
            raise DataError("validation split would consume the whole dataset; "
                            "set val_dir or lower val_fraction")
        val_sequences = sequences[-n_val:]
        sequences = sequences[:-n_val]
    train_pairs = frames.consecutive_pairs(sequences)
    val_pairs = frames.consecutive_pairs(val_sequences)
    return train_pairs, val_pairs


def cmd_gen_synth(args):
    w, _, h = args.size.partition("x")
    try:
        size = (int(w), int(h))
    except ValueError:
        raise DataError(f"bad --size {args.size!r}, expected WxH") from None
    paths = synth.gen_synthetic(args.seed, args.sequences, args.frames, size,
                                args.motion, args.out)
    print(f"wrote {len(paths)} sequences of {args.frames} frames to {args.out}")
    return 0


def cmd_train(args):
    cfg = parse_config(args.config) if args.config else default_config()
    tc = cfg.train_config()
    hub = RngHub(tc.seed)
    train_pairs, _ = _load_training_data(cfg)
    model = DraModel(cfg.route_spec(), hub.stream("model-init"))
    sampler = PairSampler(train_pairs, tc.i_frame_fraction)
    losses: list[float] = []

    def checkpoint_cb(tag):
        if tc.checkpoint_every:
            save_model(f"{args.out}.{tag}", model)

    train_initial(model, sampler, tc, hub, loss_log=losses, checkpoint_cb=checkpoint_cb)
    save_model(args.out, model)
    print(f"trained {len(losses)} iterations; loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    print(f"saved model to {args.out}")
    return 0


def cmd_jro(args):
    cfg = parse_config(args.config) if args.config else default_config()
    tc = cfg.train_config()
    hub = RngHub(tc.seed)
    train_pairs, val_pairs = _load_training_data(cfg)
    model = load_model(args.init)
    sampler = PairSampler(train_pairs, tc.i_frame_fraction)
    result = jro(model, sampler, val_pairs, tc, hub)
    save_model(args.out, model)
    if args.log:
        with open(args.log, "w", newline="") as fh:
            csv.writer(fh).writerows(
                trajectory_csv_rows(result.trajectory, model.spec.num_routes))
    final = result.trajectory[-1].points
    print("final validation RD points (rate bpp / PSNR dB):")
    for p in final:
        print(f"  route {p.route}: {p.rate:.4f} bpp / {p.psnr:.2f} dB")
    print(f"saved model to {args.out}")
    return 0


def cmd_train_rca(args):
    cfg = parse_config(args.config) if args.config else default_config()
    model = load_model(args.model)
    sequences = frames.load_dataset(args.data)
    hub = RngHub(cfg.seed)
    fc = FrameCodec(model)
    K = model.spec.num_routes

    pairs = []
    for s, seq in enumerate(sequences):
        for t in range(1, len(seq)):
            pairs.append((f"seq{s:03d}/{t}", seq[t], seq[t - 1]))
    if len(pairs) > cfg.estimator_max_frames:
        idx = np.linspace(0, len(pairs) - 1, cfg.estimator_max_frames).astype(int)
        pairs = [pairs[i] for i in idx]

    samples = []
    log_rows = []
    for fid, x_t, x_ref in pairs:
        mv = block_motion(x_t, x_ref)
        pixels = x_t.size
        true = np.empty(K)
        for k in range(K):
            code = fc.encode_frame(x_t[None, None], x_ref[None, None], k)
            true[k] = oracle_record_bits(code) / pixels
            log_rows.append([fid, k, repr(true[k])])
        samples.append((x_t, mv, true))

    losses: list[float] = []
    est = train_estimator(samples, K, hub.stream("estimator-train"),
                          lr=cfg.estimator_lr, steps=cfg.estimator_steps,
                          lr_decay=cfg.estimator_lr_decay, loss_log=losses)
    save_estimator(args.out, est)
    if args.samples_log:
        with open(args.samples_log, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame_id", "route", "true_bpp"])
            w.writerows(log_rows)
    print(f"trained estimator on {len(samples)} frames; "
          f"loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    print(f"saved estimator to {args.out}")
    return 0


def cmd_encode(args):
    model = load_model(args.model)
    seq = frames.load_sequence(args.input)
    estimator = None
    forced = None
    if args.rca == "oracle":
        estimator = make_oracle_estimator(model)
    elif args.rca.startswith("route:"):
        forced = int(args.rca.split(":", 1)[1])
    else:
        estimator = LearnedRateEstimator(load_estimator(args.rca))
    if estimator is not None and args.target is None:
        raise DataError("--target is required for rate-controlled encoding")
    data, stats, _ = codec.encode_sequence(
        seq, model, estimator=estimator, forced_route=forced,
        target_bpp=args.target, gop_len=args.gop, sw=args.sw)
    with open(args.out, "wb") as fh:
        fh.write(data)
    if args.stats:
        write_stats_csv(args.stats, stats, model.spec.num_routes)
    line = (f"encoded {len(stats.frames)} frames: mean {stats.mean_bpp:.4f} bpp, "
            f"mean PSNR {stats.mean_psnr:.2f} dB")
    if stats.target_bpp is not None:
        line += f", dR {stats.delta_r_percent():.2f}%"
    print(line)
    return 0


def cmd_decode(args):
    model = load_model(args.model)
    with open(args.input, "rb") as fh:
        data = fh.read()
    recons = codec.decode_sequence(data, model)
    frames.save_sequence(args.out, recons)
    print(f"decoded {len(recons)} frames to {args.out}")
    return 0


def cmd_eval(args):
    ref = frames.load_sequence(args.ref)
    dec = frames.load_sequence(args.dec)
    if len(ref) != len(dec):
        raise DataError(f"frame count mismatch: {len(ref)} reference vs {len(dec)} decoded")
    psnrs = [metrics.psnr(a, b) for a, b in zip(ref, dec)]
    stats = read_stats_csv(args.stats) if args.stats else None
    rows = [["frame", "psnr"]] + [[i, str(p)] for i, p in enumerate(psnrs)]
    if args.report:
        with open(args.report, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    finite = [p for p in psnrs if np.isfinite(p)]
    mean_psnr = float(np.mean(finite)) if finite else float("inf")
    print(f"mean PSNR {mean_psnr:.3f} dB over {len(psnrs)} frames")
    if stats is not None:
        print(f"mean bpp {stats.mean_bpp:.5f}")
        if stats.target_bpp is not None:
            print(f"dR {stats.delta_r_percent():.3f}% vs target {stats.target_bpp}")
    return 0


def _read_curve(path):
    pts = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
            except ValueError:
                continue  # header line
    if not pts:
        raise DataError(f"{path}: no (rate, psnr) rows found")
    return pts


def cmd_bd(args):
    bd_rate, bd_psnr = metrics.bd_metrics(_read_curve(args.curve_a), _read_curve(args.curve_b))
    print(f"BD-Rate {bd_rate:+.3f}%  BD-PSNR {bd_psnr:+.4f} dB (curve B vs curve A)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drnvc",
                                description="Multi-route neural video codec with learned rate control")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate synthetic test sequences")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--sequences", type=int, default=8)
    g.add_argument("--frames", type=int, default=16)
    g.add_argument("--size", default="64x64")
    g.add_argument("--motion", default="mixed", choices=sorted(synth.PROFILES))
    g.set_defaults(fn=cmd_gen_synth)

    t = sub.add_parser("train", help="initial multi-route training")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    j = sub.add_parser("jro", help="joint-routes optimization of a trained model")
    j.add_argument("--config", required=True)
    j.add_argument("--init", required=True)
    j.add_argument("--out", required=True)
    j.add_argument("--log", default="")
    j.set_defaults(fn=cmd_jro)

    r = sub.add_parser("train-rca", help="train the rate estimation network")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--config", default="")
    r.add_argument("--samples-log", default="")
    r.set_defaults(fn=cmd_train_rca)

    e = sub.add_parser("encode", help="encode a frame directory")
    e.add_argument("--model", required=True)
    e.add_argument("--rca", required=True,
                   help="estimator checkpoint path, 'oracle', or 'route:K'")
    e.add_argument("--target", type=float, default=None)
    e.add_argument("--gop", type=int, default=codec.DEFAULT_GOP)
    e.add_argument("--sw", type=int, default=codec.DEFAULT_SW)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--stats", default="")
    e.set_defaults(fn=cmd_encode)

    d = sub.add_parser("decode", help="decode a bitstream to frames")
    d.add_argument("--model", required=True)
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_decode)

    v = sub.add_parser("eval", help="PSNR / bitrate-error report")
    v.add_argument("--ref", required=True)
    v.add_argument("--dec", required=True)
    v.add_argument("--stats", default="")
    v.add_argument("--report", default="")
    v.set_defaults(fn=cmd_eval)

    b = sub.add_parser("bd", help="Bjontegaard deltas between two RD curves")
    b.add_argument("--curve-a", dest="curve_a", required=True)
    b.add_argument("--curve-b", dest="curve_b", required=True)
    b.set_defaults(fn=cmd_bd)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except (DataError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
