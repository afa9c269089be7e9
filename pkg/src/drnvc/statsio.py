"""Stats CSV files (schema v1).

Leading comment lines carry run metadata:
  # drnvc-stats v1
  # width=64 height=64 gop=32 target_bpp=0.25   (target omitted for forced runs)
Columns:
  frame,type,route,bits,bpp,est_bpp_0..K-1,psnr,enc_seconds
est_bpp columns are empty for frames coded without estimation.
"""

from __future__ import annotations

import csv

from .codec import FrameStats, SequenceStats
from .errors import DataError


def write_stats_csv(path: str, stats: SequenceStats, num_routes: int) -> None:
    pixels = stats.width * stats.height
    with open(path, "w", newline="") as fh:
        fh.write("# drnvc-stats v1\n")
        meta = f"# width={stats.width} height={stats.height} gop={stats.gop_len}"
        if stats.target_bpp is not None:
            meta += f" target_bpp={stats.target_bpp!r}"
        fh.write(meta + "\n")
        writer = csv.writer(fh)
        writer.writerow(["frame", "type", "route", "bits", "bpp"]
                        + [f"est_bpp_{i}" for i in range(num_routes)]
                        + ["psnr", "enc_seconds"])
        for f in stats.frames:
            est = list(f.est_bpp) if f.est_bpp is not None else [""] * num_routes
            writer.writerow([f.index, f.frame_type, f.route, f.bits,
                             repr(f.bits / pixels)]
                            + [repr(e) if e != "" else "" for e in est]
                            + [str(f.psnr), repr(f.enc_seconds)])


def read_stats_csv(path: str) -> SequenceStats:
    meta: dict[str, str] = {}
    rows = []
    with open(path, newline="") as fh:
        header_cols = None
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            cells = next(csv.reader([line]))
            if header_cols is None:
                header_cols = cells
                continue
            rows.append(dict(zip(header_cols, cells)))
    if header_cols is None:
        raise DataError(f"{path}: not a drnvc stats file")
    for key in ("width", "height", "gop"):
        if key not in meta:
            raise DataError(f"{path}: missing metadata {key!r}")
    stats = SequenceStats(
        width=int(meta["width"]), height=int(meta["height"]),
        target_bpp=float(meta["target_bpp"]) if "target_bpp" in meta else None,
        gop_len=int(meta["gop"]))
    est_cols = sorted((c for c in header_cols if c.startswith("est_bpp_")),
                      key=lambda c: int(c.rsplit("_", 1)[1]))
    for r in rows:
        est_vals = [r[c] for c in est_cols]
        est = tuple(float(v) for v in est_vals) if est_vals and est_vals[0] != "" else None
        stats.frames.append(FrameStats(
            index=int(r["frame"]), frame_type=r["type"], route=int(r["route"]),
            bits=int(r["bits"]), est_bpp=est, psnr=float(r["psnr"]),
            enc_seconds=float(r["enc_seconds"])))
    return stats
