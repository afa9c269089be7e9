"""Bitstream container: header plus per-frame records.

Layout (little-endian):
  magic "DRNV" | version u8 | width u16 | height u16 | K u8 |
  latent channels u16 * K | downsample u8 | gop u16
  then frame records until end of stream:
  type u8 (0=I, 1=P) | route u8 | hyper chunk (u32 len + bytes) |
  route+1 group chunks (u32 len + bytes each)

Every chunk length field must equal its payload byte count; a stream that
ends mid-record reports the last complete frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BitstreamError
from .slimmable import RouteSpec

MAGIC = b"DRNV"
VERSION = 1

FRAME_I = 0
FRAME_P = 1


@dataclass
class FrameRecord:
    frame_type: int
    route: int
    hyper_chunk: bytes
    group_chunks: list[bytes]

    @property
    def byte_size(self) -> int:
        return (2 + 4 * (1 + len(self.group_chunks))
                + len(self.hyper_chunk) + sum(len(c) for c in self.group_chunks))

    @property
    def bits(self) -> int:
        return 8 * self.byte_size


def record_bits(route: int, hyper_len: int, group_lens: list[int]) -> int:
    """Bit cost of a frame record with the given chunk byte lengths."""
    return 8 * (2 + 4 * (1 + len(group_lens)) + hyper_len + sum(group_lens))


@dataclass
class ContainerHeader:
    width: int
    height: int
    latent_channels: tuple[int, ...]
    downsample: int
    gop_len: int

    @property
    def num_routes(self) -> int:
        return len(self.latent_channels)

    @classmethod
    def for_spec(cls, spec: RouteSpec, width: int, height: int, gop_len: int) -> "ContainerHeader":
        return cls(width=width, height=height, latent_channels=spec.latent_channels,
                   downsample=spec.downsample_factor, gop_len=gop_len)


def serialize(header: ContainerHeader, records: list[FrameRecord]) -> bytes:
    out = bytearray()
    out += MAGIC
    out.append(VERSION)
    out += struct.pack("<HH", header.width, header.height)
    out.append(header.num_routes)
    for c in header.latent_channels:
        out += struct.pack("<H", c)
    out.append(header.downsample)
    out += struct.pack("<H", header.gop_len)
    for rec in records:
        if not 0 <= rec.route < header.num_routes:
            raise BitstreamError(f"route id {rec.route} out of range for K={header.num_routes}")
        if len(rec.group_chunks) != rec.route + 1:
            raise BitstreamError(
                f"route {rec.route} record must carry {rec.route + 1} group chunks, "
                f"got {len(rec.group_chunks)}")
        out.append(rec.frame_type)
        out.append(rec.route)
        out += struct.pack("<I", len(rec.hyper_chunk))
        out += rec.hyper_chunk
        for chunk in rec.group_chunks:
            out += struct.pack("<I", len(chunk))
            out += chunk
    return bytes(out)


def deserialize(data: bytes) -> tuple[ContainerHeader, list[FrameRecord]]:
    if len(data) < 5 or data[:4] != MAGIC:
        raise BitstreamError(f"bad container magic {data[:4]!r}, expected {MAGIC!r}")
    if data[4] != VERSION:
        raise BitstreamError(f"unsupported container version {data[4]}")
    pos = 5
    try:
        width, height = struct.unpack_from("<HH", data, pos)
        pos += 4
        k = data[pos]
        pos += 1
        channels = struct.unpack_from(f"<{k}H", data, pos)
        pos += 2 * k
        ds = data[pos]
        pos += 1
        (gop,) = struct.unpack_from("<H", data, pos)
        pos += 2
    except struct.error as exc:
        raise BitstreamError(f"truncated container header: {exc}") from exc
    header = ContainerHeader(width=width, height=height, latent_channels=tuple(channels),
                             downsample=ds, gop_len=gop)

    records: list[FrameRecord] = []
    while pos < len(data):
        start = pos
        try:
            frame_type = data[pos]
            route = data[pos + 1]
            pos += 2
            if frame_type not in (FRAME_I, FRAME_P):
                raise BitstreamError(f"unknown frame type {frame_type}")
            if route >= header.num_routes:
                raise BitstreamError(f"route id {route} >= K={header.num_routes}")
            chunks = []
            for _ in range(route + 2):  # hyper + route+1 groups
                if pos + 4 > len(data):
                    raise IndexError
                (ln,) = struct.unpack_from("<I", data, pos)
                pos += 4
                if pos + ln > len(data):
                    raise IndexError
                chunks.append(data[pos:pos + ln])
                pos += ln
            records.append(FrameRecord(frame_type=frame_type, route=route,
                                       hyper_chunk=chunks[0], group_chunks=chunks[1:]))
        except (IndexError, struct.error):
            raise BitstreamError(
                f"container truncated inside frame record {len(records)} "
                f"(byte {start}); last complete frame is {len(records) - 1}"
            ) from None
    return header, records
