"""Time-tag file formats and validation.

Simulated and real time-to-digital-converter data flow through the same
stream type so analysis code never knows the difference. The on-disk
default is line-oriented text (`channel,timestamp_ps`) under a
#-prefixed key=value header; a packed binary variant (8-byte little-
endian timestamp + 1-byte channel per record) covers large runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROLES = ("signal", "idler", "clock")


class TagFormatError(ValueError):
    pass


@dataclass
class TagFileHeader:
    channel_roles: dict = field(default_factory=lambda: {0: "signal", 1: "idler"})
    time_unit_ps: int = 1
    format_version: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        roles = list(self.channel_roles.values())
        for role in roles:
            if role not in ROLES:
                raise TagFormatError(f"unknown channel role {role!r}")
        for role in ("signal", "idler"):
            if roles.count(role) > 1:
                raise TagFormatError(f"more than one channel mapped to {role}")
        if not isinstance(self.time_unit_ps, int) or self.time_unit_ps <= 0:
            raise TagFormatError("time unit must be a positive integer picosecond count")

    def channel_for(self, role: str) -> int:
        for ch, r in self.channel_roles.items():
            if r == role:
                return ch
        raise TagFormatError(f"no channel carries role {role!r}")


@dataclass
class TimeTagStream:
    """Merged detector tag record: parallel channel/timestamp arrays."""

    header: TagFileHeader
    channels: np.ndarray        # uint8
    times_ps: np.ndarray        # int64

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.times_ps = np.asarray(self.times_ps, dtype=np.int64)
        if self.channels.shape != self.times_ps.shape:
            raise TagFormatError("channel and timestamp arrays differ in length")

    def __len__(self):
        return len(self.times_ps)

    def validate(self) -> None:
        known = set(self.header.channel_roles)
        present = set(np.unique(self.channels).tolist())
        stray = present - known
        if stray:
            raise TagFormatError(f"channels {sorted(stray)} absent from header map")
        for ch in known:
            t = self.times_ps[self.channels == ch]
            if t.size > 1:
                bad = np.flatnonzero(np.diff(t) < 0)
                if bad.size:
                    raise TagFormatError(
                        f"channel {ch}: non-monotone timestamp at record {bad[0] + 1} "
                        f"({t[bad[0] + 1]} after {t[bad[0]]})"
                    )

    def times_for(self, role: str) -> np.ndarray:
        return self.times_ps[self.channels == self.header.channel_for(role)]


def _header_lines(stream: TimeTagStream, binary: bool) -> list[str]:
    h = stream.header
    lines = [
        f"# fiberpair-tags v{h.format_version}",
        f"# format={'binary' if binary else 'text'}",
        f"# time_unit_ps={h.time_unit_ps}",
        "# columns=channel,timestamp_ps",
    ]
    for ch in sorted(h.channel_roles):
        lines.append(f"# channel.{ch}={h.channel_roles[ch]}")
    for key in sorted(h.metadata):
        lines.append(f"# meta.{key}={h.metadata[key]}")
    lines.append("# end-header")
    return lines


def write_tags(stream: TimeTagStream, path, binary: bool = False,
               chunk: int = 1_000_000) -> None:
    """Canonical on-disk form; byte-stable for a given stream.

    Records are written in chunks so arbitrarily long streams need only
    constant memory beyond the input arrays.
    """
    stream.validate()
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(("\n".join(_header_lines(stream, binary)) + "\n").encode())
            n = len(stream)
            for lo in range(0, n, chunk):
                sl = slice(lo, min(lo + chunk, n))
                if binary:
                    rec = np.empty(sl.stop - sl.start,
                                   dtype=[("t", "<i8"), ("ch", "u1")])
                    rec["t"] = stream.times_ps[sl]
                    rec["ch"] = stream.channels[sl]
                    fh.write(rec.tobytes())
                else:
                    rows = [f"{c},{t}" for c, t in zip(stream.channels[sl],
                                                       stream.times_ps[sl])]
                    fh.write(("\n".join(rows) + "\n").encode())
    except OSError as exc:
        raise TagFormatError(f"cannot write tag file {path}: {exc}") from exc


def read_tags(path) -> TimeTagStream:
    path = Path(path)
    if not path.exists():
        raise TagFormatError(f"tag file not found: {path}")
    channel_roles: dict = {}
    metadata: dict = {}
    time_unit = 1
    version = 1
    binary = False
    with open(path, "rb") as fh:
        header_end = 0
        lineno = 0
        while True:
            line = fh.readline()
            lineno += 1
            if not line:
                raise TagFormatError(f"{path}: header never terminated (# end-header)")
            text = line.decode("ascii", errors="replace").strip()
            if not text.startswith("#"):
                raise TagFormatError(f"{path}:{lineno}: expected header line, got {text!r}")
            body = text[1:].strip()
            if body == "end-header":
                header_end = fh.tell()
                break
            if body.startswith("fiberpair-tags"):
                version = int(body.split("v")[-1])
            elif "=" in body:
                key, value = body.split("=", 1)
                key = key.strip()
                if key == "format":
                    binary = value == "binary"
                elif key == "time_unit_ps":
                    time_unit = int(value)
                elif key.startswith("channel."):
                    channel_roles[int(key.split(".")[1])] = value
                elif key.startswith("meta."):
                    metadata[key[5:]] = value
        header = TagFileHeader(channel_roles=channel_roles or {0: "signal", 1: "idler"},
                               time_unit_ps=time_unit, format_version=version,
                               metadata=metadata)
        if binary:
            blob = fh.read()
            if len(blob) % 9:
                raise TagFormatError(f"{path}: binary body has {len(blob)} bytes, not a "
                                     "multiple of the 9-byte record")
            rec = np.frombuffer(blob, dtype=[("t", "<i8"), ("ch", "u1")])
            stream = TimeTagStream(header, rec["ch"].copy(), rec["t"].copy())
        else:
            chans, times = [], []
            for raw in fh:
                lineno += 1
                text = raw.decode("ascii", errors="replace").strip()
                if not text:
                    continue
                parts = text.split(",")
                if len(parts) != 2:
                    raise TagFormatError(f"{path}:{lineno}: malformed record {text!r}")
                try:
                    chans.append(int(parts[0]))
                    times.append(int(parts[1]))
                except ValueError:
                    raise TagFormatError(
                        f"{path}:{lineno}: malformed record {text!r}") from None
            stream = TimeTagStream(header,
                                   np.array(chans, dtype=np.uint8),
                                   np.array(times, dtype=np.int64))
    stream.validate()
    return stream
