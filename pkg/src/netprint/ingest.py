"""Read packet captures and pre-extracted trace CSVs into packet records.

Only TCP-over-IPv4 packets become records: the window-size feature does not
exist for other protocols, so keeping the stream homogeneous guarantees every
downstream instance is fully featured.  Everything else is counted and
skipped, never silently dropped.

Supported inputs:

* classic pcap files (both byte orders, microsecond and nanosecond
  timestamp variants, linktype 1 / Ethernet only), optionally with a single
  802.1Q VLAN tag in front of the IPv4 header;
* trace CSVs with a header row naming at least ``frame.time_epoch``,
  ``eth.src``, ``ip.len`` and ``tcp.window_size`` (the column names common
  dissectors emit; extra columns are ignored).
"""

from __future__ import annotations

import csv
import io
import math
import string
import struct
from dataclasses import dataclass

from .errors import FormatError

# Classic pcap magics: native/swapped byte order, micro/nanosecond stamps.
_PCAP_MAGIC_USEC = 0xA1B2C3D4
_PCAP_MAGIC_NSEC = 0xA1B23C4D
_PCAPNG_MAGIC = 0x0A0D0D0A

_LINKTYPE_ETHERNET = 1

_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_VLAN = 0x8100

_IP_PROTO_TCP = 6

# IPv4 total length of 40 = minimal IPv4 header (20) + minimal TCP header (20).
MIN_TCP_IPV4_TOTAL_LENGTH = 40

CSV_COLUMNS = ("frame.time_epoch", "eth.src", "ip.len", "tcp.window_size")


@dataclass(frozen=True, order=True, slots=True)
class MacAddress:
    """A 48-bit hardware address, canonically lowercase colon-separated."""

    octets: bytes

    def __post_init__(self) -> None:
        if len(self.octets) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        """Parse ``aa:bb:cc:dd:ee:ff`` (case-insensitive; '-' also accepted)."""
        parts = text.strip().replace("-", ":").split(":")
        if len(parts) != 6 or not all(
            len(p) == 2 and p[0] in string.hexdigits and p[1] in string.hexdigits
            for p in parts
        ):
            raise ValueError(f"invalid MAC address {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One dissected TCP/IPv4 packet, reduced to the fields we fingerprint."""

    timestamp: float
    src_mac: MacAddress
    ip_total_length: int
    tcp_window: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.timestamp) and self.timestamp >= 0.0):
            raise ValueError(f"timestamp must be finite and non-negative: {self.timestamp}")
        if not MIN_TCP_IPV4_TOTAL_LENGTH <= self.ip_total_length <= 0xFFFF:
            raise ValueError(f"ip_total_length out of range: {self.ip_total_length}")
        if not 0 <= self.tcp_window <= 0xFFFF:
            raise ValueError(f"tcp_window out of range: {self.tcp_window}")


@dataclass(slots=True)
class CaptureStats:
    """Accounting for one ingested file.

    ``packets_seen == packets_kept + packets_skipped_non_tcp_ipv4 +
    packets_skipped_malformed`` always holds.  ``packets_kept_filtered``
    is the subset of kept packets suppressed by a MAC filter (they pass all
    protocol checks but are not emitted), so the number of emitted records
    is ``packets_kept - packets_kept_filtered``.
    """

    packets_seen: int = 0
    packets_kept: int = 0
    packets_skipped_non_tcp_ipv4: int = 0
    packets_skipped_malformed: int = 0
    packets_kept_filtered: int = 0

    def emitted(self) -> int:
        return self.packets_kept - self.packets_kept_filtered


def ingest_pcap(
    path: str,
    keep_macs: set[MacAddress] | None = None,
) -> tuple[list[PacketRecord], CaptureStats]:
    """Dissect a classic pcap file into packet records, in file order.

    Frames that are not Ethernet-II/IPv4/TCP are counted as skipped;
    truncated or inconsistent frames are counted as malformed and parsing
    continues with the next one.  If ``keep_macs`` is given, records whose
    source MAC is not in the set are counted (``packets_kept_filtered``)
    but not emitted.

    Raises ``FormatError`` for a bad global header and ``OSError`` for
    unreadable files.
    """
    with open(path, "rb") as fh:
        return _parse_pcap(fh, keep_macs, name=path)


def _parse_pcap(
    fh: io.BufferedIOBase,
    keep_macs: set[MacAddress] | None = None,
    name: str = "<pcap>",
) -> tuple[list[PacketRecord], CaptureStats]:
    header = fh.read(24)
    if len(header) < 24:
        raise FormatError(f"{name}: truncated pcap global header")
    magic_be = struct.unpack(">I", header[:4])[0]
    magic_le = struct.unpack("<I", header[:4])[0]
    if magic_le in (_PCAP_MAGIC_USEC, _PCAP_MAGIC_NSEC):
        endian = "<"
        magic = magic_le
    elif magic_be in (_PCAP_MAGIC_USEC, _PCAP_MAGIC_NSEC):
        endian = ">"
        magic = magic_be
    elif magic_be == _PCAPNG_MAGIC or magic_le == _PCAPNG_MAGIC:
        raise FormatError(f"{name}: pcapng is not supported, convert to classic pcap")
    else:
        raise FormatError(f"{name}: not a pcap file (magic 0x{magic_be:08x})")
    frac_scale = 1e-6 if magic == _PCAP_MAGIC_USEC else 1e-9

    linktype = struct.unpack(endian + "I", header[20:24])[0]
    if linktype != _LINKTYPE_ETHERNET:
        raise FormatError(f"{name}: unsupported linktype {linktype} (only Ethernet)")

    rec_header = struct.Struct(endian + "IIII")
    records: list[PacketRecord] = []
    stats = CaptureStats()
    while True:
        head = fh.read(16)
        if not head:
            break
        if len(head) < 16:
            # Trailing garbage shorter than a record header.
            stats.packets_seen += 1
            stats.packets_skipped_malformed += 1
            break
        ts_sec, ts_frac, incl_len, _orig_len = rec_header.unpack(head)
        data = fh.read(incl_len)
        stats.packets_seen += 1
        if len(data) < incl_len:
            stats.packets_skipped_malformed += 1
            break
        _classify_frame(data, ts_sec + ts_frac * frac_scale, keep_macs, records, stats)
    return records, stats


def _classify_frame(
    data: bytes,
    timestamp: float,
    keep_macs: set[MacAddress] | None,
    records: list[PacketRecord],
    stats: CaptureStats,
) -> None:
    """Parse one Ethernet frame, updating exactly one stats counter."""
    if len(data) < 14:
        stats.packets_skipped_malformed += 1
        return
    ethertype = (data[12] << 8) | data[13]
    ip_off = 14
    if ethertype == _ETHERTYPE_VLAN:
        # Unwrap exactly one 802.1Q tag; anything still not IPv4 after it
        # (including QinQ) falls through to the non-TCP/IPv4 counter.
        if len(data) < 18:
            stats.packets_skipped_malformed += 1
            return
        ethertype = (data[16] << 8) | data[17]
        ip_off = 18
    if ethertype != _ETHERTYPE_IPV4:
        stats.packets_skipped_non_tcp_ipv4 += 1
        return
    if len(data) < ip_off + 20:
        stats.packets_skipped_malformed += 1
        return
    version_ihl = data[ip_off]
    if version_ihl >> 4 != 4:
        stats.packets_skipped_malformed += 1
        return
    ihl = (version_ihl & 0x0F) * 4
    if ihl < 20:
        stats.packets_skipped_malformed += 1
        return
    protocol = data[ip_off + 9]
    if protocol != _IP_PROTO_TCP:
        stats.packets_skipped_non_tcp_ipv4 += 1
        return
    fragment_offset = ((data[ip_off + 6] << 8) | data[ip_off + 7]) & 0x1FFF
    if fragment_offset != 0:
        # Non-first fragment: TCP payload continues but the TCP header (and
        # its window field) is absent from this packet.
        stats.packets_skipped_non_tcp_ipv4 += 1
        return
    tcp_off = ip_off + ihl
    if len(data) < tcp_off + 20:
        stats.packets_skipped_malformed += 1
        return
    total_length = (data[ip_off + 2] << 8) | data[ip_off + 3]
    if total_length < MIN_TCP_IPV4_TOTAL_LENGTH:
        stats.packets_skipped_malformed += 1
        return
    window = (data[tcp_off + 14] << 8) | data[tcp_off + 15]
    src_mac = MacAddress(data[6:12])
    stats.packets_kept += 1
    if keep_macs is not None and src_mac not in keep_macs:
        stats.packets_kept_filtered += 1
        return
    records.append(PacketRecord(timestamp, src_mac, total_length, window))


def ingest_trace_csv(path: str) -> tuple[list[PacketRecord], CaptureStats]:
    """Read a pre-extracted trace CSV into packet records, in row order.

    A row becomes a record only when all four required fields are present
    and parse to in-range values; anything else (empty fields, text where a
    number belongs, out-of-range lengths) counts as malformed and the row is
    skipped.  A missing header or required column raises ``FormatError``.
    """
    records: list[PacketRecord] = []
    stats = CaptureStats()
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        names = [h.strip() for h in header]
        try:
            cols = [names.index(c) for c in CSV_COLUMNS]
        except ValueError:
            missing = sorted(set(CSV_COLUMNS) - set(names))
            raise FormatError(f"{path}: missing required column(s) {', '.join(missing)}") from None
        needed = max(cols)
        for row in reader:
            stats.packets_seen += 1
            if len(row) <= needed:
                stats.packets_skipped_malformed += 1
                continue
            raw_ts, raw_mac, raw_len, raw_win = (row[i].strip() for i in cols)
            try:
                record = PacketRecord(
                    timestamp=float(raw_ts),
                    src_mac=MacAddress.parse(raw_mac),
                    ip_total_length=int(raw_len),
                    tcp_window=int(raw_win),
                )
            except (ValueError, OverflowError):
                stats.packets_skipped_malformed += 1
                continue
            stats.packets_kept += 1
            records.append(record)
    return records, stats


def filter_by_mac(records: list[PacketRecord], mac: MacAddress) -> list[PacketRecord]:
    """Order-preserving subsequence of records originated by ``mac``."""
    return [r for r in records if r.src_mac == mac]
