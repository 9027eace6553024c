"""Shared fixture builders.

The pcap builders compose frames layer by layer with struct format strings
(a different code path from the parser's byte-offset reads), so the two
sides check each other.
"""

from __future__ import annotations

import struct

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D

MAC_A = "34:23:87:b7:56:17"
MAC_B = "d0:ff:98:95:57:af"


def mac_bytes(text: str) -> bytes:
    return bytes(int(part, 16) for part in text.split(":"))


def ipv4_header(
    total_length: int = 60,
    protocol: int = 6,
    ihl_words: int = 5,
    version: int = 4,
    frag: int = 0,
) -> bytes:
    head = struct.pack(
        ">BBHHHBBH4s4s",
        (version << 4) | ihl_words,
        0,
        total_length,
        0x1234,
        frag,
        64,
        protocol,
        0,
        bytes([10, 0, 0, 1]),
        bytes([10, 0, 0, 2]),
    )
    return head + b"\x00" * (ihl_words * 4 - 20)


def tcp_header(window: int = 64240) -> bytes:
    return struct.pack(">HHIIBBHHH", 12345, 80, 0, 0, 5 << 4, 0x02, window, 0, 0)


def udp_header() -> bytes:
    return struct.pack(">HHHH", 12345, 53, 8, 0)


def eth_frame(
    payload: bytes,
    src: str = MAC_A,
    dst: str = "ff:ff:ff:ff:ff:ff",
    ethertype: int = 0x0800,
    vlan: int | None = None,
) -> bytes:
    head = mac_bytes(dst) + mac_bytes(src)
    if vlan is not None:
        head += struct.pack(">HH", 0x8100, vlan)
    head += struct.pack(">H", ethertype)
    return head + payload


def tcp_frame(total_length: int = 60, window: int = 64240, src: str = MAC_A, **kw) -> bytes:
    return eth_frame(ipv4_header(total_length=total_length) + tcp_header(window=window),
                     src=src, **kw)


def udp_frame(src: str = MAC_A) -> bytes:
    return eth_frame(ipv4_header(total_length=36, protocol=17) + udp_header(), src=src)


def pcap_bytes(
    frames: list[bytes] | None = None,
    magic: int = MAGIC_USEC,
    swapped: bool = False,
    linktype: int = 1,
    timestamps: list[tuple[int, int]] | None = None,
    caplens: list[int] | None = None,
) -> bytes:
    frames = frames or []
    endian = ">" if swapped else "<"
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for i, frame in enumerate(frames):
        sec, frac = (timestamps[i] if timestamps else (1_600_000_000 + i, 250_000))
        caplen = caplens[i] if caplens else len(frame)
        out += struct.pack(endian + "IIII", sec, frac, caplen, len(frame))
        out += frame[:caplen] if caplen <= len(frame) else frame
    return out


def write_pcap(path, frames, **kw) -> str:
    path.write_bytes(pcap_bytes(frames, **kw))
    return str(path)
