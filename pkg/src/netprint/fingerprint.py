"""Turn per-device packet streams into fingerprint instances.

A fingerprint summarises a group of consecutive packets from one device
with four statistics: mean and population standard deviation (divisor N,
the group being the whole population of its instance) of the IPv4 total
length and of the raw TCP window field.  Groups are non-overlapping runs
of ``window_size`` packets in arrival order; a trailing short run is
dropped by default, so a device with n packets yields
floor(n / window_size) instances.

Timestamps take no part in any computation here; grouping is purely by
per-device arrival order.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from .ingest import MacAddress, PacketRecord

FEATURE_NAMES = ("iplen_mu", "iplen_sigma", "tcpwin_mu", "tcpwin_sigma")


@dataclass(frozen=True, slots=True)
class ExtractionConfig:
    window_size: int = 5
    drop_remainder: bool = True

    def __post_init__(self) -> None:
        if self.window_size < 2:
            raise ValueError(f"window_size must be at least 2, got {self.window_size}")


@dataclass(frozen=True, slots=True)
class Fingerprint:
    """The four statistical features of one packet window."""

    iplen_mu: float
    iplen_sigma: float
    tcpwin_mu: float
    tcpwin_sigma: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"fingerprint features must be finite: {self.as_tuple()}")
        if self.iplen_sigma < 0 or self.tcpwin_sigma < 0:
            raise ValueError("standard deviations cannot be negative")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.iplen_mu, self.iplen_sigma, self.tcpwin_mu, self.tcpwin_sigma)


@dataclass(frozen=True, slots=True)
class LabeledInstance:
    fingerprint: Fingerprint
    label: str

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("instance label must be non-empty")


@dataclass(frozen=True, slots=True)
class DeviceCounts:
    """Packets and instances contributed by one labeled device."""

    label: str
    packets: int
    instances: int


@dataclass(frozen=True, slots=True)
class ExtractionReport:
    per_device: dict[MacAddress, DeviceCounts] = field(default_factory=dict)
    unlabeled_packets: int = 0

    @property
    def total_instances(self) -> int:
        return sum(c.instances for c in self.per_device.values())


def window_packets(
    records: list[PacketRecord],
    config: ExtractionConfig = ExtractionConfig(),
) -> list[list[PacketRecord]]:
    """Group one device's records into consecutive non-overlapping windows.

    With ``drop_remainder`` (the default) the final ``len(records) mod
    window_size`` packets are discarded and the window count is exactly
    floor(n / window_size); otherwise the short tail is kept as a last,
    smaller window.
    """
    size = config.window_size
    windows = [records[i : i + size] for i in range(0, len(records) - size + 1, size)]
    if not config.drop_remainder and len(records) % size:
        windows.append(records[len(records) - len(records) % size :])
    return windows


def fingerprint_from_values(iplens: list[float], windows: list[float]) -> Fingerprint:
    """Fingerprint from raw per-packet values (lengths and window sizes)."""
    if not iplens or len(iplens) != len(windows):
        raise ValueError("need one ip length and one window value per packet")
    return Fingerprint(
        iplen_mu=statistics.fmean(iplens),
        iplen_sigma=statistics.pstdev(iplens),
        tcpwin_mu=statistics.fmean(windows),
        tcpwin_sigma=statistics.pstdev(windows),
    )


def compute_fingerprint(window: list[PacketRecord]) -> Fingerprint:
    """Mean and population standard deviation of ip length and TCP window."""
    if not window:
        raise ValueError("cannot fingerprint an empty window")
    return fingerprint_from_values(
        [r.ip_total_length for r in window],
        [r.tcp_window for r in window],
    )


def extract_instances(
    capture: list[PacketRecord],
    device_labels: dict[MacAddress, str],
    config: ExtractionConfig = ExtractionConfig(),
) -> tuple[list[LabeledInstance], ExtractionReport]:
    """Fingerprint every labeled device found in a (possibly mixed) capture.

    Each labeled MAC's packets are pulled out of the capture in arrival
    order, windowed and fingerprinted independently of all other traffic,
    so windows never span devices.  Instances are emitted grouped by device
    in canonical MAC order, each group in window order.  Devices without
    packets still appear in the report with zero counts; packets from
    unlabeled MACs are ignored but counted.
    """
    if not device_labels:
        raise ValueError("device_labels must not be empty")
    buckets: dict[MacAddress, list[PacketRecord]] = {mac: [] for mac in device_labels}
    unlabeled = 0
    for record in capture:
        bucket = buckets.get(record.src_mac)
        if bucket is None:
            unlabeled += 1
        else:
            bucket.append(record)
    instances: list[LabeledInstance] = []
    per_device: dict[MacAddress, DeviceCounts] = {}
    for mac in sorted(buckets):
        label = device_labels[mac]
        stream = buckets[mac]
        windows = window_packets(stream, config)
        for window in windows:
            instances.append(LabeledInstance(compute_fingerprint(window), label))
        per_device[mac] = DeviceCounts(label=label, packets=len(stream), instances=len(windows))
    return instances, ExtractionReport(per_device=per_device, unlabeled_packets=unlabeled)
