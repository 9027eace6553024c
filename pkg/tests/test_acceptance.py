"""End-to-end acceptance gates.

Every test prints one PASS/FAIL line so the suite doubles as a checklist:
run ``pytest tests/test_acceptance.py -v -s`` to see them.  The large-corpus
reproduction tests only run when NETPRINT_UNSW_DIR points at prepared
instance files (see README); they are skipped otherwise.
"""

from __future__ import annotations

import math
import os
import time
from contextlib import contextmanager

import pytest

from netprint.dataset import Dataset, SplitSpec, read_instances, relabel, split, train_size
from netprint.errors import FormatError
from netprint.evaluate import SyntheticProfile, evaluate, make_synthetic
from netprint.fingerprint import (
    ExtractionConfig,
    Fingerprint,
    compute_fingerprint,
    window_packets,
)
from netprint.forest import (
    ForestParams,
    best_split,
    deserialize_model,
    load_model,
    predict,
    save_model,
    serialize_model,
    train,
    vote_counts,
)
from netprint.ingest import MacAddress, PacketRecord, _parse_pcap
from netprint.rng import Xoshiro256StarStar

MAC = MacAddress.parse("aa:bb:cc:dd:ee:01")
UNSW_DIR = os.environ.get("NETPRINT_UNSW_DIR", "")


@contextmanager
def criterion(num: int | str, name: str):
    try:
        yield
    except BaseException as exc:
        outcome = "SKIP" if exc.__class__.__name__ == "Skipped" else "FAIL"
        print(f"\n[ACCEPTANCE] criterion {num} ({name}): {outcome}", flush=True)
        raise
    print(f"\n[ACCEPTANCE] criterion {num} ({name}): PASS", flush=True)


def constant_stream(n: int) -> list[PacketRecord]:
    return [PacketRecord(0.0, MAC, 60, 512)] * n


def separable_profiles(n: int) -> list[SyntheticProfile]:
    # means 10 sigma apart on both base features
    return [
        SyntheticProfile("device-a", 100.0, 5.0, 4000.0, 100.0, n),
        SyntheticProfile("device-b", 150.0, 5.0, 5000.0, 100.0, n),
    ]


def test_criterion_1_window_count_arithmetic():
    with criterion(1, "instance arithmetic"):
        cfg = ExtractionConfig(window_size=5)
        for total, expected in ((6_844_740, 1_368_948), (3_515_705, 703_141),
                                (442_970, 88_594)):
            windows = window_packets(constant_stream(total), cfg)
            assert len(windows) == expected, (total, len(windows))


def test_criterion_2_split_size_arithmetic():
    with criterion(2, "split arithmetic"):
        rows = (
            (1_368_948, 1_095_158, 273_790),
            (703_141, 562_513, 140_628),
            (88_594, 70_875, 17_719),
        )
        for total, expected_train, expected_test in rows:
            assert train_size(total, 0.8) == expected_train
            assert total - train_size(total, 0.8) == expected_test
        # run the real splitter on the smallest corpus size
        total, expected_train, expected_test = rows[2]
        fp = Fingerprint(60.0, 0.0, 512.0, 0.0)
        from netprint.fingerprint import LabeledInstance

        data = Dataset([LabeledInstance(fp, "dev")] * total)
        train_set, test_set = split(data, SplitSpec(train_fraction=0.8, seed=1))
        assert (len(train_set), len(test_set)) == (expected_train, expected_test)


def test_criterion_3_statistics_oracle():
    with criterion(3, "statistics oracle"):
        rng = Xoshiro256StarStar.from_seed(33)
        worst = 0.0
        for _ in range(10_000):
            iplens = [40 + rng.below(65_496) for _ in range(5)]
            wins = [rng.below(65_536) for _ in range(5)]
            window = [PacketRecord(0.0, MAC, l, w) for l, w in zip(iplens, wins)]
            fp = compute_fingerprint(window)
            for got, values in ((fp.iplen_mu, iplens), (fp.tcpwin_mu, wins)):
                mean = 0.0
                for v in values:
                    mean += v
                mean /= len(values)
                worst = max(worst, _rel_err(got, mean))
            for got, values in ((fp.iplen_sigma, iplens), (fp.tcpwin_sigma, wins)):
                mean = sum(values) / len(values)
                acc = 0.0
                for v in values:
                    acc += (v - mean) ** 2
                worst = max(worst, _rel_err(got, math.sqrt(acc / len(values))))
        assert worst <= 1e-9, worst


def _rel_err(got: float, want: float) -> float:
    if want == 0.0:
        return abs(got)
    return abs(got - want) / abs(want)


def test_criterion_4_split_search_oracle():
    import sys

    sys.path.insert(0, os.path.dirname(__file__))
    from test_forest import brute_force_best_split

    with criterion(4, "split-search oracle"):
        rng = Xoshiro256StarStar.from_seed(2024)
        for _ in range(1_000):
            n = 2 + rng.below(11)
            instances = [
                (tuple(float(rng.below(4)) for _ in range(4)), "abc"[rng.below(3)])
                for _ in range(n)
            ]
            subset = rng.sample_indices(4, 1 + rng.below(4))
            assert best_split(instances, subset) == brute_force_best_split(instances, subset)


def test_criterion_5_determinism(tmp_path):
    with criterion(5, "determinism"):
        data = make_synthetic(separable_profiles(400), seed=17)
        train_set, _ = split(data, SplitSpec(seed=1))
        params = ForestParams(n_trees=100)
        path_a = str(tmp_path / "a.nfpt")
        path_b = str(tmp_path / "b.nfpt")
        save_model(train(train_set, params, seed=1), path_a)
        save_model(train(train_set, params, seed=1), path_b)
        blob = open(path_a, "rb").read()
        assert blob == open(path_b, "rb").read()

        parallel = train(train_set, params, seed=1, n_jobs=4)
        assert serialize_model(parallel) == blob

        loaded = load_model(path_a)
        model = deserialize_model(blob)
        rng = Xoshiro256StarStar.from_seed(55)
        for _ in range(1_000):
            x = Fingerprint(rng.random() * 300.0, rng.random() * 40.0,
                            rng.random() * 9000.0, rng.random() * 500.0)
            assert predict(loaded, x) == predict(model, x)


def test_criterion_6_synthetic_separability():
    with criterion(6, "synthetic separability"):
        started = time.perf_counter()
        data = make_synthetic(separable_profiles(5_000), seed=42)
        train_set, test_set = split(data, SplitSpec(train_fraction=0.8, seed=1))
        assert (len(train_set), len(test_set)) == (8_000, 2_000)
        model = train(train_set, ForestParams(n_trees=100), seed=1)
        report = evaluate(model, test_set)
        elapsed = time.perf_counter() - started
        assert report.accuracy >= 0.99, report.accuracy
        assert elapsed < 60.0, elapsed


# --- criterion 7: reproduction on the public UNSW smart-home corpus -------
#
# Needs NETPRINT_UNSW_DIR with u_iot_instances.csv, u_noniot_instances.csv
# and categories.csv prepared as described in the README.

def _unsw_file(name: str) -> str:
    return os.path.join(UNSW_DIR, name)


def _require_unsw(*names: str) -> None:
    if not UNSW_DIR:
        pytest.skip("NETPRINT_UNSW_DIR not set; UNSW reproduction skipped")
    missing = [n for n in names if not os.path.isfile(_unsw_file(n))]
    if missing:
        pytest.skip(f"missing UNSW file(s) under NETPRINT_UNSW_DIR: {', '.join(missing)}")


def _read_categories() -> dict[str, str]:
    from netprint.dataset import read_category_map

    return read_category_map(_unsw_file("categories.csv"))


def _binary_dataset() -> Dataset:
    iot = read_instances(_unsw_file("u_iot_instances.csv"))
    non_iot = read_instances(_unsw_file("u_noniot_instances.csv"))
    combined = Dataset(tuple(iot.instances) + tuple(non_iot.instances))
    return relabel(combined, _read_categories())


def _subsample(data: Dataset, n: int, seed: int = 1) -> Dataset:
    order = list(range(len(data)))
    Xoshiro256StarStar.from_seed(seed).shuffle(order)
    return Dataset(data.instances[i] for i in order[:n])


def _split_train_eval(data: Dataset, n_trees: int = 100):
    train_set, test_set = split(data, SplitSpec(train_fraction=0.8, seed=1))
    model = train(train_set, ForestParams(n_trees=n_trees), seed=1)
    return evaluate(model, test_set)


def test_criterion_7a_binary_accuracy():
    with criterion("7a", "binary IoT/non-IoT accuracy"):
        _require_unsw("u_iot_instances.csv", "u_noniot_instances.csv", "categories.csv")
        report = _split_train_eval(_binary_dataset())
        assert report.accuracy >= 0.99, report.accuracy


def test_criterion_7b_non_iot_multiclass():
    with criterion("7b", "non-IoT multiclass accuracy"):
        _require_unsw("u_noniot_instances.csv")
        report = _split_train_eval(read_instances(_unsw_file("u_noniot_instances.csv")))
        assert report.accuracy >= 0.96, report.accuracy


def test_criterion_7c_iot_per_device_recall():
    with criterion("7c", "IoT per-device recall pattern"):
        _require_unsw("u_iot_instances.csv")
        report = _split_train_eval(read_instances(_unsw_file("u_iot_instances.csv")))
        recalls = {
            label: value
            for label, value in report.per_class_recall.items()
            if value is not None
        }
        strong = sum(1 for value in recalls.values() if value >= 0.97)
        assert strong > len(recalls) / 2, (strong, len(recalls))
        blipcare = recalls.get("BlipcareBPMeter")
        assert blipcare is not None, "expected a BlipcareBPMeter class in the IoT corpus"
        assert 0.65 <= blipcare <= 0.85, blipcare


def test_criterion_7d_desk_scale_binary():
    with criterion("7d", "desk-scale binary subsample"):
        _require_unsw("u_iot_instances.csv", "u_noniot_instances.csv", "categories.csv")
        started = time.perf_counter()
        data = _subsample(_binary_dataset(), 100_000, seed=1)
        report = _split_train_eval(data)
        elapsed = time.perf_counter() - started
        assert report.accuracy >= 0.98, report.accuracy
        assert elapsed < 600.0, elapsed


def test_criterion_8_property_suite_spotchecks(tmp_path):
    """Compact re-checks of the module invariants (full suites live in the
    other test modules)."""
    with criterion(8, "property suites"):
        # fingerprint permutation invariance
        window = [PacketRecord(float(i), MAC, 40 + 7 * i, 100 * i) for i in range(5)]
        assert compute_fingerprint(window) == compute_fingerprint(window[::-1])

        # split partition law
        data = make_synthetic(separable_profiles(50), seed=3)
        train_set, test_set = split(data, SplitSpec(seed=9))
        together = sorted(
            (i.label, i.fingerprint.as_tuple())
            for i in train_set.instances + test_set.instances
        )
        assert together == sorted((i.label, i.fingerprint.as_tuple()) for i in data.instances)

        # forest vote tie rule
        from test_forest import leaf_forest

        tie_model = leaf_forest(("bulb", "camera"), ["camera", "bulb"] * 10)
        assert predict(tie_model, Fingerprint(0, 0, 0, 0)) == "bulb"
        assert int(vote_counts(tie_model, Fingerprint(0, 0, 0, 0)).sum()) == 20

        # confusion matrix accounting identity
        model = train(train_set, ForestParams(n_trees=10), seed=1)
        report = evaluate(model, test_set)
        assert report.matrix.total == report.n_test
        assert report.accuracy == report.matrix.trace() / report.n_test

        # fuzzed pcap bytes: no crash, no invalid record, stats identity
        import io

        rng = Xoshiro256StarStar.from_seed(777)
        header = bytes.fromhex("d4c3b2a1020004000000000000000000ffff000001000000")
        for _ in range(200):
            blob = header + bytes(rng.below(256) for _ in range(rng.below(120)))
            try:
                records, stats = _parse_pcap(io.BytesIO(blob))
            except FormatError:
                continue
            assert stats.packets_seen == (
                stats.packets_kept
                + stats.packets_skipped_non_tcp_ipv4
                + stats.packets_skipped_malformed
            )
            for r in records:
                assert 40 <= r.ip_total_length <= 0xFFFF
                assert 0 <= r.tcp_window <= 0xFFFF
