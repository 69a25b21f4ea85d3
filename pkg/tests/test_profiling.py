import time

import pytest

from hybridgen.profiling import EXCLUSIVE_NOTE, ProfileError, profile


def test_profile_schema_complete_for_stub():
    report = profile(lambda bs: time.sleep(0.001 * bs), batch_sizes=(1, 16),
                     warmup_runs=2, timed_runs=3)
    d = report.to_dict()
    assert set(d) == {"latency_s", "throughput_ips", "warmup_runs", "timed_runs",
                      "batch_sizes", "note", "per_batch_seconds"}
    assert d["latency_s"] > 0
    assert d["throughput_ips"] > 0
    assert d["note"] == EXCLUSIVE_NOTE
    assert d["warmup_runs"] == 2 and d["timed_runs"] == 3


def test_profile_throughput_amortizes():
    # per-batch fixed overhead: images/s must be higher at batch 16
    def run(bs):
        time.sleep(0.002 + 0.0001 * bs)

    report = profile(run, batch_sizes=(1, 16), timed_runs=3)
    assert report.throughput_ips >= 1.0 / report.latency_s


def test_profile_validates_run_counts():
    with pytest.raises(ValueError):
        profile(lambda bs: None, timed_runs=2)
    with pytest.raises(ValueError):
        profile(lambda bs: None, warmup_runs=1, timed_runs=3)


def test_profile_failure_carries_partial_report():
    calls = []

    def run(bs):
        calls.append(bs)
        if bs == 16:
            raise RuntimeError("boom")

    with pytest.raises(ProfileError) as err:
        profile(run, batch_sizes=(1, 16), timed_runs=3)
    partial = err.value.partial_report
    assert partial.latency_s is not None
    assert 16 not in partial.per_batch_seconds
