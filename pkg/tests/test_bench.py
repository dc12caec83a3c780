import hashlib
import os

import pytest

from segstore.bench import BenchEngine, run_benchmark, verify_equivalence
from segstore.cli import main
from segstore.restore import Policy
from segstore.workload import WorkloadConfig


def tiny_config(**kw):
    base = dict(page_count=256, page_size=1024, pages_per_segment=16,
                pool_pages=64, worker_threads=2, duration_s=4.0,
                failure_time_s=1.0, run_size_limit=128, seed=11,
                policy=Policy.PREEMPTIVE)
    base.update(kw)
    return WorkloadConfig(**base)


def test_config_rejected_when_failure_after_duration():
    with pytest.raises(ValueError):
        run_benchmark(tiny_config(duration_s=1.0, failure_time_s=5.0))


def test_shadow_execution_oracle():
    out = verify_equivalence(tiny_config(txns_per_worker=(60, 60)))
    assert out["oracle_match"] and out["shadow_match"] and out["ok"]


def test_reproducible_wal_and_volume(tmp_path):
    digests = []
    for attempt in range(2):
        workdir = str(tmp_path / f"run{attempt}")
        engine = BenchEngine(tiny_config(txns_per_worker=(80, 80)), workdir,
                             finish_restore=True)
        engine.run()
        engine.flush_all()
        wal_hash = hashlib.sha256(open(os.path.join(workdir, "wal.log"), "rb").read())
        vol_hash = hashlib.sha256(open(os.path.join(workdir, "replacement.db"), "rb").read())
        digests.append((wal_hash.hexdigest(), vol_hash.hexdigest()))
        engine.close()
    assert digests[0] == digests[1]


def test_report_series_shape():
    report = run_benchmark(tiny_config(duration_s=3.0, failure_time_s=1.0))
    assert len(report.throughput_rows()) == 3
    assert len(report.restore_rows()) == 3
    assert report.total_txns > 0
    assert report.restore_begin_us is not None
    assert all(report.invariants.values())
    assert report.pre_failure_latencies() and report.post_failure_latencies()


def test_csv_emission(tmp_path):
    out_dir = str(tmp_path / "csv")
    run_benchmark(tiny_config(duration_s=2.0, out_dir=out_dir))
    assert sorted(os.listdir(out_dir)) == ["latency_samples.csv", "restore.csv",
                                           "throughput.csv"]


def test_cli_run_and_exit_codes(tmp_path, capsys):
    rc = main(["run", "--pages", "256", "--page-size", "1024",
               "--segment-pages", "16", "--pool-pages", "64", "--threads", "2",
               "--duration", "2", "--fail-at", "1", "--run-limit", "128",
               "--seed", "4", "--out", str(tmp_path / "out")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "invariant" in out and "VIOLATED" not in out
    assert (tmp_path / "out" / "throughput.csv").exists()


def test_cli_verify(capsys):
    rc = main(["verify", "--pages", "128", "--page-size", "1024",
               "--segment-pages", "8", "--pool-pages", "32", "--threads", "2",
               "--duration", "2", "--fail-at", "1", "--run-limit", "64",
               "--seed", "5"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "FAIL" not in out


def test_cli_rejects_bad_config(capsys):
    rc = main(["run", "--pages", "64", "--duration", "1", "--fail-at", "5"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_cli_overhead(capsys):
    rc = main(["overhead", "--pages", "128", "--page-size", "1024",
               "--segment-pages", "8", "--pool-pages", "64", "--threads", "2",
               "--duration", "3", "--run-limit", "128", "--seed", "6"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "overhead ratio" in out


def test_overhead_modes_log_identical_work(tmp_path):
    """Archiving is passive: the sorted and copy runs of the same seed log
    the exact same bytes."""
    digests = []
    for mode in ("sorted", "copy"):
        cfg = tiny_config(failure_time_s=None, archive_mode=mode,
                          txns_per_worker=(120, 0), duration_s=30.0)
        workdir = str(tmp_path / mode)
        engine = BenchEngine(cfg, workdir, inject_failure=False)
        engine.run()
        engine.wal.flush()
        digests.append(hashlib.sha256(
            open(os.path.join(workdir, "wal.log"), "rb").read()).hexdigest())
        engine.close()
    assert digests[0] == digests[1]


def test_single_worker_tiny_config_shadow():
    out = verify_equivalence(tiny_config(page_count=64, pages_per_segment=8,
                                         pool_pages=16, worker_threads=1,
                                         txns_per_worker=(40, 40)))
    assert out["ok"]


def test_large_pool_hides_the_failure():
    """With the pool covering the working set, post-failure mean latency
    stays within 2x of the pre-failure mean."""
    cfg = tiny_config(page_count=1024, pages_per_segment=16, pool_pages=600,
                      working_set_pages=512, worker_threads=2,
                      duration_s=8.0, failure_time_s=3.0, skew=0.8)
    report = run_benchmark(cfg)
    pre = report.pre_failure_latencies()
    post = report.post_failure_latencies()
    pre_mean = sum(pre) / len(pre)
    post_mean = sum(post) / len(post)
    assert post_mean < 2 * pre_mean


def test_wall_clock_paces_run():
    import time
    cfg = tiny_config(page_count=64, pages_per_segment=8, pool_pages=16,
                      worker_threads=1, duration_s=0.3, failure_time_s=0.1,
                      wall_clock=True)
    t0 = time.monotonic()
    run_benchmark(cfg)
    assert time.monotonic() - t0 >= 0.25
