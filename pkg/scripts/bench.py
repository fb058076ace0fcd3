"""Time the full 12-profile assess run on a large synthetic dataset.

Generates the CDR once (cached under --workdir), then runs
``reidrisk assess`` in a child process and reports wall time and the
child's peak resident memory.

    python3 scripts/bench.py --users 100000 --records 10000000
"""

import argparse
import json
import math
import resource
import subprocess
import sys
import time
from pathlib import Path


def ensure_data(workdir: Path, users: int, records: int, seed: int) -> Path:
    data = workdir / f"u{users}_r{records}_s{seed}"
    if (data / "cdr.csv").exists() and (data / "hierarchy.csv").exists():
        return data
    # log-normal with sigma 1: mean = median * e^0.5
    median = records / users / math.exp(0.5)
    subprocess.run(
        [sys.executable, "-m", "reidrisk", "generate", "--users", str(users), "--days", "30",
         "--median-calls", f"{median:.6f}", "--seed", str(seed), "--out", str(data)],
        check=True,
    )
    return data


def run_assess(data: Path, trials: int, threads, extra=()) -> dict:
    cmd = [sys.executable, "-m", "reidrisk"]
    if threads:
        cmd += ["--threads", str(threads)]
    cmd += ["assess", "--cdr", str(data / "cdr.csv"), "--hierarchy", str(data / "hierarchy.csv"),
            "--trials", str(trials), "--format", "csv", "--out", str(data / "report.csv"), *extra]
    before = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    t0 = time.perf_counter()
    subprocess.run(cmd, check=True)
    seconds = time.perf_counter() - t0
    peak_kb = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    with open(data / "cdr.csv", "rb") as fh:
        n_records = sum(1 for _ in fh) - 1
    return {
        "seconds": seconds,
        "peak_rss_gb": max(peak_kb, before) / 1024 ** 2,
        "records": n_records,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=100_000)
    ap.add_argument("--records", type=int, default=10_000_000)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workdir", type=Path, default=Path("bench_data"))
    args = ap.parse_args(argv)
    args.workdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data = ensure_data(args.workdir, args.users, args.records, args.seed)
    gen_s = time.perf_counter() - t0
    result = run_assess(data, args.trials, args.threads)
    result.update(users=args.users, trials=args.trials, generate_seconds=gen_s)
    print(json.dumps(result, indent=2))
    return result


if __name__ == "__main__":
    main()
