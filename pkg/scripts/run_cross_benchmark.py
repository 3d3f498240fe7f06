"""Cross-function benchmark: LGR vs LWR over seeds and w_gen values.

Writes a summary table (CSV) and the full per-run report (JSON), then prints
the table. Extra arguments are passed through to ``lgr benchmark``.

    python scripts/run_cross_benchmark.py --out-dir results/cross
    python scripts/run_cross_benchmark.py --out-dir /tmp/quick --seeds 1 --iters 100
"""

import argparse
import sys
from pathlib import Path

from lgr.cli import main


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results/cross")
    parser.add_argument("--learning-rate", default="0.1")
    args, passthrough = parser.parse_known_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "table.csv"
    code = main(["-v", "benchmark", "--learning-rate", args.learning_rate, "--deterministic",
                 "--out", str(table), "--report", str(out / "report.json"), *passthrough])
    if code == 0:
        print(table.read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(run())
