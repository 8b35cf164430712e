"""Run the CLI pipeline for every config in configs/ into runs/<name>/."""
import sys
from pathlib import Path

from qgt.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    names = sys.argv[1:] or ["noiseless", "table1", "drift"]
    for name in names:
        code = main(["--out-dir", str(ROOT / "runs" / name), "pipeline",
                     "--config", str(ROOT / "configs" / f"{name}.json"), "--seed", "1"])
        print(f"{name}: exit {code}")
