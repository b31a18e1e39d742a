#!/usr/bin/env python3
"""End-to-end smoke run on synthetic data: build a study, derive MOS,
run the baseline scorers, and do a k=2 cross-validation with a tiny
model config. Finishes in well under a minute on a laptop CPU."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
TINY_CONFIG = {
    "model": {
        "backbone": {"name": "stub", "d_v": 4, "d_t": 4, "token_limit": 12,
                     "vocab": 32},
        "d_a": 4, "d_o": 4, "d_q": 4, "d_qv": 4,
        "ff_hidden": 6, "q_hidden": 6, "head_hidden": 8, "n_heads": 1,
    },
    "train": {"lr": 1e-2, "batch_size": 8, "stage1_epochs": 8,
              "stage2_epochs": 4},
}


def run(*args: str) -> None:
    cmd = [sys.executable, "-m", "editqa.cli", *args]
    print("+", " ".join(cmd))
    subprocess.run(cmd, check=True, cwd=ROOT)


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        subprocess.run(
            [sys.executable, str(ROOT / "scripts" / "make_synthetic_study.py"),
             "--out", str(tmp_path), "--cases", "20"],
            check=True,
        )
        config = tmp_path / "config.json"
        config.write_text(json.dumps(TINY_CONFIG))

        run("mos", "--ratings", str(tmp_path / "ratings.csv"),
            "--out", str(tmp_path / "mos"))
        run("baselines", "--case-store", str(tmp_path / "store"),
            "--mos", str(tmp_path / "mos" / "mos.csv"),
            "--out", str(tmp_path / "baselines"))
        run("--seed", "0", "train", "--case-store", str(tmp_path / "store"),
            "--mos", str(tmp_path / "learnable_mos.csv"),
            "--config", str(config), "--k", "2",
            "--out", str(tmp_path / "cv"))
        report = json.loads((tmp_path / "cv" / "report.json").read_text())
        mean = next(r for r in report["rows"] if r["fold"] == "mean")
        print(f"smoke CV mean SROCC: {mean['srocc']:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
