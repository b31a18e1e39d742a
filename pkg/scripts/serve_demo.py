#!/usr/bin/env python3
"""Run a demo rating server backed by synthetic cases.

Used manually and by the frontend integration test. The server enforces
the rating protocol (5-second minimum dwell, 15-minute work / 5-minute
break cycle) against the wall clock.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import uvicorn

from editqa.api import create_app
from editqa.rating_service import CasePayload, RatingService, RatingStore


def build_service(journal: Path, n_cases: int, seed: int) -> RatingService:
    cases = [
        CasePayload(
            case_id=f"demo{i:03d}",
            source_url=f"/static/demo{i:03d}_src.png",
            edited_url=f"/static/demo{i:03d}_edt.png",
            prompt=f"demo prompt {i}",
        )
        for i in range(n_cases)
    ]
    return RatingService(cases, RatingStore(journal), seed=seed)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--cases", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--journal", default="demo_journal.jsonl")
    args = parser.parse_args()

    service = build_service(Path(args.journal), args.cases, args.seed)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
