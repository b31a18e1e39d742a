"""Row-oriented evaluation reports shared by baselines and training."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class EvalReport:
    """Metric rows plus enough provenance to reproduce them.

    Each row is a flat dict; baseline reports use one row per scorer,
    cross-validation reports one row per fold plus a mean row.
    """

    label: str
    rows: list[dict] = field(default_factory=list)
    config_fingerprint: dict = field(default_factory=dict)
    partial: bool = False
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "label": self.label,
            "config_fingerprint": self.config_fingerprint,
            "partial": self.partial,
            "notes": self.notes,
            "rows": self.rows,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "EvalReport":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            label=payload["label"],
            rows=payload["rows"],
            config_fingerprint=payload.get("config_fingerprint", {}),
            partial=payload.get("partial", False),
            notes=payload.get("notes", []),
        )

    def write_csv(self, path) -> Path:
        path = Path(path)
        if self.rows:
            fields = list(self.rows[0].keys())
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=fields)
                writer.writeheader()
                writer.writerows(self.rows)
        else:
            path.write_text("", encoding="utf-8")
        return path


def render_comparison(reports: list[EvalReport]) -> str:
    """Plain-text table of summary rows across stored reports."""
    lines = [f"{'label':<28}{'srocc':>10}{'plcc':>10}{'krcc':>10}{'rmse':>10}"]
    for rep in reports:
        summary = None
        for row in rep.rows:
            if row.get("fold") == "mean" or "scorer" in row:
                summary = row
                if row.get("fold") == "mean":
                    break
        for row in [summary] if summary and "scorer" not in summary else (
            [r for r in rep.rows if "scorer" in r] or [summary]
        ):
            if row is None:
                continue
            name = row.get("scorer") or rep.label
            lines.append(
                f"{name:<28}"
                + "".join(
                    f"{_fmt(row.get(m)):>10}" for m in ("srocc", "plcc", "krcc", "rmse")
                )
            )
    return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return f"{v:.4f}"
