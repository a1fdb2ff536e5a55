"""Report bundles and their on-disk form."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..monitor import Alert

SERIES_HEADER = ("time_s", "thermometer_id", "raw_c", "smoothed_c", "truth_c")


def node_label(node_id: int) -> str:
    return f"{node_id:#018x}"


@dataclass
class ReportBundle:
    kind: str
    seed: int
    config_hash: str
    metrics: dict
    series: list[tuple] = field(default_factory=list)
    alerts: list[Alert] = field(default_factory=list)

    def metrics_json(self) -> str:
        doc = {"run": {"kind": self.kind, "seed": self.seed, "config_hash": self.config_hash}, **self.metrics}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def series_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for time_s, node, raw, smoothed, truth in self.series:
            writer.writerow(
                [repr(float(time_s)), node_label(node), repr(float(raw)),
                 "" if smoothed is None else repr(float(smoothed)), repr(float(truth))]
            )
        return buf.getvalue()

    def alerts_ndjson(self) -> str:
        return "".join(a.to_json() + "\n" for a in self.alerts)

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "metrics": out / f"{self.kind}_metrics.json",
            "series": out / f"{self.kind}_series.csv",
            "alerts": out / f"{self.kind}_alerts.ndjson",
        }
        paths["metrics"].write_text(self.metrics_json(), encoding="utf-8")
        paths["series"].write_text(self.series_csv(), encoding="utf-8")
        paths["alerts"].write_text(self.alerts_ndjson(), encoding="utf-8")
        return paths
