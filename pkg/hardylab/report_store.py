"""
Report sink: newline-delimited JSON or flat CSV, a separate metadata file, and
a paginated archive of the worst ratios per check.
"""

import csv
import io
import json
import logging
import math
import sys
from datetime import datetime, timezone

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv")
CSV_COLUMNS = ("check", "lhs", "rhs", "constant", "ratio", "pass", "degenerate", "mode",
               "n", "N", "degree", "seed", "paths", "dt")


class ReportStoreError(OSError):
    """Raised when a report file cannot be written or read."""
    pass


def jsonable(value):
    """Plain JSON types: numpy scalars and arrays unwrapped, complex as [re, im], non-finite as None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "tolist"):
        return jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


class ReportStore:
    """
    Collects InequalityReport-like records and writes them in a stable order.

    Records are anything with a to_dict() method, or plain dicts. Identical
    inputs give byte-identical report files; timestamps and thread counts go to
    `<out>.meta.json` only.
    """

    def __init__(self, out_path=None, fmt="json", stream=None):
        """
        Args:
            out_path: report file, or None to write to stream
            fmt: "json" (NDJSON plus a summary line) or "csv"
            stream: text stream used when out_path is None (default stdout)
        """
        if fmt not in FORMATS:
            raise ValueError(f"Unknown report format {fmt!r}, expected one of {FORMATS}")
        self.out_path = out_path
        self.fmt = fmt
        self.stream = stream
        self.records = []
        self.started = _utc_now()

    def add(self, record):
        record = record.to_dict() if hasattr(record, "to_dict") else dict(record)
        self.records.append(jsonable(record))
        return record

    def extend(self, records):
        for record in records:
            self.add(record)

    def summary(self):
        """
        Counts per check plus the largest ratio seen for each.

        Returns:
            dict: {"records", "passed", "failed", "degenerate", "checks": {check: {...}}}
        """
        checks = {}
        totals = {"records": 0, "passed": 0, "failed": 0, "degenerate": 0}
        for record in self.records:
            entry = checks.setdefault(record["check"], {"records": 0, "passed": 0, "failed": 0,
                                                        "degenerate": 0, "max_ratio": None})
            outcome = "degenerate" if record.get("degenerate") else ("passed" if record.get("pass") else "failed")
            for target in (entry, totals):
                target["records"] += 1
                target[outcome] += 1
            ratio = record.get("ratio")
            if ratio is not None and (entry["max_ratio"] is None or ratio > entry["max_ratio"]):
                entry["max_ratio"] = ratio
        totals["checks"] = dict(sorted(checks.items()))
        return totals

    def worst_ratios(self, check=None, page=0, page_size=25):
        """
        Paginated records sorted by ratio, largest first.

        Args:
            check: restrict to one check id
            page: page number, 0-based (page 0 holds the worst ratios)
            page_size: records per page

        Returns:
            dict: {
                'stats': [{'check', 'ratio', 'constant', 'seed', 'n', 'N', 'degree'}, ...],
                'pagination': {'page', 'page_size', 'total_items', 'total_pages',
                               'has_prev', 'has_next', 'prev_page', 'next_page'}
            }
        """
        rated = [r for r in self.records
                 if r.get("ratio") is not None and (check is None or r["check"] == check)]
        # Ties keep insertion order
        ordered = sorted(rated, key=lambda r: r["ratio"], reverse=True)

        total_items = len(ordered)
        total_pages = (total_items + page_size - 1) // page_size
        if page < 0:
            page = 0
        elif total_pages > 0 and page >= total_pages:
            page = total_pages - 1

        start_index = page * page_size
        page_stats = [{key: r.get(key) for key in ("check", "ratio", "constant", "seed", "n", "N", "degree")}
                      for r in ordered[start_index:start_index + page_size]]
        pagination = {
            "page": page,
            "page_size": page_size,
            "total_items": total_items,
            "total_pages": total_pages,
            "has_prev": page > 0,
            "has_next": page < total_pages - 1,
            "prev_page": page - 1 if page > 0 else None,
            "next_page": page + 1 if page < total_pages - 1 else None,
        }
        return {"stats": page_stats, "pagination": pagination}

    def render(self):
        """Report text for the configured format."""
        if self.fmt == "csv":
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for record in self.records:
                mc = record.get("mc") or {}
                row = [record.get(c) for c in CSV_COLUMNS[:-2]] + [mc.get("paths"), mc.get("dt")]
                writer.writerow(["" if value is None else value for value in row])
            return buffer.getvalue()
        lines = [json.dumps(record, sort_keys=True) for record in self.records]
        lines.append(json.dumps({"summary": self.summary()}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, meta=None):
        """
        Write the report and, when writing to a file, `<out>.meta.json`.

        Args:
            meta: extra run metadata (threads, argv, ...) for the metadata file

        Raises:
            ReportStoreError: the file could not be written
        """
        text = self.render()
        if self.out_path is None:
            (self.stream or sys.stdout).write(text)
            return None
        meta_path = f"{self.out_path}.meta.json"
        metadata = dict(jsonable(meta or {}), started=self.started, finished=_utc_now(),
                        records=len(self.records), format=self.fmt)
        try:
            with open(self.out_path, "w", newline="") as handle:
                handle.write(text)
            with open(meta_path, "w") as handle:
                json.dump(metadata, handle, sort_keys=True, indent=2)
        except OSError as e:
            logger.warning(f"Report write failed for {self.out_path}: {e}")
            raise ReportStoreError(f"Failed to write report {self.out_path}: {e}")
        logger.info(f"Wrote {len(self.records)} records to {self.out_path}")
        return meta_path


def load_reports(path):
    """
    Read an NDJSON report back.

    Returns:
        tuple: (records: list of dict, summary: dict|None)
    """
    records, summary = [], None
    try:
        with open(path) as handle:
            for line in handle:
                if not line.strip():
                    continue
                item = json.loads(line)
                if "summary" in item and len(item) == 1:
                    summary = item["summary"]
                else:
                    records.append(item)
    except (OSError, json.JSONDecodeError) as e:
        raise ReportStoreError(f"Failed to read report {path}: {e}")
    return records, summary
