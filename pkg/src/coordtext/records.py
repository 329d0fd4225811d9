"""Line-delimited record files with embedded provenance.

Every output file starts with one meta line carrying the effective config,
its digest, and a digest over the record lines, so any file can be verified
and any run reproduced from its own header. Serialization is canonical
(sorted keys, fixed separators): identical inputs give identical bytes.
"""

import hashlib
import json
from pathlib import Path


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _records_digest(lines: list[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def write_records(path, records: list[dict], config: dict, kind: str) -> str:
    """Write records with a leading meta line; returns the config digest."""
    lines = [canonical_json(rec) for rec in records]
    digest = config_digest(config)
    meta = {
        "record_type": "meta",
        "kind": kind,
        "count": len(records),
        "config": config,
        "config_digest": digest,
        "records_digest": _records_digest(lines),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(meta) + "\n")
        for line in lines:
            fh.write(line + "\n")
    return digest


def read_records(path) -> tuple[dict, list[dict]]:
    """Read a record file; returns (meta, records). Files without a meta line
    get an empty meta dict."""
    meta: dict = {}
    records: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if i == 0 and row.get("record_type") == "meta":
                meta = row
                continue
            records.append(row)
    return meta, records


def verify_records(path) -> list[str]:
    """Recompute embedded digests; returns a list of problems (empty = ok)."""
    problems = []
    meta, records = read_records(path)
    if not meta:
        return [f"{path}: no meta line"]
    lines = [canonical_json(rec) for rec in records]
    if meta.get("count") != len(records):
        problems.append(f"{path}: meta count {meta.get('count')} != {len(records)} records")
    if _records_digest(lines) != meta.get("records_digest"):
        problems.append(f"{path}: records digest mismatch")
    if config_digest(meta.get("config", {})) != meta.get("config_digest"):
        problems.append(f"{path}: config digest mismatch")
    return problems


def write_json(path, value: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(value, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
