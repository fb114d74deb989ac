"""Human-readable run summaries.

Numbers are copied from the artifact files as text: JSON numbers are parsed
with their literal spelling kept and CSV cells are never converted, so the
report shows exactly what was stored.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..core import PolifeatError
from ..serialize import sha256_file, write_text_atomic
from .pipeline import MANIFEST

ABSENT = "absent"
TOP_K = 5


class IntegrityError(PolifeatError):
    pass


def _literal_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"), parse_float=str, parse_int=str)


def _cell(v) -> str:
    if v is None:
        return ABSENT
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return "[" + ",".join(_cell(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ",".join(f"{k}:{_cell(x)}" for k, x in v.items()) + "}"
    return str(v)


def _csv_rows(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def verify(out: str | Path) -> dict:
    """Load the manifest and check every recorded artifact against its digest."""
    out = Path(out)
    mpath = out / MANIFEST
    if not mpath.is_file():
        raise IntegrityError(f"no {MANIFEST} in {out}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    for name, digest in sorted(manifest["artifacts"].items()):
        path = out / name
        if not path.is_file():
            raise IntegrityError(f"artifact {name} listed in the manifest is missing")
        actual = sha256_file(path)
        if actual != digest:
            raise IntegrityError(f"artifact {name}: checksum {actual[:12]} does not match manifest {digest[:12]}")
    return manifest


def build_report(out: str | Path) -> tuple[str, list[tuple[str, str, str]]]:
    """Return the plain-text report and its (section, key, value) rows."""
    out = Path(out)
    manifest = verify(out)
    arts = manifest["artifacts"]
    rows: list[tuple[str, str, str]] = []

    def add(section, key, value):
        rows.append((section, key, _cell(value)))

    add("run", "config_hash", manifest["config_hash"])
    add("run", "seed", manifest["seed"])
    for st in manifest["stages"]:
        add("run", f"stage:{st['name']}", st["status"])
    add("run", "failed_stage", manifest.get("failed_stage"))

    if "metrics.json" in arts:
        doc = _literal_json(out / "metrics.json")
        add("metrics", "task", doc["task"])
        add("metrics", "split", doc["split"])
        m = doc["metrics"]
        for key in ("auc", "accuracy", "mse"):
            add("metrics", key, m.get(key))
        for key in sorted(set(m) - {"auc", "accuracy", "mse"}):
            add("metrics", key, m[key])
        for key, val in sorted((doc.get("rnn_metrics") or {}).items()):
            add("metrics", f"rnn_{key}", val)
    else:
        for key in ("auc", "accuracy", "mse"):
            add("metrics", key, None)

    if "importance.csv" in arts:
        imp = _csv_rows(out / "importance.csv")
        imp.sort(key=lambda r: -float(r["importance"]))
        for rank, r in enumerate(imp, 1):
            add("importance", f"{rank}:{r['feature']}({r['kind']})", f"{r['importance']} +/- {r['std']}")

    if "substructure.json" in arts:
        doc = _literal_json(out / "substructure.json")
        add("explanation", "graph_id", doc["graph_id"])
        add("explanation", "edges", doc["edges"])
        add("explanation", "probability", doc["probability"])

    if "hawkes_metrics.json" in arts:
        doc = _literal_json(out / "hawkes_metrics.json")
        for key in ("events", "iterations", "converged", "objective", "tau", "edges", "recovery_auc"):
            add("hawkes", key, doc.get(key))

    if "attack.csv" in arts:
        for r in _csv_rows(out / "attack.csv")[:TOP_K]:
            add("attack", f"{r['rank']}:{r['action']}", f"{r['score']} (delta {r['delta']})")
        doc = _literal_json(out / "attack.json")
        for key in ("baseline", "nominee", "nominee_probability", "checkpoint_id", "dataset_id"):
            add("attack", key, doc.get(key))
        for p in doc.get("persuadable", []):
            add("attack", f"persuadable:{p['node']}", p["prob"])
        if "portfolio" in doc:
            add("attack", "portfolio", doc["portfolio"]["chosen"])
            add("attack", "portfolio_value", doc["portfolio"]["expected_successes"])

    if "defend.json" in arts:
        doc = _literal_json(out / "defend.json")
        for key in ("removal", "value", "baseline"):
            add("defend", key, doc.get(key))

    return _render(rows), rows


def _render(rows) -> str:
    lines = []
    section = None
    width = max((len(k) for _, k, _ in rows), default=0)
    for sec, key, val in rows:
        if sec != section:
            if lines:
                lines.append("")
            lines += [sec, "-" * len(sec)]
            section = sec
        lines.append(f"{key.ljust(width)}  {val}")
    return "\n".join(lines) + "\n"


def write_report(out: str | Path, dest: str | Path | None = None, figures: bool = True) -> list[Path]:
    """Write report.txt and report.csv (plus PNG figures) under ``dest``."""
    out = Path(out)
    dest = Path(dest) if dest is not None else out / "report"
    text, rows = build_report(out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "key", "value"])
    w.writerows(rows)
    written = [write_text_atomic(dest / "report.txt", text), write_text_atomic(dest / "report.csv", buf.getvalue())]
    if figures:
        written += _figures(out, dest)
    return written


def _figures(out: Path, dest: Path) -> list[Path]:
    from .. import plotting
    from ..serialize import checkpoint_loads
    from ..synthgen import HawkesParams

    paths = []
    if (out / "history.csv").is_file():
        paths.append(plotting.plot_history(_csv_rows(out / "history.csv"), dest / "history.png"))
    if (out / "importance.csv").is_file():
        paths.append(plotting.plot_importance(_csv_rows(out / "importance.csv"), dest / "importance.png"))
    if (out / "hawkes_model.json").is_file():
        _, dims, flat = checkpoint_loads((out / "hawkes_model.json").read_text(encoding="utf-8"))
        P = HawkesParams.from_flat(flat, int(dims["n"]))
        paths.append(plotting.plot_influence(P.W, dest / "hawkes_W.png"))
    if (out / "attack.csv").is_file():
        paths.append(plotting.plot_ranking(_csv_rows(out / "attack.csv")[:10], dest / "attack.png",
                                           "edge additions ranked by outcome change"))
    return paths
