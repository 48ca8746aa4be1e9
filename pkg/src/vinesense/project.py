"""Project directory layout, configuration, artifact store and CSV ingestion.

A project is a plain directory:

    project.json            configuration (sites, plots, QC rules, seeds)
    knowledge.json          optional knowledge file (defaults to the shipped one)
    raw/                    normalized ingested inputs (CSV)
    artifacts/              derived, diff-able pipeline outputs (CSV/JSON)
    artifacts/manifest.json input-content hashes per artifact
    selections/             one committed breakpoint selection per plot-treatment

Every derived artifact records the sha256 of the inputs it was computed
from, so staleness is detectable before any downstream stage consumes it.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import datetime
from pathlib import Path

from .errors import ConfigurationError, ValidationError
from .knowledge import KnowledgeBase, load_kb, default_kb_path
from .meteo import SiteConfig
from .sapflow import QcRuleset

RAW_DIR = "raw"
ARTIFACT_DIR = "artifacts"
SELECTION_DIR = "selections"
MANIFEST = "manifest.json"

METEO_HEADER = [
    "timestamp", "temp_air", "rel_humidity", "wind_speed",
    "solar_radiation", "precipitation",
]
SAPFLOW_HEADER = ["timestamp", "sensor_id", "plot_id", "treatment", "rate_g_per_h"]
PHENOLOGY_HEADER = ["plot_id", "stage", "date"]
LWP_HEADER = ["date", "plot_id", "treatment", "lwp_mpa"]
FRUIT_HEADER = ["date", "plot_id", "treatment", "berry_weight", "sugar", "acidity"]

KNOWN_STAGES = ("budbreak", "bloom", "nouaison", "veraison", "maturity", "harvest")


@dataclass
class PlotConfig:
    plot_id: str
    site: str
    variety: str
    region: str | None
    treatments: list[str]
    area_m2: float

    def __post_init__(self):
        if self.area_m2 <= 0:
            raise ConfigurationError(f"plot {self.plot_id}: area_m2 must be > 0")
        if not self.treatments:
            raise ConfigurationError(f"plot {self.plot_id}: no treatments declared")


@dataclass
class ProjectConfig:
    seed: int
    sites: dict[str, SiteConfig]
    plots: dict[str, PlotConfig]
    qc: QcRuleset = field(default_factory=QcRuleset)
    ks_cap: float = 1.2
    derivative_epsilon: float = 0.01
    vpd_limit_kpa: float = 3.5
    knowledge_file: str | None = None
    cart: dict = field(default_factory=dict)
    flrti: dict = field(default_factory=dict)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigurationError(f"{where}: missing required key {key!r}")
    return doc[key]


def load_config(path: Path) -> ProjectConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    sites = {}
    for name, entry in _require(doc, "sites", str(path)).items():
        sites[name] = SiteConfig(
            latitude_deg=_require(entry, "latitude_deg", f"site {name}"),
            longitude_deg=_require(entry, "longitude_deg", f"site {name}"),
            elevation_m=_require(entry, "elevation_m", f"site {name}"),
            tz_meridian_deg=entry.get("tz_meridian_deg"),
        )
    plots = {}
    for name, entry in _require(doc, "plots", str(path)).items():
        site = _require(entry, "site", f"plot {name}")
        if site not in sites:
            raise ConfigurationError(f"plot {name} references unknown site {site!r}")
        plots[name] = PlotConfig(
            plot_id=name,
            site=site,
            variety=_require(entry, "variety", f"plot {name}"),
            region=entry.get("region"),
            treatments=list(_require(entry, "treatments", f"plot {name}")),
            area_m2=float(_require(entry, "area_m2", f"plot {name}")),
        )
    qc = QcRuleset(**doc.get("qc", {}))
    return ProjectConfig(
        seed=int(doc.get("seed", 0)),
        sites=sites,
        plots=plots,
        qc=qc,
        ks_cap=float(doc.get("ks_cap", 1.2)),
        derivative_epsilon=float(doc.get("derivative_epsilon", 0.01)),
        vpd_limit_kpa=float(doc.get("vpd_limit_kpa", 3.5)),
        knowledge_file=doc.get("knowledge_file"),
        cart=doc.get("cart", {}),
        flrti=doc.get("flrti", {}),
    )


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Project:
    """Artifact store with input-content hashing and staleness checks."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        config_path = self.root / "project.json"
        if not config_path.exists():
            raise ConfigurationError(f"no project.json under {self.root}")
        self.config = load_config(config_path)
        for sub in (RAW_DIR, ARTIFACT_DIR, SELECTION_DIR):
            (self.root / sub).mkdir(exist_ok=True)

    # -- knowledge -------------------------------------------------------

    def knowledge(self) -> KnowledgeBase:
        if self.config.knowledge_file:
            return load_kb(self.root / self.config.knowledge_file)
        return load_kb(default_kb_path())

    def knowledge_path(self) -> Path:
        if self.config.knowledge_file:
            return self.root / self.config.knowledge_file
        return default_kb_path()

    # -- paths -----------------------------------------------------------

    def raw_path(self, name: str) -> Path:
        return self.root / RAW_DIR / name

    def artifact_path(self, name: str) -> Path:
        return self.root / ARTIFACT_DIR / name

    def selection_path(self, plot_id: str, treatment: str) -> Path:
        return self.root / SELECTION_DIR / f"{plot_id}_{treatment}.json"

    # -- manifest --------------------------------------------------------

    def _manifest(self) -> dict:
        path = self.artifact_path(MANIFEST)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        return {}

    def _write_manifest(self, manifest: dict):
        with open(self.artifact_path(MANIFEST), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def record_artifact(self, name: str, content: str, inputs: list[Path]):
        """Write an artifact and record the hashes of the inputs it came
        from (plus the project configuration)."""
        path = self.artifact_path(name)
        path.write_text(content, encoding="utf-8")
        manifest = self._manifest()
        manifest[name] = {
            "inputs": {
                str(p.relative_to(self.root)) if p.is_relative_to(self.root)
                else str(p): sha256_file(p)
                for p in sorted(set(inputs))
            },
            "config": sha256_file(self.root / "project.json"),
        }
        self._write_manifest(manifest)

    def check_fresh(self, names: list[str]):
        """Raise listing every stale or missing artifact in ``names``."""
        manifest = self._manifest()
        stale, missing = [], []
        config_hash = sha256_file(self.root / "project.json")
        for name in names:
            if name not in manifest or not self.artifact_path(name).exists():
                missing.append(name)
                continue
            entry = manifest[name]
            ok = entry.get("config") == config_hash
            for rel, digest in entry.get("inputs", {}).items():
                p = self.root / rel if not Path(rel).is_absolute() else Path(rel)
                ok = ok and p.exists() and sha256_file(p) == digest
            if not ok:
                stale.append(name)
        if missing:
            raise ValidationError(
                "missing artifacts: " + ", ".join(missing)
                + " (run the producing stage first)"
            )
        if stale:
            raise ValidationError(
                "stale artifacts (inputs changed since they were computed): "
                + ", ".join(stale) + " — re-run their stages"
            )


# -- CSV ingestion -------------------------------------------------------


@dataclass
class IngestReport:
    kind: str
    accepted: int = 0
    rejected: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "accepted": self.accepted,
            "rejected": self.rejected,
        }


def _read_rows(path: Path, header: list[str], kind: str):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ValidationError(f"{kind} file {path} is empty")
        if got != header:
            raise ValidationError(
                f"{kind} file {path}: header {got!r} does not match "
                f"expected {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{kind} file {path} line {lineno}: expected "
                    f"{len(header)} fields, got {len(row)}"
                )
            yield lineno, dict(zip(header, row))


def _parse_float(value: str, column: str, lineno: int):
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise ValidationError(
            f"line {lineno}, column {column}: {value!r} is not a number"
        )


def _parse_timestamp(value: str, lineno: int) -> datetime:
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        raise ValidationError(
            f"line {lineno}, column timestamp: {value!r} is not ISO-8601"
        )


def _parse_date(value: str, lineno: int) -> Date:
    try:
        return Date.fromisoformat(value)
    except ValueError:
        raise ValidationError(
            f"line {lineno}, column date: {value!r} is not an ISO date"
        )


def _normalize(rows: list[list[str]], header: list[str]) -> str:
    out = [",".join(header)]
    out += [",".join(row) for row in rows]
    return "\n".join(out) + "\n"


def ingest_meteo(project: Project, source: Path, site: str) -> IngestReport:
    """Validate and normalize one site's hourly weather file.

    Rows with an out-of-range value are rejected into the report (the file
    is still ingested); duplicated timestamps are a hard error.
    """
    if site not in project.config.sites:
        raise ValidationError(f"unknown site {site!r}")
    report = IngestReport(kind="meteo")
    rows = []
    seen: dict[datetime, int] = {}
    for lineno, rec in _read_rows(source, METEO_HEADER, "meteo"):
        try:
            ts = _parse_timestamp(rec["timestamp"], lineno)
            if ts in seen:
                raise ValidationError(
                    f"duplicate timestamp {ts.isoformat()} at lines "
                    f"{seen[ts]} and {lineno}"
                )
            seen[ts] = lineno
            values = {
                col: _parse_float(rec[col], col, lineno)
                for col in METEO_HEADER[1:]
            }
            rh = values["rel_humidity"]
            if rh is not None and not 0.0 <= rh <= 100.0:
                raise ValidationError(
                    f"line {lineno}, column rel_humidity: {rh} outside [0, 100]"
                )
            for col in ("wind_speed", "solar_radiation", "precipitation"):
                if values[col] is not None and values[col] < 0:
                    raise ValidationError(
                        f"line {lineno}, column {col}: {values[col]} < 0"
                    )
        except ValidationError as exc:
            if "duplicate timestamp" in str(exc):
                raise
            report.rejected.append({"line": lineno, "reason": str(exc)})
            continue
        rows.append([rec[col] for col in METEO_HEADER])
        report.accepted += 1
    target = project.raw_path(f"meteo_{site}.csv")
    target.write_text(_normalize(rows, METEO_HEADER), encoding="utf-8")
    _write_report(project, f"ingest_meteo_{site}.json", report)
    return report


def ingest_sapflow(project: Project, source: Path) -> IngestReport:
    report = IngestReport(kind="sapflow")
    rows = []
    seen: dict[tuple, int] = {}
    for lineno, rec in _read_rows(source, SAPFLOW_HEADER, "sapflow"):
        try:
            ts = _parse_timestamp(rec["timestamp"], lineno)
            key = (rec["sensor_id"], ts)
            if key in seen:
                raise ValidationError(
                    f"duplicate timestamp {ts.isoformat()} for sensor "
                    f"{rec['sensor_id']} at lines {seen[key]} and {lineno}"
                )
            seen[key] = lineno
            if rec["plot_id"] not in project.config.plots:
                raise ValidationError(
                    f"line {lineno}, column plot_id: unknown plot {rec['plot_id']!r}"
                )
            plot = project.config.plots[rec["plot_id"]]
            if rec["treatment"] not in plot.treatments:
                raise ValidationError(
                    f"line {lineno}, column treatment: {rec['treatment']!r} "
                    f"not declared for plot {rec['plot_id']}"
                )
            _parse_float(rec["rate_g_per_h"], "rate_g_per_h", lineno)
        except ValidationError as exc:
            if "duplicate timestamp" in str(exc):
                raise
            report.rejected.append({"line": lineno, "reason": str(exc)})
            continue
        rows.append([rec[col] for col in SAPFLOW_HEADER])
        report.accepted += 1
    project.raw_path("sapflow.csv").write_text(
        _normalize(rows, SAPFLOW_HEADER), encoding="utf-8"
    )
    _write_report(project, "ingest_sapflow.json", report)
    return report


def ingest_phenology(project: Project, source: Path) -> IngestReport:
    report = IngestReport(kind="phenology")
    rows = []
    for lineno, rec in _read_rows(source, PHENOLOGY_HEADER, "phenology"):
        try:
            if rec["plot_id"] not in project.config.plots:
                raise ValidationError(
                    f"line {lineno}, column plot_id: unknown plot {rec['plot_id']!r}"
                )
            if rec["stage"] not in KNOWN_STAGES:
                raise ValidationError(
                    f"line {lineno}, column stage: {rec['stage']!r} not one of "
                    f"{KNOWN_STAGES}"
                )
            _parse_date(rec["date"], lineno)
        except ValidationError as exc:
            report.rejected.append({"line": lineno, "reason": str(exc)})
            continue
        rows.append([rec[col] for col in PHENOLOGY_HEADER])
        report.accepted += 1
    project.raw_path("phenology.csv").write_text(
        _normalize(rows, PHENOLOGY_HEADER), encoding="utf-8"
    )
    _write_report(project, "ingest_phenology.json", report)
    return report


def ingest_lwp(project: Project, source: Path) -> IngestReport:
    report = IngestReport(kind="lwp")
    rows = []
    for lineno, rec in _read_rows(source, LWP_HEADER, "lwp"):
        try:
            _parse_date(rec["date"], lineno)
            if rec["plot_id"] not in project.config.plots:
                raise ValidationError(
                    f"line {lineno}, column plot_id: unknown plot {rec['plot_id']!r}"
                )
            value = _parse_float(rec["lwp_mpa"], "lwp_mpa", lineno)
            if value is None or value > 0:
                raise ValidationError(
                    f"line {lineno}, column lwp_mpa: predawn potential must "
                    f"be <= 0 MPa, got {rec['lwp_mpa']!r}"
                )
        except ValidationError as exc:
            report.rejected.append({"line": lineno, "reason": str(exc)})
            continue
        rows.append([rec[col] for col in LWP_HEADER])
        report.accepted += 1
    project.raw_path("lwp.csv").write_text(
        _normalize(rows, LWP_HEADER), encoding="utf-8"
    )
    _write_report(project, "ingest_lwp.json", report)
    return report


def ingest_fruit(project: Project, source: Path) -> IngestReport:
    report = IngestReport(kind="fruit")
    rows = []
    for lineno, rec in _read_rows(source, FRUIT_HEADER, "fruit"):
        try:
            _parse_date(rec["date"], lineno)
            if rec["plot_id"] not in project.config.plots:
                raise ValidationError(
                    f"line {lineno}, column plot_id: unknown plot {rec['plot_id']!r}"
                )
            for col in ("berry_weight", "sugar", "acidity"):
                value = _parse_float(rec[col], col, lineno)
                if value is None or value < 0:
                    raise ValidationError(
                        f"line {lineno}, column {col}: must be >= 0, "
                        f"got {rec[col]!r}"
                    )
        except ValidationError as exc:
            report.rejected.append({"line": lineno, "reason": str(exc)})
            continue
        rows.append([rec[col] for col in FRUIT_HEADER])
        report.accepted += 1
    project.raw_path("fruit.csv").write_text(
        _normalize(rows, FRUIT_HEADER), encoding="utf-8"
    )
    _write_report(project, "ingest_fruit.json", report)
    return report


INGESTERS = {
    "meteo": ingest_meteo,
    "sapflow": ingest_sapflow,
    "phenology": ingest_phenology,
    "lwp": ingest_lwp,
    "fruit": ingest_fruit,
}


def _write_report(project: Project, name: str, report: IngestReport):
    path = project.artifact_path(name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
