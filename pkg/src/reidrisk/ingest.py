"""Readers and writers for CDR, hierarchy, utility and report files.

All inputs are delimiter-separated UTF-8 text with a header row.  Line
numbers in errors count the header as line 1.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from .model import DataError, GeneralizationProfile, HierarchyError, RawDataset, SpatialHierarchy
from .reident import RiskMetrics, UnicityEstimate
from .stats import AssessmentReport, ParetoPoint, ParetoResult, UtilityEntry

Column = Union[str, int]

CHUNK_ROWS = 1_000_000


@dataclass(frozen=True)
class CdrSchemaConfig:
    caller: Column = "caller_id"
    tower: Column = "tower_id"
    time: Column = "time"
    receiver: Optional[Column] = "receiver_id"
    time_format: str = "%Y-%m-%d %H:%M"
    timezone: str = "UTC"
    delimiter: str = ","

    def __post_init__(self):
        required = [self.caller, self.tower, self.time]
        if any(c is None or c == "" for c in required):
            raise ValueError("caller, tower and time columns are required")
        if len(set(required)) != 3:
            raise ValueError(f"caller, tower and time columns must be distinct, got {required}")


def _resolve(header: list, col: Column, what: str, required: bool = True) -> Optional[str]:
    """Header name for ``col``: a header name wins over a positional index."""
    if isinstance(col, str) and col in header:
        return col
    if isinstance(col, int) or (isinstance(col, str) and col.isdigit()):
        i = int(col)
        if 0 <= i < len(header):
            return header[i]
    if required:
        raise DataError(f"no {what} column {col!r} in header {header}", line=1)
    return None


def _as_stream(stream):
    if isinstance(stream, (bytes, bytearray)):
        return io.BytesIO(stream)
    return stream


def _read_header(stream, delimiter: str):
    """Header fields plus a stream positioned at the same start."""
    stream = _as_stream(stream)
    if isinstance(stream, str) or hasattr(stream, "__fspath__"):
        stream = open(stream, "rb")  # noqa: SIM115 -- consumed by the caller's reader
    start = stream.tell()
    first = stream.readline()
    stream.seek(start)
    if isinstance(first, bytes):
        first = first.decode("utf-8-sig")
    if not first.strip():
        raise DataError("empty input")
    return next(csv.reader([first], delimiter=delimiter)), stream


def _missing(col: pd.Series) -> np.ndarray:
    return (col.isna() | (col.str.strip() == "")).to_numpy()


def _blank_categories(cat: pd.Categorical) -> list:
    cats = cat.categories
    return [c for c in cats if not str(c).strip()]


def _parse_cdr_arrow(stream, schema: CdrSchemaConfig, caller, tower, time, receiver) -> Optional[RawDataset]:
    """Fast columnar read; None whenever anything needs the validating reader."""
    ids = [c for c in (caller, receiver, tower) if c is not None]
    try:
        table = pacsv.read_csv(
            stream,
            parse_options=pacsv.ParseOptions(delimiter=schema.delimiter),
            convert_options=pacsv.ConvertOptions(
                include_columns=ids + [time],
                column_types={**{c: pa.dictionary(pa.int32(), pa.string()) for c in ids}, time: pa.string()},
            ),
        )
    except (pa.ArrowInvalid, pa.ArrowNotImplementedError, KeyError):
        return None
    if table.num_rows == 0:
        return None
    cols = {}
    for c in ids:
        col = table.column(c)
        if col.null_count:
            return None
        cols[c] = col.to_pandas().array if col.num_chunks else None
    for c in (caller, tower):
        if _blank_categories(cols[c]):
            return None
    t = table.column(time)
    if t.null_count:
        return None
    parsed = pc.strptime(t, format=schema.time_format, unit="s", error_is_null=True)
    if parsed.null_count:
        return None
    times = parsed.to_numpy().astype("datetime64[m]")
    del table, t, parsed
    recv = None
    if receiver is not None:
        recv = cols[receiver]
        blanks = _blank_categories(recv)
        if blanks:
            recv = recv.remove_categories(blanks)
    return RawDataset(cols[caller], cols[tower], times, receiver_ids=recv, timezone=schema.timezone)


def parse_cdr(stream, schema: CdrSchemaConfig = CdrSchemaConfig(), fast: bool = True) -> RawDataset:
    """Read a CDR table (one row per call) into a ``RawDataset``.

    Clean binary input goes through a columnar reader.  Anything it cannot
    take as is (blank fields, bad timestamps, ragged rows, text streams) is
    re-read chunk by chunk with pandas, which reports the offending line.
    """
    header, stream = _read_header(stream, schema.delimiter)
    caller = _resolve(header, schema.caller, "caller")
    tower = _resolve(header, schema.tower, "tower")
    time = _resolve(header, schema.time, "time")
    receiver = _resolve(header, schema.receiver, "receiver", required=False) if schema.receiver is not None else None
    cols = [c for c in (caller, receiver, tower, time) if c is not None]

    binary = not isinstance(stream, io.TextIOBase) and stream.seekable()
    if fast and binary and len(set(header)) == len(header):
        start = stream.tell()
        raw = _parse_cdr_arrow(stream, schema, caller, tower, time, receiver)
        if raw is not None:
            return raw
        stream.seek(start)

    reader = pd.read_csv(
        stream, sep=schema.delimiter, dtype=str, usecols=cols, keep_default_na=False,
        skip_blank_lines=False, chunksize=CHUNK_ROWS, encoding="utf-8-sig",
    )
    parts = {c: [] for c in cols}
    times = []
    offset = 2
    try:
        for chunk in reader:
            for name in (caller, tower, time):
                bad = np.flatnonzero(_missing(chunk[name]))
                if len(bad):
                    raise DataError(f"missing {name}", line=offset + int(bad[0]))
            t = pd.to_datetime(chunk[time], format=schema.time_format, errors="coerce")
            bad = np.flatnonzero(t.isna().to_numpy())
            if len(bad):
                raw = chunk[time].iloc[bad[0]]
                raise DataError(f"unparseable timestamp {raw!r} (format {schema.time_format})",
                                line=offset + int(bad[0]))
            times.append(t.to_numpy(dtype="datetime64[ns]").astype("datetime64[m]"))
            for c in (caller, tower, receiver):
                if c is not None:
                    parts[c].append(pd.Categorical(chunk[c]))
            offset += len(chunk)
    except pd.errors.ParserError as exc:
        raise DataError(f"malformed CSV: {exc}") from exc
    if not times:
        raise DataError("no data rows")

    def merged(c):
        return pd.api.types.union_categoricals(parts[c]) if c is not None else None

    recv = merged(receiver)
    if recv is not None:
        recv = recv.astype(object)
        recv[pd.isna(recv) | (recv == "")] = None
    return RawDataset(merged(caller), merged(tower), np.concatenate(times), receiver_ids=recv,
                      timezone=schema.timezone)


def write_cdr(raw: RawDataset, stream, schema: CdrSchemaConfig = CdrSchemaConfig()) -> None:
    frame = {schema.caller: raw.user_ids[raw.user_idx]}
    if schema.receiver is not None:
        frame[schema.receiver] = (
            np.asarray(raw.receivers, dtype=object) if raw.receivers is not None else ""
        )
    frame[schema.tower] = raw.tower_ids[raw.tower_idx]
    frame[schema.time] = pd.Series(raw.times.astype("datetime64[ns]")).dt.strftime(schema.time_format)
    pd.DataFrame(frame).to_csv(stream, sep=schema.delimiter, index=False, lineterminator="\n")


def parse_spatial_map(stream) -> SpatialHierarchy:
    """Read ``tower_id,<finest level>,...,<coarsest level>`` rows."""
    header, stream = _read_header(stream, ",")
    if len(header) < 2:
        raise HierarchyError("hierarchy needs a tower column and at least one level", line=1)
    frame = pd.read_csv(stream, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    for name in frame.columns:
        bad = np.flatnonzero(_missing(frame[name]))
        if len(bad):
            raise HierarchyError(f"missing {name}", line=2 + int(bad[0]))
    tower = frame.columns[0]
    levels = list(frame.columns[1:])
    frame = frame.drop_duplicates()
    dup = frame[tower].duplicated(keep=False)
    if dup.any():
        t = frame.loc[dup, tower].iloc[0]
        raise HierarchyError(f"tower {t} mapped to different zones")
    return SpatialHierarchy.from_columns(levels, frame[tower].to_numpy(), [frame[lv].to_numpy() for lv in levels])


def write_spatial_map(hierarchy: SpatialHierarchy, stream) -> None:
    frame = {"tower_id": hierarchy.tower_ids}
    for lv in hierarchy.levels:
        frame[lv] = hierarchy.zones(lv)[hierarchy.codes(lv)]
    pd.DataFrame(frame).to_csv(stream, index=False, lineterminator="\n")


class UtilityTable(dict):
    """Profile -> ``UtilityEntry``; lookups ignore the case of level names."""

    def lookup(self, profile: GeneralizationProfile) -> Optional[UtilityEntry]:
        want = (profile.spatial_level.lower(), profile.temporal_granularity)
        for key, entry in self.items():
            if (key.spatial_level.lower(), key.temporal_granularity) == want:
                return entry
        return None


def parse_utility_scores(stream) -> UtilityTable:
    header, stream = _read_header(stream, ",")
    for need in ("spatial_level", "temporal_granularity", "score"):
        if need not in header:
            raise DataError(f"utility file lacks column {need!r}", line=1)
    frame = pd.read_csv(stream, dtype=str, keep_default_na=False, encoding="utf-8-sig")
    table = UtilityTable()
    seen = set()
    for i, row in enumerate(frame.to_dict("records")):
        line = i + 2
        try:
            profile = GeneralizationProfile(row["spatial_level"].strip(), int(row["temporal_granularity"]))
            score = float(row["score"])
            lo = float(row["ci_low"]) if row.get("ci_low", "").strip() else None
            hi = float(row["ci_high"]) if row.get("ci_high", "").strip() else None
        except ValueError as exc:
            raise DataError(str(exc), line=line) from exc
        if not 1.0 <= score <= 10.0:
            raise DataError(f"score {score} outside [1, 10]", line=line)
        key = (profile.spatial_level.lower(), profile.temporal_granularity)
        if key in seen:
            raise DataError(f"duplicate utility for {profile.label}", line=line)
        seen.add(key)
        table[profile] = UtilityEntry(score, lo, hi)
    return table


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _profile_dict(p: GeneralizationProfile) -> dict:
    return {"label": p.label, "spatial_level": p.spatial_level, "temporal_granularity": p.temporal_granularity}


def _metrics_dict(m: RiskMetrics) -> dict:
    d = {k: v for k, v in asdict(m).items() if k not in ("profile", "unicity")}
    d["profile"] = _profile_dict(m.profile)
    d["ci_c"] = list(m.ci_c) if m.ci_c is not None else None
    d["ci_r"] = list(m.ci_r) if m.ci_r is not None else None
    d["unicity"] = [asdict(u) for u in m.unicity.values()]
    return d


def _metrics_from(d: dict) -> RiskMetrics:
    d = dict(d)
    prof = d.pop("profile")
    d["profile"] = GeneralizationProfile(prof["spatial_level"], prof["temporal_granularity"])
    d["ci_c"] = tuple(d["ci_c"]) if d["ci_c"] is not None else None
    d["ci_r"] = tuple(d["ci_r"]) if d["ci_r"] is not None else None
    d["unicity"] = {u["p"]: UnicityEstimate(**u) for u in d["unicity"]}
    return RiskMetrics(**d)


def report_to_dict(report: AssessmentReport) -> dict:
    out = {
        "config": report.config,
        "profiles": [],
    }
    for m in report.metrics:
        row = _metrics_dict(m)
        u = report.utilities.get(m.profile.label)
        row["utility"] = asdict(u) if u is not None else None
        out["profiles"].append(row)
    if report.pareto is not None:
        out["pareto"] = {
            "nondominated": [asdict(p) for p in report.pareto.nondominated],
            "dominated": [{**asdict(p), "dominated_by": q.label} for p, q in report.pareto.dominated],
        }
    return out


def report_from_dict(data: dict) -> AssessmentReport:
    metrics, utilities = [], {}
    for row in data["profiles"]:
        row = dict(row)
        u = row.pop("utility")
        m = _metrics_from(row)
        metrics.append(m)
        if u is not None:
            utilities[m.profile.label] = UtilityEntry(**u)
    pareto = None
    if "pareto" in data:
        front = [ParetoPoint(**p) for p in data["pareto"]["nondominated"]]
        by_label = {p.label: p for p in front}
        dominated = []
        for p in data["pareto"]["dominated"]:
            p = dict(p)
            q = by_label[p.pop("dominated_by")]
            dominated.append((ParetoPoint(**p), q))
        pareto = ParetoResult(front, dominated)
    return AssessmentReport(metrics, utilities, pareto, data["config"])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def report_rows(report: AssessmentReport) -> tuple[list, list]:
    ps = sorted({p for m in report.metrics for p in m.unicity})
    header = [
        "profile", "spatial_level", "temporal_granularity", "n", "c", "r", "gain", "nonreident_fraction",
        "ci_c_low", "ci_c_high", "ci_r_low", "ci_r_high", "k_anonymity", "entropy_bits",
    ] + [f"u_{p}" for p in ps] + ["utility", "pareto", "dominated_by"]
    status, dominator = {}, {}
    if report.pareto is not None:
        for p in report.pareto.nondominated:
            status[p.label] = "nondominated"
        for p, q in report.pareto.dominated:
            status[p.label] = "dominated"
            dominator[p.label] = q.label
    rows = []
    for m in report.metrics:
        label = m.profile.label
        ci_c = m.ci_c or (None, None)
        ci_r = m.ci_r or (None, None)
        u = report.utilities.get(label)
        rows.append(
            [label, m.profile.spatial_level, m.profile.temporal_granularity, m.n, m.c, m.r, m.gain,
             m.nonreident_fraction, ci_c[0], ci_c[1], ci_r[0], ci_r[1], m.k_anonymity, m.entropy_bits]
            + [m.unicity[p].value if p in m.unicity else None for p in ps]
            + [u.score if u is not None else None, status.get(label), dominator.get(label)]
        )
    return header, rows


def write_report(report: AssessmentReport, format: str = "json") -> bytes:
    """Serialise a report.

    JSON keeps full float precision so it reads back equal; CSV fixes every
    real to six decimals.
    """
    if format == "json":
        return (json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n").encode()
    if format == "csv":
        header, rows = report_rows(report)
        return _csv_bytes(header, rows)
    raise ValueError(f"unknown report format {format!r}")


def read_report(data) -> AssessmentReport:
    if hasattr(data, "read"):
        data = data.read()
    return report_from_dict(json.loads(data))


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def write_unicity(results: list, config: dict, format: str = "json") -> bytes:
    """``results`` holds (profile, {p: UnicityEstimate}) pairs."""
    rows = [
        (prof, est) for prof, table in results for est in table.values()
    ]
    if format == "json":
        doc = {
            "config": config,
            "unicity": [{"profile": _profile_dict(prof), **asdict(est)} for prof, est in rows],
        }
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    if format == "csv":
        header = ["profile", "p", "u_p", "eligible", "trials"]
        return _csv_bytes(header, [[prof.label, e.p, e.value, e.eligible, e.trials] for prof, e in rows])
    raise ValueError(f"unknown report format {format!r}")
