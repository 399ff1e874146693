import logging
import math
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from errors import DataIoError, EmptyInputError, MalformedCsvError, UnknownColumnError

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

ARTICLE_COLUMNS = ("id", "year", "field", "n_references", "n_pages")
AGGREGATE_COLUMNS = ("year", "field", "article_count", "mean_refs", "median_refs")
DROP_REASONS = ("missing_year", "missing_references", "year_out_of_range", "below_min_refs")
DEFAULT_FIELD = "all"


class ArticleRecord(BaseModel):
    id: str = Field(..., description="DOI or synthetic identifier")
    year: int = Field(..., description="Publication year")
    field_label: str = Field(DEFAULT_FIELD, description="Discipline label")
    n_references: Optional[int] = Field(None, ge=0, description="Reference-list length")
    n_pages: Optional[int] = Field(None, ge=0, description="Page count")


class YearlyAggregate(BaseModel):
    year: int = Field(..., description="Publication year")
    field_label: str = Field(..., description="Discipline label")
    article_count: int = Field(..., ge=1, description="Articles retained for the year")
    mean_refs: float = Field(..., description="Mean reference-list length")
    median_refs: float = Field(..., description="Median reference-list length")


class FilterReport(BaseModel):
    total_rows: int = Field(0, description="Rows read")
    retained: int = Field(0, description="Rows kept")
    dropped: dict[str, int] = Field(default_factory=lambda: {reason: 0 for reason in DROP_REASONS},
                                    description="Rows dropped per reason")


def readCsvTable(path: str, allowed: tuple, required: tuple, numeric: tuple = ()) -> pd.DataFrame:
    """CSV with a header row, restricted to known columns.

    Numeric columns are parsed; an unparsable non-empty cell raises
    MalformedCsvError with its 1-based file line. Empty cells become NaN.
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except FileNotFoundError as e:
        raise DataIoError(f"file not found: {path}") from e
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(required))
    except pd.errors.ParserError as e:
        raise MalformedCsvError(f"{path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataIoError(f"{path} is not UTF-8 text: {e}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    unknown = [c for c in frame.columns if c not in allowed]
    if unknown:
        raise UnknownColumnError(f"{path}: unknown columns {unknown}; allowed {list(allowed)}")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MalformedCsvError(f"{path}: missing required columns {missing}", 1)
    for column in numeric:
        if column not in frame.columns:
            continue
        raw = frame[column].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce")
        bad = parsed.isna() & raw.notna() & (raw != "")
        if bad.any():
            rowIndex = int(np.flatnonzero(bad.to_numpy())[0])
            raise MalformedCsvError(f"{path}: {column} value {raw.iloc[rowIndex]!r} is not a number", rowIndex + 2)
        frame[column] = parsed
    return frame


def _integralOrNone(value, column: str, lineNumber: int, path: str) -> Optional[int]:
    if pd.isna(value):
        return None
    if not math.isfinite(float(value)) or float(value) != int(value) or value < 0:
        raise MalformedCsvError(f"{path}: {column} must be a nonnegative integer, got {value}", lineNumber)
    return int(value)


class CorpusService:
    def __init__(self, minYear: int = 1900, maxYear: int = 2100):
        self.minYear = minYear
        self.maxYear = maxYear
        logging.info("CorpusService initialized.")

    def readArticles(self, path: str) -> list:
        """Rows of an ingest-schema CSV as records, n_references possibly missing."""
        frame = readCsvTable(path, ARTICLE_COLUMNS, ("year", "n_references"),
                             numeric=("year", "n_references", "n_pages"))
        records = []
        for rowIndex, row in enumerate(frame.to_dict("records")):
            lineNumber = rowIndex + 2
            year = _integralOrNone(row.get("year"), "year", lineNumber, path)
            rawField = row.get("field")
            rawId = row.get("id")
            records.append({
                "id": str(rawId).strip() if isinstance(rawId, str) and rawId.strip() else f"row-{lineNumber}",
                "year": year,
                "field_label": rawField.strip() if isinstance(rawField, str) and rawField.strip() else DEFAULT_FIELD,
                "n_references": _integralOrNone(row.get("n_references"), "n_references", lineNumber, path),
                "n_pages": _integralOrNone(row.get("n_pages"), "n_pages", lineNumber, path),
            })
        return records

    def filterRecords(self, rows: list, minRefs: int = 5, fromYear: int = None, toYear: int = None) -> tuple:
        """Drop rows with a missing year or reference count, out-of-range years and short lists."""
        lower = max(self.minYear, fromYear) if fromYear is not None else self.minYear
        upper = min(self.maxYear, toYear) if toYear is not None else self.maxYear
        report = FilterReport(total_rows=len(rows))
        kept = []
        for row in rows:
            if isinstance(row, ArticleRecord):
                row = row.model_dump()
            if row.get("year") is None:
                reason = "missing_year"
            elif row.get("n_references") is None:
                reason = "missing_references"
            elif not lower <= row["year"] <= upper:
                reason = "year_out_of_range"
            elif row["n_references"] < minRefs:
                reason = "below_min_refs"
            else:
                kept.append(ArticleRecord(**row))
                continue
            report.dropped[reason] += 1
        report.retained = len(kept)
        logging.info(f"Kept {report.retained} of {report.total_rows} articles; dropped {report.dropped}.")
        return kept, report

    def loadAndFilter(self, path: str, minRefs: int = 5, fromYear: int = None, toYear: int = None) -> tuple:
        """Read an article CSV and apply the standard filters; returns (records, FilterReport)."""
        logging.info(f"Loading articles from {path} with min_refs={minRefs}.")
        return self.filterRecords(self.readArticles(path), minRefs, fromYear, toYear)

    def aggregateYearly(self, records: list) -> list:
        """Article count, mean and median reference count per (year, field), ordered by year."""
        if not records:
            raise EmptyInputError("no records to aggregate")
        frame = pd.DataFrame([r.model_dump() for r in records])
        grouped = frame.groupby(["year", "field_label"], sort=True)["n_references"]
        table = grouped.agg(["count", "mean", "median"]).reset_index()
        aggregates = [
            YearlyAggregate(
                year=int(row["year"]),
                field_label=str(row["field_label"]),
                article_count=int(row["count"]),
                mean_refs=float(row["mean"]),
                median_refs=float(row["median"]),
            )
            for row in table.to_dict("records")
        ]
        logging.info(f"Aggregated {len(records)} records into {len(aggregates)} year/field rows.")
        return aggregates

    def writeRecordsCsv(self, records: list, path: str) -> None:
        frame = pd.DataFrame(
            [[r.id, r.year, r.field_label, r.n_references, r.n_pages] for r in records],
            columns=list(ARTICLE_COLUMNS),
        )
        frame["n_references"] = frame["n_references"].astype("Int64")
        frame["n_pages"] = frame["n_pages"].astype("Int64")
        frame.to_csv(path, index=False)
        logging.info(f"Wrote {len(frame)} articles to {path}.")

    def writeAggregateCsv(self, aggregates: list, path: str) -> None:
        frame = pd.DataFrame(
            [[a.year, a.field_label, a.article_count, a.mean_refs, a.median_refs] for a in aggregates],
            columns=list(AGGREGATE_COLUMNS),
        )
        frame.to_csv(path, index=False)
        logging.info(f"Wrote {len(frame)} yearly aggregates to {path}.")

    def readAggregateCsv(self, path: str) -> list:
        frame = readCsvTable(path, AGGREGATE_COLUMNS, AGGREGATE_COLUMNS,
                             numeric=("year", "article_count", "mean_refs", "median_refs"))
        aggregates = []
        for rowIndex, row in enumerate(frame.to_dict("records")):
            if any(pd.isna(row[c]) for c in AGGREGATE_COLUMNS):
                raise MalformedCsvError(f"{path}: empty cell in aggregate row", rowIndex + 2)
            aggregates.append(YearlyAggregate(
                year=int(row["year"]),
                field_label=str(row["field"]).strip(),
                article_count=int(row["article_count"]),
                mean_refs=float(row["mean_refs"]),
                median_refs=float(row["median_refs"]),
            ))
        if not aggregates:
            raise EmptyInputError(f"{path} holds no aggregate rows")
        return aggregates
