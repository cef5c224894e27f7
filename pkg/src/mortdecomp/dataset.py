"""Two-survey birth microdata: ingestion, centering and design matrices.

A survey sample is a set of birth records grouped by sampling cluster.
Design matrices carry an explicit intercept column, spline-expanded
continuous covariates centered at reference-population means, 0/1 coded
binary covariates, and a map from covariate name to its contiguous
column block.  Both surveys of a pair must be built against one shared
knot source so their bases are identical and coefficient blocks can be
swapped between them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDesignError, EmptyInputError, RowError, SchemaError
from .splines import bspline_basis, quantile_knots

__all__ = [
    "BirthRecord",
    "SurveySample",
    "CovariateSpec",
    "CovariateSchema",
    "CenteringConstants",
    "DesignMatrix",
    "default_schema",
    "ingest_csv",
    "write_survey_csv",
    "pool_samples",
    "compute_centering",
    "build_design",
]

AGE_RANGE = (15.0, 45.0)

SEX_LEVELS = ("female", "male")
RESIDENCE_LEVELS = ("rural", "urban")

# Columns the CSV interface knows how to parse, beyond outcome/cluster_id.
_FIELD_PARSERS = {
    "maternal_age": float,
    "maternal_education": float,
    "birth_order": int,
    "birth_interval": float,
    "wealth_rank": float,
    "sex": str,
    "residence": str,
}


@dataclass(frozen=True)
class BirthRecord:
    """One birth: outcome, covariates and identifiers.

    Covariates that were not ingested are ``None``; validation of field
    ranges happens on construction.
    """

    outcome: int
    cluster_id: str
    survey_id: str
    maternal_age: float | None = None
    maternal_education: float | None = None
    birth_order: int | None = None
    birth_interval: float | None = None
    sex: str | None = None
    residence: str | None = None
    wealth_rank: float | None = None

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome!r}")
        if self.wealth_rank is not None and not 0.0 <= self.wealth_rank <= 1.0:
            raise ValueError(f"wealth_rank must lie in [0, 1], got {self.wealth_rank}")
        if self.birth_order is not None and self.birth_order < 1:
            raise ValueError(f"birth_order must be >= 1, got {self.birth_order}")
        if self.sex is not None and self.sex not in SEX_LEVELS:
            raise ValueError(f"sex must be one of {SEX_LEVELS}, got {self.sex!r}")
        if self.residence is not None and self.residence not in RESIDENCE_LEVELS:
            raise ValueError(f"residence must be one of {RESIDENCE_LEVELS}, got {self.residence!r}")


@dataclass(frozen=True)
class SurveySample:
    """All births of one survey, grouped by cluster in first-appearance order."""

    survey_id: str
    survey_year: int
    clusters: dict[str, list[BirthRecord]]
    dropped_rows: int = 0

    def __post_init__(self):
        for cid, records in self.clusters.items():
            if not records:
                raise ValueError(f"cluster {cid!r} is empty")
            for r in records:
                if r.survey_id != self.survey_id:
                    raise ValueError(
                        f"record in cluster {cid!r} carries survey_id {r.survey_id!r}, "
                        f"expected {self.survey_id!r}"
                    )

    @property
    def n_births(self) -> int:
        return sum(len(v) for v in self.clusters.values())

    def records(self):
        for records in self.clusters.values():
            yield from records


@dataclass(frozen=True)
class CovariateSpec:
    """One covariate: a spline-expanded continuous variable or a 0/1 binary.

    ``df`` counts design columns contributed by the spline expansion;
    ``allow_missing`` turns on median imputation plus a missingness
    indicator column (the indicator belongs to the covariate's column
    group).
    """

    name: str
    kind: str  # "continuous_spline" | "binary"
    degree: int = 3
    df: int = 4
    reference: object = None
    allow_missing: bool = False

    def __post_init__(self):
        if self.kind not in ("continuous_spline", "binary"):
            raise SchemaError(f"unknown covariate kind {self.kind!r} for {self.name!r}")
        if self.kind == "continuous_spline":
            if self.degree < 0:
                raise SchemaError(f"{self.name}: spline degree must be >= 0")
            if self.df < max(self.degree, 1):
                raise SchemaError(
                    f"{self.name}: df must be >= max(degree, 1), got df={self.df} degree={self.degree}"
                )
        if self.kind == "binary" and self.reference is None:
            raise SchemaError(f"{self.name}: binary covariate needs a reference level")

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSpec":
        allowed = {"name", "kind", "degree", "df", "reference", "allow_missing"}
        unknown = set(d) - allowed
        if unknown:
            raise SchemaError(f"unknown covariate spec keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "continuous_spline":
            d["degree"] = self.degree
            d["df"] = self.df
            if self.allow_missing:
                d["allow_missing"] = True
        else:
            d["reference"] = self.reference
        return d


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate list; the order fixes the default decomposition order."""

    covariates: tuple[CovariateSpec, ...]

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate covariate names in schema: {names}")
        if "intercept" in names:
            raise SchemaError("'intercept' is implicit and cannot be a covariate name")
        unknown = [n for n in names if n not in _FIELD_PARSERS]
        if unknown:
            raise SchemaError(f"schema names unknown record fields: {unknown}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.covariates]

    @property
    def continuous(self) -> list[CovariateSpec]:
        return [c for c in self.covariates if c.kind == "continuous_spline"]

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSchema":
        return cls(tuple(CovariateSpec.from_dict(c) for c in d["covariates"]))

    def to_dict(self) -> dict:
        return {"covariates": [c.to_dict() for c in self.covariates]}


def default_schema() -> CovariateSchema:
    """Full covariate set with cubic splines (df 4) for continuous variables.

    The order mirrors the default decomposition order: wealth rank,
    maternal education, maternal age, birth order, birth interval, then
    the binary sex and residence covariates.
    """
    return CovariateSchema(
        (
            CovariateSpec("wealth_rank", "continuous_spline"),
            CovariateSpec("maternal_education", "continuous_spline"),
            CovariateSpec("maternal_age", "continuous_spline"),
            CovariateSpec("birth_order", "continuous_spline"),
            CovariateSpec("birth_interval", "continuous_spline", allow_missing=True),
            CovariateSpec("sex", "binary", reference="female"),
            CovariateSpec("residence", "binary", reference="rural"),
        )
    )


@dataclass(frozen=True)
class CenteringConstants:
    """Reference-population means for the schema's continuous covariates.

    ``fallback`` names covariates whose reference subset was empty, for
    which the full-sample mean was used instead.
    """

    values: dict[str, float]
    poor_quantile: float
    fallback: frozenset[str] = frozenset()

    @classmethod
    def zeros(cls, schema: CovariateSchema) -> "CenteringConstants":
        return cls({c.name: 0.0 for c in schema.continuous}, poor_quantile=1.0)


@dataclass(frozen=True)
class DesignMatrix:
    """Expanded covariate matrix with named column groups.

    ``x`` has a leading all-ones intercept column; ``column_groups``
    maps each covariate to its half-open column range, and together the
    groups partition columns ``1..p-1``.  Arrays are frozen read-only.
    """

    x: np.ndarray
    outcome: np.ndarray
    cluster_index: np.ndarray
    column_groups: dict[str, tuple[int, int]]
    n_clusters: int
    survey_id: str = ""

    def __post_init__(self):
        for arr in (self.x, self.outcome, self.cluster_index):
            arr.setflags(write=False)
        n, p = self.x.shape
        if not np.all(self.x[:, 0] == 1.0):
            raise ValueError("design column 0 must be the all-ones intercept")
        covered = sorted(c for lo, hi in self.column_groups.values() for c in range(lo, hi))
        if covered != list(range(1, p)):
            raise ValueError("column groups must partition columns 1..p-1 without overlap")
        if self.outcome.shape != (n,) or self.cluster_index.shape != (n,):
            raise ValueError("outcome and cluster_index must have one entry per row")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_cols(self) -> int:
        return self.x.shape[1]

    def group_columns(self, name: str) -> slice:
        if name == "intercept":
            return slice(0, 1)
        lo, hi = self.column_groups[name]
        return slice(lo, hi)


def _parse_cell(name: str, raw: str, line: int):
    raw = raw.strip()
    if raw == "":
        if name == "birth_interval":
            return None
        raise RowError(line, f"empty value for {name!r}")
    parser = _FIELD_PARSERS[name]
    try:
        if parser is int:
            # tolerate "3.0" style integers but reject true fractions
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if parser is float:
            return float(raw)
        return raw
    except ValueError:
        raise RowError(line, f"could not parse {name}={raw!r}") from None


def ingest_csv(path, schema: CovariateSchema, survey_year: int, survey_id: str = "S1") -> SurveySample:
    """Read one survey's births from CSV, grouped by cluster.

    The header must name every schema covariate plus ``outcome`` and
    ``cluster_id``.  Rows whose maternal age falls outside [15, 45] are
    dropped; the count of dropped rows is recorded on the sample.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInputError(f"{path}: file is empty")
        header = [h.strip() for h in reader.fieldnames]
        required = ["outcome", "cluster_id"] + schema.names
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")
        parse_fields = [f for f in _FIELD_PARSERS if f in header]

        clusters: dict[str, list[BirthRecord]] = {}
        dropped = 0
        n_rows = 0
        for row in reader:
            line = reader.line_num
            n_rows += 1
            raw_outcome = (row.get("outcome") or "").strip()
            if raw_outcome not in ("0", "1"):
                raise RowError(line, f"outcome must be 0 or 1, got {raw_outcome!r}")
            cluster_id = (row.get("cluster_id") or "").strip()
            if not cluster_id:
                raise RowError(line, "empty cluster_id")
            fields = {name: _parse_cell(name, row.get(name) or "", line) for name in parse_fields}
            age = fields.get("maternal_age")
            if age is not None and not AGE_RANGE[0] <= age <= AGE_RANGE[1]:
                dropped += 1
                continue
            try:
                record = BirthRecord(
                    outcome=int(raw_outcome),
                    cluster_id=cluster_id,
                    survey_id=survey_id,
                    **fields,
                )
            except ValueError as exc:
                raise RowError(line, str(exc)) from None
            clusters.setdefault(cluster_id, []).append(record)

    if n_rows == 0:
        raise EmptyInputError(f"{path}: header only, no data rows")
    return SurveySample(survey_id=survey_id, survey_year=survey_year, clusters=clusters, dropped_rows=dropped)


def write_survey_csv(sample: SurveySample, path) -> None:
    """Write a sample in the CSV layout :func:`ingest_csv` reads.

    Covariate columns that are ``None`` on every record are omitted;
    birth intervals may be empty per record.
    """
    records = list(sample.records())
    if not records:
        raise EmptyInputError("cannot write an empty sample")
    fields = [
        name
        for name in _FIELD_PARSERS
        if any(getattr(r, name) is not None for r in records)
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outcome", *fields, "cluster_id"])
        for r in records:
            row = [r.outcome]
            for name in fields:
                v = getattr(r, name)
                row.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
            row.append(r.cluster_id)
            writer.writerow(row)


def pool_samples(*samples: SurveySample) -> SurveySample:
    """Concatenate samples into one pooled sample for knot placement.

    Cluster ids are prefixed with their survey id so clusters never
    merge across surveys.
    """
    if not samples:
        raise ValueError("need at least one sample to pool")
    clusters: dict[str, list[BirthRecord]] = {}
    for s in samples:
        for cid, records in s.clusters.items():
            key = f"{s.survey_id}:{cid}"
            clusters[key] = [
                BirthRecord(**{**r.__dict__, "survey_id": "pooled", "cluster_id": key})
                for r in records
            ]
    return SurveySample(survey_id="pooled", survey_year=samples[0].survey_year, clusters=clusters)


def _values(sample: SurveySample, name: str) -> list:
    return [getattr(r, name) for r in sample.records()]


def compute_centering(
    sample1: SurveySample, schema: CovariateSchema, poor_quantile: float = 0.2
) -> CenteringConstants:
    """Mean of each continuous covariate over the poorest households of survey 1.

    A household is in the reference population when its wealth rank is
    at or below ``poor_quantile``.  If no record qualifies for a
    covariate, its full-sample mean is used and the covariate is
    flagged as a fallback.  Missing values (allowed for birth
    intervals) are excluded from the means.
    """
    if not 0.0 < poor_quantile <= 1.0:
        raise ValueError(f"poor_quantile must lie in (0, 1], got {poor_quantile}")
    if sample1.n_births == 0:
        raise EmptyInputError("cannot compute centering constants on an empty sample")
    continuous = schema.continuous
    if not continuous:
        return CenteringConstants({}, poor_quantile=poor_quantile)

    records = list(sample1.records())
    wealth = [r.wealth_rank for r in records]
    if any(w is None for w in wealth):
        raise SchemaError("centering needs wealth_rank on every record")
    poor = [r for r, w in zip(records, wealth) if w <= poor_quantile]

    values: dict[str, float] = {}
    fallback: set[str] = set()
    for cov in continuous:
        vals = [getattr(r, cov.name) for r in poor]
        vals = [v for v in vals if v is not None]
        if not vals:
            fallback.add(cov.name)
            vals = [getattr(r, cov.name) for r in records]
            vals = [v for v in vals if v is not None]
            if not vals:
                raise SchemaError(f"covariate {cov.name!r} has no observed values")
        values[cov.name] = float(np.mean(vals))
    return CenteringConstants(values, poor_quantile=poor_quantile, fallback=frozenset(fallback))


def _continuous_columns(
    cov: CovariateSpec,
    sample: SurveySample,
    centering: CenteringConstants,
    knot_source: SurveySample,
) -> np.ndarray:
    """Centered, spline-expanded columns for one continuous covariate."""
    center = centering.values.get(cov.name)
    if center is None:
        raise SchemaError(f"no centering constant for continuous covariate {cov.name!r}")

    def centered(values, median):
        arr = np.array(
            [median if v is None else float(v) for v in values], dtype=float
        )
        return arr - center

    raw = _values(sample, cov.name)
    src_raw = _values(knot_source, cov.name)
    if any(v is None for v in raw) and not cov.allow_missing:
        raise SchemaError(f"covariate {cov.name!r} has missing values but allow_missing is off")
    observed = [v for v in raw if v is not None]
    src_observed = [v for v in src_raw if v is not None]
    if not observed or not src_observed:
        raise SchemaError(f"covariate {cov.name!r} has no observed values in the sample")
    median = float(np.median(observed))
    src_median = float(np.median(src_observed))

    knots = quantile_knots(centered(src_raw, src_median), cov.degree, cov.df)
    basis = bspline_basis(centered(raw, median), knots, cov.degree)
    cols = basis[:, 1:]  # drop the first basis function: intercept is explicit
    if cov.allow_missing:
        indicator = np.array([1.0 if v is None else 0.0 for v in raw])
        cols = np.column_stack([cols, indicator])
    return cols


def build_design(
    sample: SurveySample,
    schema: CovariateSchema,
    centering: CenteringConstants,
    knot_source: SurveySample,
) -> DesignMatrix:
    """Assemble the design matrix for one survey.

    ``knot_source`` fixes the spline knots (normally the pooled pair of
    surveys) so that designs built for different samples share one
    basis.  Cluster ordinals follow first appearance.  Raises
    ``DegenerateDesignError`` if any produced column is constant.
    """
    if sample.n_births == 0:
        raise EmptyInputError("cannot build a design from an empty sample")
    records = list(sample.records())
    n = len(records)

    blocks: list[np.ndarray] = [np.ones((n, 1))]
    column_groups: dict[str, tuple[int, int]] = {}
    col = 1
    for cov in schema.covariates:
        vals = [getattr(r, cov.name) for r in records]
        if cov.kind == "binary":
            if any(v is None for v in vals):
                raise SchemaError(f"covariate {cov.name!r} is missing from some records")
            block = np.array([[0.0 if v == cov.reference else 1.0] for v in vals])
        else:
            block = _continuous_columns(cov, sample, centering, knot_source)
        blocks.append(block)
        column_groups[cov.name] = (col, col + block.shape[1])
        col += block.shape[1]

    x = np.hstack(blocks)
    for name, (lo, hi) in column_groups.items():
        for j in range(lo, hi):
            colv = x[:, j]
            if np.all(colv == colv[0]):
                raise DegenerateDesignError(name, f"column {j} of group {name!r} is constant")

    cluster_ids: dict[str, int] = {}
    idx = np.empty(n, dtype=np.int64)
    for i, r in enumerate(records):
        idx[i] = cluster_ids.setdefault(r.cluster_id, len(cluster_ids))

    return DesignMatrix(
        x=x,
        outcome=np.array([r.outcome for r in records], dtype=np.int64),
        cluster_index=idx,
        column_groups=column_groups,
        n_clusters=len(cluster_ids),
        survey_id=sample.survey_id,
    )
