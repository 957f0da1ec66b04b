"""Data model and CSV ingestion for proportion matrices.

Input CSV layout: header ``pup,cross,dam,sire,<tissue-gene label>...``, one row
per individual, missing cells spelled ``NA``.  An optional viability CSV
(header ``cross,<label>...`` with 1/0 cells) marks which (cross, column) pairs
are measurable at all; unmeasurable cells are structurally missing and never
imputed.  Dam/sire CSV fields carry per-animal identifiers such as
``129S1-3``; the strain is taken as the part before the trailing ``-<number>``
suffix and must be consistent within a cross.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OBSERVED",
    "RANDOM_MISSING",
    "STRUCTURAL_MISSING",
    "DataError",
    "ConfigError",
    "Dataset",
    "MissingnessMask",
    "CrossDesign",
    "AlleleMap",
    "LoadReport",
    "load_dataset",
    "write_dataset",
    "load_allele_map",
    "build_cross_design",
]

OBSERVED = 0
RANDOM_MISSING = 1
STRUCTURAL_MISSING = 2

PROPORTION_LOW = 0.001
PROPORTION_HIGH = 0.999


class DataError(ValueError):
    """Malformed data file contents."""


class ConfigError(ValueError):
    """Inconsistent configuration inputs (viability table, allele map)."""


@dataclass
class Dataset:
    """Individuals-by-tissue-gene proportion matrix with cross bookkeeping.

    Y holds NaN for missing cells; every retained individual has at least one
    observed measurement and all observed values lie in [0.001, 0.999].
    Immutable by convention after load: chains share it read-only.
    """

    Y: np.ndarray                 # (n, J) float, NaN where missing
    group_of: np.ndarray          # (n,) int, cross index per individual
    tissue_gene_labels: list[str]
    cross_codes: list[str]
    dam_strain: list[str]         # per cross
    sire_strain: list[str]        # per cross
    pup_ids: list[str]

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def J(self) -> int:
        return self.Y.shape[1]

    @property
    def G(self) -> int:
        return len(self.cross_codes)

    def validate(self) -> None:
        obs = ~np.isnan(self.Y)
        if not obs.any(axis=1).all():
            raise DataError("every individual must have at least one observed measurement")
        vals = self.Y[obs]
        if np.any(vals < PROPORTION_LOW) or np.any(vals > PROPORTION_HIGH):
            raise DataError("observed proportions must lie in [0.001, 0.999]")
        if np.any(self.group_of < 0) or np.any(self.group_of >= self.G):
            raise DataError("group indices out of range")


@dataclass
class MissingnessMask:
    status: np.ndarray          # (n, J) int8: OBSERVED / RANDOM_MISSING / STRUCTURAL_MISSING
    structural_map: np.ndarray  # (G, J) bool, True where the pair is unmeasurable

    def viable(self) -> np.ndarray:
        """(G, J) bool, True where the (cross, column) pair is measurable."""
        return ~self.structural_map


@dataclass
class CrossDesign:
    """Allele and parent-of-origin indexing for the structured cross-mean model."""

    alleles: list[str]
    po_groups: list[str]
    dam: np.ndarray        # (G,) allele index of the dam strain
    sire: np.ndarray       # (G,) allele index of the sire strain
    po_dam: np.ndarray     # (G,) parent-of-origin group index of the dam strain
    po_sire: np.ndarray    # (G,) parent-of-origin group index of the sire strain
    m_free: np.ndarray     # (K_m,) bool, True where the group occurs as both dam and sire

    @property
    def K_a(self) -> int:
        return len(self.alleles)

    @property
    def K_m(self) -> int:
        return len(self.po_groups)


@dataclass
class AlleleMap:
    """Strain -> allele assignment, plus optional parent-of-origin grouping."""

    allele_of: dict[str, str]
    po_group_of: dict[str, str] = field(default_factory=dict)

    def po_group(self, strain: str) -> str:
        return self.po_group_of.get(strain, strain)


@dataclass
class LoadReport:
    dropped_cells: list[tuple[str, str, float]] = field(default_factory=list)
    rejected_rows: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["load report"]
        if not (self.dropped_cells or self.rejected_rows or self.warnings):
            lines.append("  clean load: nothing dropped")
        for pup, label, value in self.dropped_cells:
            lines.append(f"  dropped cell pup={pup} column={label} value={value!r} "
                         f"(outside [{PROPORTION_LOW}, {PROPORTION_HIGH}])")
        for pup in self.rejected_rows:
            lines.append(f"  rejected row pup={pup}: no observed measurements")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines) + "\n"


_STRAIN_SUFFIX = re.compile(r"-\d+$")


def strain_of(label: str) -> str:
    """Strip a per-animal '-<number>' suffix from a dam/sire field."""
    return _STRAIN_SUFFIX.sub("", label.strip())


def _parse_proportion(raw: str, row: int, label: str):
    raw = raw.strip()
    if raw == "NA":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"row {row}, column {label!r}: malformed proportion {raw!r}") from None
    if not 0.0 <= value <= 1.0:
        raise DataError(f"row {row}, column {label!r}: proportion {value} outside [0, 1]")
    return value


def _read_viability(path, labels: list[str]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "cross":
            raise ConfigError(f"viability table {path}: expected header starting with 'cross'")
        vlabels = [h.strip() for h in header[1:]]
        missing = [lb for lb in labels if lb not in vlabels]
        if missing:
            raise ConfigError(f"viability table lacks columns {missing}")
        table = {}
        for row in reader:
            if not row:
                continue
            code = row[0].strip()
            cells = {lb: cell.strip() for lb, cell in zip(vlabels, row[1:])}
            flags = np.zeros(len(labels), dtype=bool)
            for k, lb in enumerate(labels):
                if cells.get(lb, "1") not in ("0", "1"):
                    raise ConfigError(f"viability table cell for ({code}, {lb}) must be 0 or 1")
                flags[k] = cells.get(lb, "1") == "1"
            table[code] = ~flags  # store "structurally missing" orientation
    return table


def load_dataset(csv_path, viability_path=None):
    """Parse a proportion CSV (and optional viability table).

    Returns (Dataset, MissingnessMask, LoadReport).  Observed values outside
    [0.001, 0.999] are dropped with a warning (presumed male/XO individuals),
    not clipped; rows left with no observation are rejected into the report.
    """
    report = LoadReport()
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["pup", "cross", "dam", "sire"]:
            raise DataError(f"{csv_path}: expected header 'pup,cross,dam,sire,<label>...'")
        labels = [h.strip() for h in header[4:]]
        if not labels:
            raise DataError(f"{csv_path}: no tissue-gene columns")
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4 + len(labels):
                raise DataError(f"{csv_path}: row {rownum} has {len(row)} fields, expected {4 + len(labels)}")
            rows.append((rownum, [c.strip() for c in row]))

    structural = _read_viability(viability_path, labels) if viability_path else {}

    cross_codes: list[str] = []
    cross_index: dict[str, int] = {}
    dam_strain: list[str] = []
    sire_strain: list[str] = []
    pup_ids: list[str] = []
    group_list: list[int] = []
    y_rows: list[np.ndarray] = []
    status_rows: list[np.ndarray] = []

    for rownum, row in rows:
        pup, cross, dam, sire = row[:4]
        if cross not in cross_index:
            cross_index[cross] = len(cross_codes)
            cross_codes.append(cross)
            dam_strain.append(strain_of(dam))
            sire_strain.append(strain_of(sire))
        g = cross_index[cross]
        if strain_of(dam) != dam_strain[g] or strain_of(sire) != sire_strain[g]:
            raise DataError(f"row {rownum}: cross {cross!r} has inconsistent parental strains")

        struct_row = structural.get(cross, np.zeros(len(labels), dtype=bool))
        y = np.full(len(labels), np.nan)
        status = np.full(len(labels), RANDOM_MISSING, dtype=np.int8)
        for k, label in enumerate(labels):
            value = _parse_proportion(row[4 + k], rownum, label)
            if struct_row[k]:
                if value is not None:
                    raise DataError(f"row {rownum}, column {label!r}: value present in a "
                                    f"structurally missing (cross, column) pair")
                status[k] = STRUCTURAL_MISSING
            elif value is None:
                status[k] = RANDOM_MISSING
            elif value < PROPORTION_LOW or value > PROPORTION_HIGH:
                report.dropped_cells.append((pup, label, value))
                status[k] = RANDOM_MISSING
            else:
                y[k] = value
                status[k] = OBSERVED
        if not np.any(status == OBSERVED):
            report.rejected_rows.append(pup)
            continue
        pup_ids.append(pup)
        group_list.append(g)
        y_rows.append(y)
        status_rows.append(status)

    if not y_rows:
        raise DataError(f"{csv_path}: no usable rows")

    unknown = set(structural) - set(cross_codes)
    if unknown:
        raise ConfigError(f"viability table names unknown cross codes: {sorted(unknown)}")

    structural_map = np.zeros((len(cross_codes), len(labels)), dtype=bool)
    for code, flags in structural.items():
        structural_map[cross_index[code]] = flags

    dataset = Dataset(
        Y=np.vstack(y_rows),
        group_of=np.asarray(group_list, dtype=np.int64),
        tissue_gene_labels=labels,
        cross_codes=cross_codes,
        dam_strain=dam_strain,
        sire_strain=sire_strain,
        pup_ids=pup_ids,
    )
    dataset.validate()
    mask = MissingnessMask(status=np.vstack(status_rows), structural_map=structural_map)
    return dataset, mask, report


def write_dataset(dataset: Dataset, path) -> None:
    """Write a Dataset back to the input CSV layout (NA for all missing cells)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pup", "cross", "dam", "sire", *dataset.tissue_gene_labels])
        for i in range(dataset.n):
            g = dataset.group_of[i]
            cells = ["NA" if np.isnan(v) else repr(float(v)) for v in dataset.Y[i]]
            writer.writerow([dataset.pup_ids[i], dataset.cross_codes[g],
                             dataset.dam_strain[g], dataset.sire_strain[g], *cells])


def load_allele_map(path) -> AlleleMap:
    """Read a 'strain,allele[,po_group]' CSV."""
    allele_of: dict[str, str] = {}
    po_of: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["strain", "allele"]:
            raise ConfigError(f"{path}: expected header 'strain,allele[,po_group]'")
        has_po = len(header) > 2 and header[2].strip() == "po_group"
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            strain = row[0].strip()
            allele_of[strain] = row[1].strip()
            if has_po and len(row) > 2 and row[2].strip():
                po_of[strain] = row[2].strip()
    return AlleleMap(allele_of=allele_of, po_group_of=po_of)


def build_cross_design(dataset: Dataset, allele_map: AlleleMap) -> CrossDesign:
    """Resolve per-cross allele and parent-of-origin indices from strain labels.

    A parent-of-origin effect is estimable only for groups that occur at least
    once as dam and once as sire; the rest are pinned to zero downstream.
    """
    for strain in [*dataset.dam_strain, *dataset.sire_strain]:
        if strain not in allele_map.allele_of:
            raise ConfigError(f"strain {strain!r} missing from allele map")

    alleles = sorted({allele_map.allele_of[s] for s in [*dataset.dam_strain, *dataset.sire_strain]})
    allele_idx = {a: k for k, a in enumerate(alleles)}
    po_groups = sorted({allele_map.po_group(s) for s in [*dataset.dam_strain, *dataset.sire_strain]})
    po_idx = {p: k for k, p in enumerate(po_groups)}

    G = dataset.G
    dam = np.array([allele_idx[allele_map.allele_of[dataset.dam_strain[g]]] for g in range(G)])
    sire = np.array([allele_idx[allele_map.allele_of[dataset.sire_strain[g]]] for g in range(G)])
    po_dam = np.array([po_idx[allele_map.po_group(dataset.dam_strain[g])] for g in range(G)])
    po_sire = np.array([po_idx[allele_map.po_group(dataset.sire_strain[g])] for g in range(G)])

    m_free = np.zeros(len(po_groups), dtype=bool)
    for k in range(len(po_groups)):
        m_free[k] = np.any(po_dam == k) and np.any(po_sire == k)
    return CrossDesign(alleles=alleles, po_groups=po_groups, dam=dam, sire=sire,
                       po_dam=po_dam, po_sire=po_sire, m_free=m_free)
