"""Seven-rank biological classification and relevance-based auxiliary selection.

Lineages are stored species-first so that a rank value doubles as the index
into ``Lineage.names``.
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from util import logger
from zsl.errors import (
    ConsistencyError,
    DuplicationError,
    ParseError,
    PreconditionError,
    SelectionError,
    TaxonLookupError,
)


class Rank(IntEnum):
    SPECIES = 0
    GENUS = 1
    FAMILY = 2
    ORDER = 3
    CLASS = 4
    PHYLUM = 5
    KINGDOM = 6


class RelevanceLevel(IntEnum):
    LOW = 0
    MIDDLE = 1
    HIGH = 2

    @classmethod
    def parse(cls, value: str) -> "RelevanceLevel":
        try:
            return cls[value.strip().upper()]
        except KeyError:
            raise ValueError(f"Unknown relevance level: {value!r}") from None


TAXONOMY_HEADER = ("taxon_id", "species", "genus", "family", "order", "class", "phylum", "kingdom")


@dataclass(frozen=True)
class Lineage:
    taxon_id: str
    names: Tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != len(Rank):
            raise ValueError(f"Lineage '{self.taxon_id}' needs {len(Rank)} rank names, got {len(self.names)}")
        if not self.taxon_id or any(not n for n in self.names):
            raise ValueError(f"Lineage '{self.taxon_id}' has an empty identifier or rank name")

    def name_at(self, rank: Rank) -> str:
        return self.names[rank]


@dataclass(frozen=True)
class AuxiliarySelection:
    classes: Tuple[str, ...]
    quota: int

    def quotas(self) -> Dict[str, int]:
        return {c: self.quota for c in self.classes}


class Taxonomy:
    """Immutable forest of lineages with an id index."""

    def __init__(self, lineages: Iterable[Lineage]):
        self._lineages: Tuple[Lineage, ...] = tuple(lineages)
        self._index: Dict[str, Lineage] = {}
        for lineage in self._lineages:
            if lineage.taxon_id in self._index:
                raise DuplicationError(f"Duplicate taxon_id: {lineage.taxon_id}")
            self._index[lineage.taxon_id] = lineage
        self._check_forest()

    def _check_forest(self) -> None:
        # (rank, name) must always sit under the same chain of ancestors.
        seen: Dict[Tuple[int, str], Tuple[Tuple[str, ...], str]] = {}
        for lineage in self._lineages:
            for rank in Rank:
                key = (int(rank), lineage.names[rank])
                above = lineage.names[rank + 1:]
                if key not in seen:
                    seen[key] = (above, lineage.taxon_id)
                    continue
                expected, owner = seen[key]
                if expected != above:
                    raise ConsistencyError(
                        owner,
                        lineage.taxon_id,
                        f"{rank.name.lower()} '{lineage.names[rank]}' has different ancestors",
                    )

    @property
    def lineages(self) -> Tuple[Lineage, ...]:
        return self._lineages

    def ids(self) -> List[str]:
        return [lin.taxon_id for lin in self._lineages]

    def get(self, taxon_id: str) -> Lineage:
        try:
            return self._index[taxon_id]
        except KeyError:
            raise TaxonLookupError(f"Unknown taxon_id: {taxon_id}") from None

    def __contains__(self, taxon_id: object) -> bool:
        return taxon_id in self._index

    def __len__(self) -> int:
        return len(self._lineages)

    def __iter__(self) -> Iterator[Lineage]:
        return iter(self._lineages)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Taxonomy) and self._lineages == other._lineages

    def __repr__(self) -> str:
        return f"Taxonomy({len(self)} lineages)"


def load_taxonomy(source: str) -> Taxonomy:
    """Parse a tab-separated lineage table (header row first)."""
    lines = source.splitlines()
    if not lines:
        raise ParseError("missing header row", line=1)
    header = tuple(col.strip() for col in lines[0].split("\t"))
    if header != TAXONOMY_HEADER:
        raise ParseError(f"unexpected header {header}", line=1)

    lineages = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(TAXONOMY_HEADER):
            raise ParseError(f"expected {len(TAXONOMY_HEADER)} columns, got {len(cols)}", line=lineno)
        cols = [c.strip() for c in cols]
        try:
            lineages.append(Lineage(taxon_id=cols[0], names=tuple(cols[1:])))
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from None

    taxonomy = Taxonomy(lineages)
    logger.debug(f"Loaded taxonomy with {len(taxonomy)} lineages")
    return taxonomy


def dump_taxonomy(t: Taxonomy) -> str:
    rows = ["\t".join(TAXONOMY_HEADER)]
    rows.extend("\t".join((lin.taxon_id,) + lin.names) for lin in t)
    return "\n".join(rows) + "\n"


def kinship_rank(t: Taxonomy, a: str, b: str) -> Optional[Rank]:
    """Rank of the lowest common ancestor of a and b, None if they share no kingdom."""
    la, lb = t.get(a), t.get(b)
    for rank in Rank:
        if la.names[rank] == lb.names[rank]:
            return rank
    return None


def relevance_of(t: Taxonomy, seen: Set[str], candidate: str) -> RelevanceLevel:
    if candidate in seen:
        raise PreconditionError(f"Auxiliary candidate '{candidate}' is one of the seen classes")
    if candidate not in t:
        # non-biological classes are not in the taxonomy
        return RelevanceLevel.LOW

    nearest: Optional[Rank] = None
    for s in seen:
        r = kinship_rank(t, candidate, s)
        if r is not None and (nearest is None or r < nearest):
            nearest = r
    if nearest is None:
        return RelevanceLevel.LOW
    if nearest <= Rank.CLASS:
        return RelevanceLevel.HIGH
    return RelevanceLevel.MIDDLE


def select_auxiliary(
        t: Taxonomy,
        seen: Set[str],
        pool: Sequence[Tuple[str, int]],
        level: RelevanceLevel,
        n_classes: int,
        n_per_class: int,
        seed: int,
        ) -> AuxiliarySelection:
    """
    Draw n_classes auxiliary classes of the requested relevance from the pool.

    Candidates qualify when their relevance equals ``level`` and they hold at
    least ``n_per_class`` samples. The draw is uniform without replacement and
    the result keeps pool order.
    """
    logger.info(f"Selecting {n_classes} {level.name.lower()}-relevance auxiliary classes from a pool of {len(pool)}")
    if n_classes < 0 or n_per_class < 0:
        raise PreconditionError("n_classes and n_per_class must be non-negative")

    qualified: List[str] = []
    listed = set()
    for taxon_id, count in pool:
        if taxon_id in listed:
            continue
        listed.add(taxon_id)
        if count >= n_per_class and relevance_of(t, seen, taxon_id) == level:
            qualified.append(taxon_id)

    if n_classes == 0:
        return AuxiliarySelection(classes=(), quota=n_per_class)
    if len(qualified) < n_classes:
        logger.warning(f"Auxiliary selection short: need {n_classes}, have {len(qualified)}")
        raise SelectionError(f"need {n_classes} {level.name.lower()}-relevance classes", qualified=len(qualified))

    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(qualified), size=n_classes, replace=False))
    selection = AuxiliarySelection(classes=tuple(qualified[i] for i in picked), quota=n_per_class)
    logger.debug(f"Selected auxiliary classes: {selection.classes}")
    return selection


def write_selection(sel: AuxiliarySelection) -> str:
    return "".join(f"{c}\t{sel.quota}\n" for c in sel.classes)


def read_selection(text: str) -> AuxiliarySelection:
    classes, quotas = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError("expected 'taxon_id<TAB>quota'", line=lineno)
        try:
            quotas.add(int(cols[1]))
        except ValueError:
            raise ParseError(f"quota is not an integer: {cols[1]!r}", line=lineno) from None
        classes.append(cols[0])
    if len(quotas) > 1:
        raise ParseError("auxiliary classes must share one quota")
    return AuxiliarySelection(classes=tuple(classes), quota=quotas.pop() if quotas else 0)
