"""ICD-10-CM code table ingestion, validation, and hierarchy metadata.

The canonical ingestion format is a 4-field TSV: code, billable flag
("0"/"1"), short description, long description. Lines starting with "#"
are comments. Codes may appear with or without the dot; they are
normalized to uppercase with a dot inserted after the third character.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .errors import (
    DuplicateCode,
    InvalidCodeFormat,
    MalformedLine,
    UnknownSynonymCode,
)

_CODE_RE = re.compile(r"^[A-Z][A-Z0-9]{2}(?:\.[A-Z0-9]{1,4})?$")

# ICD-10-CM chapters keyed by category range (inclusive, lexicographic).
CHAPTERS: tuple[tuple[str, str, str, str], ...] = (
    ("A00", "B99", "I", "Certain infectious and parasitic diseases"),
    ("C00", "D49", "II", "Neoplasms"),
    ("D50", "D89", "III", "Diseases of the blood and blood-forming organs"),
    ("E00", "E89", "IV", "Endocrine, nutritional and metabolic diseases"),
    ("F01", "F99", "V", "Mental, behavioral and neurodevelopmental disorders"),
    ("G00", "G99", "VI", "Diseases of the nervous system"),
    ("H00", "H59", "VII", "Diseases of the eye and adnexa"),
    ("H60", "H95", "VIII", "Diseases of the ear and mastoid process"),
    ("I00", "I99", "IX", "Diseases of the circulatory system"),
    ("J00", "J99", "X", "Diseases of the respiratory system"),
    ("K00", "K95", "XI", "Diseases of the digestive system"),
    ("L00", "L99", "XII", "Diseases of the skin and subcutaneous tissue"),
    ("M00", "M99", "XIII", "Diseases of the musculoskeletal system and connective tissue"),
    ("N00", "N99", "XIV", "Diseases of the genitourinary system"),
    ("O00", "O9A", "XV", "Pregnancy, childbirth and the puerperium"),
    ("P00", "P96", "XVI", "Certain conditions originating in the perinatal period"),
    ("Q00", "Q99", "XVII", "Congenital malformations, deformations and chromosomal abnormalities"),
    ("R00", "R99", "XVIII", "Symptoms, signs and abnormal clinical and laboratory findings"),
    ("S00", "T88", "XIX", "Injury, poisoning and certain other consequences of external causes"),
    ("U00", "U85", "XXII", "Codes for special purposes"),
    ("V00", "Y99", "XX", "External causes of morbidity"),
    ("Z00", "Z99", "XXI", "Factors influencing health status and contact with health services"),
)


def normalize_code(text: str) -> str:
    """Uppercase and insert the dot after the third character when absent."""
    code = text.strip().upper()
    if len(code) > 3 and "." not in code:
        code = code[:3] + "." + code[3:]
    return code


def validate_code_format(text: str) -> bool:
    """True iff the text normalizes to a syntactically valid ICD-10 code.

    Pure predicate; does not consult any ontology.
    """
    if not text or not text.strip():
        return False
    return _CODE_RE.match(normalize_code(text)) is not None


def derive_hierarchy(code: str) -> tuple[str, str]:
    """Return (category, chapter) for a format-valid code.

    Category is the first three characters; chapter is looked up from the
    static chapter range table.
    """
    normalized = normalize_code(code)
    if not validate_code_format(normalized):
        raise InvalidCodeFormat(code)
    category = normalized[:3]
    for lo, hi, numeral, _name in CHAPTERS:
        if lo <= category <= hi:
            return category, numeral
    return category, ""


def chapter_name(numeral: str) -> str:
    for _lo, _hi, num, name in CHAPTERS:
        if num == numeral:
            return name
    return ""


@dataclass(frozen=True)
class IcdCode:
    code: str
    description: str
    category: str
    chapter: str
    billable: bool
    block: str = ""


@dataclass
class Ontology:
    """Immutable-after-construction map of normalized codes to entries."""

    codes: dict[str, IcdCode] = field(default_factory=dict)
    synonym_descriptions: dict[str, list[str]] = field(default_factory=dict)

    def get(self, code: str) -> IcdCode | None:
        return self.codes.get(normalize_code(code))

    def __contains__(self, code: str) -> bool:
        return normalize_code(code) in self.codes

    def __len__(self) -> int:
        return len(self.codes)

    def is_billable(self, code: str) -> bool:
        entry = self.get(code)
        return entry is not None and entry.billable

    def description_of(self, code: str) -> str:
        entry = self.get(code)
        return entry.description if entry else ""

    def add_synonyms(self, pairs: Iterable[tuple[str, str]]) -> None:
        for raw_code, synonym in pairs:
            code = normalize_code(raw_code)
            if code not in self.codes:
                raise UnknownSynonymCode(raw_code)
            self.synonym_descriptions.setdefault(code, []).append(synonym)


def is_billable(ontology: Ontology, code: str) -> bool:
    """True iff the code exists in the ontology with billable=true."""
    return ontology.is_billable(code)


def parse_code_table(lines: Iterable[str]) -> Ontology:
    """Parse the 4-field TSV code table into an Ontology.

    Raises MalformedLine on wrong field count, InvalidCodeFormat on a bad
    code, DuplicateCode on repeats.
    """
    codes: dict[str, IcdCode] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise MalformedLine(line_no, f"expected 4 tab-separated fields, got {len(fields)}")
        raw_code, billable_flag, _short, long_desc = fields
        code = normalize_code(raw_code)
        if not validate_code_format(code):
            raise InvalidCodeFormat(raw_code)
        if code in codes:
            raise DuplicateCode(code)
        if billable_flag not in ("0", "1"):
            raise MalformedLine(line_no, f"billable flag must be 0 or 1, got {billable_flag!r}")
        category, chapter = derive_hierarchy(code)
        codes[code] = IcdCode(
            code=code,
            description=long_desc,
            category=category,
            chapter=chapter,
            billable=billable_flag == "1",
        )
    return Ontology(codes=codes)


def parse_synonym_table(lines: Iterable[str], ontology: Ontology) -> None:
    """Ingest a 2-field TSV of (code, synonym description) into the ontology."""
    pairs = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise MalformedLine(line_no, f"expected 2 tab-separated fields, got {len(fields)}")
        pairs.append((fields[0], fields[1]))
    ontology.add_synonyms(pairs)


def billable_ancestor_violations(ontology: Ontology) -> list[tuple[str, str]]:
    """Pairs (billable ancestor, descendant) where a billable code is a
    strict dotless prefix of another code. Empty on a well-formed table."""
    dotless = sorted((c.replace(".", ""), c) for c in ontology.codes)
    violations = []
    for i, (flat, code) in enumerate(dotless):
        if not ontology.codes[code].billable:
            continue
        j = i + 1
        while j < len(dotless) and dotless[j][0].startswith(flat):
            if dotless[j][0] != flat:
                violations.append((code, dotless[j][1]))
            j += 1
    return violations


def serialize_code_table(ontology: Ontology) -> list[str]:
    """Render the ontology back to TSV lines; inverse of parse_code_table."""
    lines = []
    for code in sorted(ontology.codes):
        entry = ontology.codes[code]
        flag = "1" if entry.billable else "0"
        lines.append(f"{entry.code}\t{flag}\t{entry.description}\t{entry.description}")
    return lines
