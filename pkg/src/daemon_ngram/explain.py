"""Human-readable reports built from the family-pair tags of surviving features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .bundle import ModelBundle
from .selector import Pair, TaggedFeature, family_pairs


def printable(gram: bytes) -> str:
    return "".join(chr(b) if 0x20 <= b < 0x7F else "." for b in gram)


@dataclass(frozen=True)
class ExplainEntry:
    feature: TaggedFeature
    gain: float

    @property
    def hex(self) -> str:
        return self.feature.gram.hex()

    @property
    def ascii(self) -> str:
        return printable(self.feature.gram)


@dataclass
class ExplainReport:
    pairs: dict[Pair, list[ExplainEntry]] = field(default_factory=dict)
    families: dict[str, list[ExplainEntry]] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not any(self.pairs.values()) and not any(self.families.values())

    def to_text(self) -> str:
        out = []
        for (a, b), entries in self.pairs.items():
            out.append(f"== {a} vs {b}")
            if not entries:
                out.append("   (no surviving features are tagged with this pair)")
            for rank, e in enumerate(entries, 1):
                out.append(f"  {rank:>3}. gain={e.gain:.6f} len={e.feature.length:<3} "
                           f"H={e.feature.entropy:.4f} hex={e.hex} ascii={e.ascii!r}")
        for fam, entries in self.families.items():
            out.append(f"== most distinctive of {fam}")
            if not entries:
                out.append("   (none)")
            for rank, e in enumerate(entries, 1):
                out.append(f"  {rank:>3}. mean_gain={e.gain:.6f} len={e.feature.length:<3} "
                           f"hex={e.hex} ascii={e.ascii!r}")
        return "\n".join(out) + ("\n" if out else "")

    def to_machine(self) -> str:
        out = []
        for (a, b), entries in self.pairs.items():
            out.append(f"#pair\t{a}|{b}\t{len(entries)}")
            out.extend(e.feature.to_line() for e in entries)
        for fam, entries in self.families.items():
            out.append(f"#family\t{fam}\t{len(entries)}")
            out.extend(e.feature.to_line() for e in entries)
        return "\n".join(out) + ("\n" if out else "")


def _check_family(name: str, families: Sequence[str]) -> None:
    if name not in families:
        raise LookupError(f"unknown family {name!r}; valid families: {', '.join(families)}")


def explain(bundle: ModelBundle, pair: tuple[str, str] | None = None, top_n: int = 10,
            include_families: bool = True) -> ExplainReport:
    """Top ``top_n`` surviving features per family pair, ranked by stored gain.

    With ``pair`` given only that pair (and its two families) is reported.
    """
    families = bundle.families
    if pair is not None:
        for name in pair:
            _check_family(name, families)
        pairs = [tuple(sorted(pair))]
    else:
        pairs = family_pairs(families)
    report = ExplainReport()
    if top_n <= 0:
        return report
    for p in pairs:
        tagged = [ExplainEntry(f, f.tags[p]) for f in bundle.features if p in f.tags]
        tagged.sort(key=lambda e: (-e.gain, e.feature.length, e.feature.gram))
        report.pairs[p] = tagged[:top_n]
    if include_families:
        wanted = sorted({f for p in pairs for f in p})
        for fam in wanted:
            scored = []
            for f in bundle.features:
                gains = [g for (a, b), g in f.tags.items() if fam in (a, b)]
                if gains and fam in f.origin_families:
                    scored.append((len(gains), sum(gains) / len(gains), f))
            scored.sort(key=lambda t: (-t[0], -t[1], t[2].length, t[2].gram))
            report.families[fam] = [ExplainEntry(f, g) for _, g, f in scored[:top_n]]
    return report
