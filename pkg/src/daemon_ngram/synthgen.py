"""Deterministic synthetic corpora with planted per-family byte signatures.

Files are uniform random bytes. Each family owns a few signatures that are
written into an exact, pre-drawn subset of its files; shared decoys go into
the same number of files in every family so they carry no pairwise signal.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import validate_family_label
from .entropy import PAPER_LENGTHS, entropy_of
from .exceptions import SynthSpecError

DECOY_FAMILY = "*"


@dataclass(frozen=True)
class Signature:
    gram: bytes
    probability: float


@dataclass(frozen=True)
class FamilySpec:
    name: str
    n_files: int
    signatures: tuple[Signature, ...]


@dataclass(frozen=True)
class SynthSpec:
    families: tuple[FamilySpec, ...]
    file_size_bytes: int = 4096
    shared_decoys: tuple[Signature, ...] = ()
    lengths: tuple[int, ...] = PAPER_LENGTHS
    gamma: float = 0.1
    ensure_coverage: bool = True
    seed: int = 0

    def validate(self) -> None:
        if len(self.families) < 1:
            raise SynthSpecError("no families")
        names = [f.name for f in self.families]
        if len(set(names)) != len(names):
            raise SynthSpecError("duplicate family names")
        for fam in self.families:
            validate_family_label(fam.name)
            if fam.n_files < 1:
                raise SynthSpecError(f"family {fam.name} has no files")
            if not fam.signatures:
                raise SynthSpecError(f"family {fam.name} has no signatures")
            if not any(s.probability > self.gamma for s in fam.signatures):
                raise SynthSpecError(
                    f"family {fam.name} needs a signature with probability above gamma")
        for sig in self.all_signatures():
            if len(sig.gram) > self.file_size_bytes:
                raise SynthSpecError(
                    f"signature {sig.gram.hex()} is longer than the {self.file_size_bytes}-byte files")
            if len(sig.gram) not in self.lengths:
                raise SynthSpecError(f"signature length {len(sig.gram)} not in {self.lengths}")
            if entropy_of(sig.gram) < 2.0:
                raise SynthSpecError(f"signature {sig.gram.hex()} has entropy below 2 bits")
            if not 0 < sig.probability <= 1:
                raise SynthSpecError(f"probability {sig.probability} not in (0, 1]")
        grams = [s.gram for s in self.all_signatures()]
        if len(set(grams)) != len(grams):
            raise SynthSpecError("signatures and decoys must be distinct")

    def all_signatures(self):
        for fam in self.families:
            yield from fam.signatures
        yield from self.shared_decoys

    @classmethod
    def standard(cls, n_families=6, files_per_family=50, file_size_bytes=4096,
                 signatures_per_family=2, probability=0.8, n_decoys=3,
                 decoy_probability=0.5, seed=0) -> "SynthSpec":
        """Readable ASCII signature plus random-byte signatures per family, with decoys."""
        rng = np.random.default_rng([seed, 0x5167])
        used: set[bytes] = set()

        def fresh(n):
            while True:
                g = rng.choice(256, size=n, replace=False).astype(np.uint8).tobytes()
                if g not in used:
                    used.add(g)
                    return g

        families = []
        for i in range(n_families):
            name = _family_name(i)
            sigs = [Signature(ascii_signature(name, 16), probability)]
            sigs += [Signature(fresh(8), probability) for _ in range(signatures_per_family - 1)]
            used.add(sigs[0].gram)
            families.append(FamilySpec(name, files_per_family, tuple(sigs)))
        decoys = tuple(Signature(fresh(8), decoy_probability) for _ in range(n_decoys))
        return cls(tuple(families), file_size_bytes, decoys, seed=seed)

    def to_json(self) -> str:
        def sig(s):
            return {"hex": s.gram.hex(), "probability": s.probability}
        return json.dumps({
            "seed": self.seed, "file_size_bytes": self.file_size_bytes,
            "lengths": list(self.lengths), "gamma": self.gamma,
            "ensure_coverage": self.ensure_coverage,
            "families": [{"name": f.name, "files": f.n_files,
                          "signatures": [sig(s) for s in f.signatures]} for f in self.families],
            "shared_decoys": [sig(s) for s in self.shared_decoys],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        """Parse a spec; signatures are given as ``hex``, ``ascii`` or ``random: <length>``."""
        doc = json.loads(text)
        seed = int(doc.get("seed", 0))
        rng = np.random.default_rng([seed, 0x5168])

        def sig(d):
            if "hex" in d:
                gram = bytes.fromhex(d["hex"])
            elif "ascii" in d:
                gram = d["ascii"].encode("ascii")
            elif "random" in d:
                gram = rng.choice(256, size=int(d["random"]), replace=False).astype(np.uint8).tobytes()
            else:
                raise SynthSpecError(f"signature needs hex, ascii or random: {d}")
            return Signature(gram, float(d.get("probability", 1.0)))

        if "families" not in doc and "n_families" in doc:
            return cls.standard(
                n_families=int(doc["n_families"]),
                files_per_family=int(doc.get("files_per_family", 50)),
                file_size_bytes=int(doc.get("file_size_bytes", 4096)),
                signatures_per_family=int(doc.get("signatures_per_family", 2)),
                probability=float(doc.get("probability", 0.8)),
                n_decoys=int(doc.get("n_decoys", 3)),
                decoy_probability=float(doc.get("decoy_probability", 0.5)), seed=seed)
        families = tuple(FamilySpec(str(f["name"]), int(f["files"]),
                                    tuple(sig(s) for s in f["signatures"]))
                         for f in doc["families"])
        return cls(families, int(doc.get("file_size_bytes", 4096)),
                   tuple(sig(s) for s in doc.get("shared_decoys", [])),
                   tuple(doc.get("lengths", PAPER_LENGTHS)), float(doc.get("gamma", 0.1)),
                   bool(doc.get("ensure_coverage", True)), seed)


def _family_name(i: int) -> str:
    return chr(ord("A") + i) if i < 26 else f"F{i:03d}"


def ascii_signature(label: str, length: int) -> bytes:
    """Readable signature ``family_<label>:SIG#...`` padded with unused characters."""
    text = f"family_{label}:SIG#"
    for ch in "0123456789bcdeghjknopqrtuvwxzBCDEFHJKLMNOPQRTUVWXYZ":
        if len(text) >= length:
            break
        if ch not in text:
            text += ch
    return text[:length].encode("ascii")


def injection_count(probability: float, n_files: int, gamma: float) -> int:
    """Files receiving a signature: ``round(p * n)``, at least ``ceil(gamma * n) + 1``."""
    want = int(round(probability * n_files))
    floor = math.ceil(round(gamma * n_files, 9)) + 1
    return min(n_files, max(want, floor))


def _plan(spec: SynthSpec, rng: np.random.Generator):
    """Per family, the list of grams to write into each file."""
    plan = {}
    for fam in spec.families:
        n = fam.n_files
        per_file: list[list[bytes]] = [[] for _ in range(n)]
        covered = np.zeros(n, dtype=bool)
        for sig in fam.signatures:
            c = injection_count(sig.probability, n, spec.gamma)
            if spec.ensure_coverage:
                uncovered = np.flatnonzero(~covered)
                others = np.flatnonzero(covered)
                first = rng.permutation(uncovered)[:c]
                rest = rng.permutation(others)[:c - len(first)]
                chosen = np.concatenate([first, rest])
            else:
                chosen = rng.permutation(n)[:c]
            covered[chosen] = True
            for j in np.sort(chosen).tolist():
                per_file[j].append(sig.gram)
        for decoy in spec.shared_decoys:
            c = int(round(decoy.probability * n))
            for j in np.sort(rng.permutation(n)[:c]).tolist():
                per_file[j].append(decoy.gram)
        plan[fam.name] = per_file
    return plan


def _render(size: int, grams: list[bytes], rng: np.random.Generator) -> bytes:
    buf = bytearray(rng.integers(0, 256, size=size, dtype=np.uint8).tobytes())
    if grams:
        slot = max(len(g) for g in grams)
        n_slots = size // slot
        if n_slots < len(grams):
            raise SynthSpecError(f"{len(grams)} signatures do not fit in a {size}-byte file")
        slots = rng.permutation(n_slots)[:len(grams)]
        for g, s in zip(grams, slots.tolist()):
            off = s * slot + int(rng.integers(0, slot - len(g) + 1))
            buf[off:off + len(g)] = g
    return bytes(buf)


def generate(spec: SynthSpec, out_dir: str | os.PathLike) -> str:
    """Write files, ``manifest.tsv`` and ``ground_truth.tsv`` under ``out_dir``.

    Returns the manifest path. ``ground_truth.tsv`` lists
    ``family \\t hex(signature) \\t files containing it``; decoys use family ``*``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    plan = _plan(spec, rng)
    os.makedirs(out_dir, exist_ok=True)
    manifest_lines = []
    contents: dict[str, list[bytes]] = {}
    for fam in spec.families:
        fam_dir = os.path.join(out_dir, "files", fam.name)
        os.makedirs(fam_dir, exist_ok=True)
        contents[fam.name] = []
        for j, grams in enumerate(plan[fam.name]):
            data = _render(spec.file_size_bytes, grams, rng)
            rel = f"files/{fam.name}/{fam.name}_{j:04d}.bin"
            with open(os.path.join(out_dir, rel), "wb") as fh:
                fh.write(data)
            contents[fam.name].append(data)
            manifest_lines.append(f"{rel}\t{fam.name}\n")
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(manifest_lines)

    truth = []
    for fam in spec.families:
        for sig in fam.signatures:
            hits = sum(sig.gram in d for d in contents[fam.name])
            truth.append(f"{fam.name}\t{sig.gram.hex()}\t{hits}\n")
    for decoy in spec.shared_decoys:
        hits = sum(decoy.gram in d for files in contents.values() for d in files)
        truth.append(f"{DECOY_FAMILY}\t{decoy.gram.hex()}\t{hits}\n")
    with open(os.path.join(out_dir, "ground_truth.tsv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.writelines(truth)
    return manifest


def read_ground_truth(path: str | os.PathLike) -> list[tuple[str, bytes, int]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                fam, hx, count = line.rstrip("\n").split("\t")
                out.append((fam, bytes.fromhex(hx), int(count)))
    return out
