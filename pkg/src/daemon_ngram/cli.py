"""Command-line entry point: ``train``, ``classify``, ``evaluate``, ``explain``, ``synth``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys

import numpy as np

from . import __version__
from .bundle import ModelBundle
from .config import RunConfig
from .corpus import load_corpus, read_manifest, stratified_split, write_manifest
from .exceptions import DaemonError
from .explain import explain
from .featurizer import _map
from .metrics import PredictionMatrix, classification_report, logloss
from .pipeline import STAGES, DaemonClassifier, format_timings
from .synthgen import SynthSpec, generate

log = logging.getLogger("daemon_ngram")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = RunConfig.from_file(args.config, cfg)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = v
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    return cfg.with_overrides(overrides) if overrides else cfg


def _sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    corpus = load_corpus(args.root, args.manifest)
    provenance = {"manifest_sha256": _sha256_file(args.manifest)}
    train = corpus
    if args.train_fraction is not None:
        split_seed = cfg.seed if args.split_seed is None else args.split_seed
        split = stratified_split(corpus, args.train_fraction, split_seed)
        train = corpus.subset(split.train_ids)
        provenance.update(split_fraction=args.train_fraction, split_seed=split_seed)
        if args.test_manifest:
            write_manifest(args.test_manifest, [s for s in corpus if s.id in split.test_ids])
    train.require_trainable()
    clf = DaemonClassifier.from_config(cfg)
    clf.fit([s.bytes for s in train], [s.family for s in train], provenance=provenance)
    clf.bundle_.save(args.out)
    print(format_timings(clf.timings_))
    b = clf.bundle_
    print(f"families={len(b.families)} grams_selected={len(clf.miner_.features_)} "
          f"grams_kept={len(b.features)} onegram_columns_kept={len(b.onegram_columns)}")
    return EXIT_OK


def _input_files(path: str) -> list[str]:
    if os.path.isdir(path):
        found = []
        for dirpath, _, names in os.walk(path):
            found.extend(os.path.join(dirpath, n) for n in names)
        return sorted(found)
    return [path]


def _read(path):
    try:
        with open(path, "rb") as fh:
            return fh.read(), None
    except OSError as exc:
        return None, exc.strerror or str(exc)


def cmd_classify(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    threads = args.threads or None
    paths = _input_files(args.input)
    if not os.path.exists(args.input):
        raise DaemonError(f"input {args.input} does not exist")
    loaded = _map(_read, paths, threads)
    ok = [(p, data) for p, (data, err) in zip(paths, loaded) if err is None]
    proba = bundle.predict_proba([d for _, d in ok], n_jobs=threads)
    rows = {p: (bundle.families[int(np.argmax(pr))], pr) for (p, _), pr in zip(ok, proba)}
    failed = 0
    lines = ["path\tpredicted\t" + "\t".join(bundle.families)]
    for p, (_, err) in zip(paths, loaded):
        if err is not None:
            failed += 1
            lines.append(f"{p}\tERROR\t{err}")
            print(f"cannot read {p}: {err}", file=sys.stderr)
            continue
        fam, pr = rows[p]
        lines.append(f"{p}\t{fam}\t" + "\t".join(f"{v:.9g}" for v in pr))
    text = "\n".join(lines) + "\n"
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_DATA if failed else EXIT_OK


def read_predictions(path: str) -> tuple[tuple[str, ...], dict[str, np.ndarray]]:
    """Parse ``classify`` output into (class order, path -> probabilities)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["path", "predicted"]:
            raise DaemonError(f"{path} is not a classify output file")
        classes = tuple(header[2:])
        out = {}
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2 or parts[1] == "ERROR":
                continue
            out[os.path.normpath(parts[0])] = np.array([float(v) for v in parts[2:]])
    return classes, out


def _print_evaluation(pm: PredictionMatrix) -> None:
    rep = classification_report(pm)
    print(f"samples\t{len(pm.sample_ids)}")
    print(f"logloss\t{logloss(pm):.9g}")
    sys.stdout.write(rep.to_text())


def cmd_evaluate(args) -> int:
    if args.predictions:
        classes, preds = read_predictions(args.predictions)
        ids, probs, labels = [], [], []
        for rel, fam in read_manifest(args.manifest):
            key = os.path.normpath(os.path.join(args.root, rel)) if args.root else None
            p = preds.get(key) if key else None
            if p is None:
                p = preds.get(os.path.normpath(rel))
            if p is None:
                raise DaemonError(f"no prediction for {rel}")
            ids.append(rel)
            probs.append(p)
            labels.append(fam)
        pm = PredictionMatrix.from_labels(ids, np.array(probs), labels, classes)
    else:
        if not args.bundle:
            raise UsageError("evaluate needs a bundle or --predictions")
        bundle = ModelBundle.load(args.bundle)
        corpus = load_corpus(args.root, args.manifest)
        unknown = sorted(set(corpus.families) - set(bundle.families))
        if unknown:
            raise DaemonError(f"corpus families unknown to the bundle: {unknown}")
        proba = bundle.predict_proba([s.bytes for s in corpus], n_jobs=args.threads or None)
        pm = PredictionMatrix.from_labels([s.id for s in corpus], proba,
                                          [s.family for s in corpus], bundle.families)
    _print_evaluation(pm)
    return EXIT_OK


def cmd_explain(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    pair = tuple(args.pair) if args.pair else None
    report = explain(bundle, pair=pair, top_n=args.top_n)
    if args.format == "machine":
        sys.stdout.write(report.to_machine())
    else:
        if report.is_empty():
            print("(empty report)")
        sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_synth(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = SynthSpec.from_json(fh.read())
    manifest = generate(spec, args.out)
    print(manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="daemon-ngram",
                     description="Byte N-gram mining and explainable file-family classification")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="run stages 1-5 and write a model bundle")
    p.add_argument("--root", required=True, help="corpus root directory")
    p.add_argument("--manifest", required=True, help="'<path>\\t<family>' manifest")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--train-fraction", type=float,
                   help="train on a stratified split of this fraction only")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--test-manifest", help="write the held-out side as a manifest here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="predict families for files")
    p.add_argument("bundle")
    p.add_argument("input", help="file or directory")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="logloss, accuracy, macro precision/recall")
    p.add_argument("bundle", nargs="?")
    p.add_argument("--root", default="")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", help="evaluate a classify output file instead of a bundle")
    p.add_argument("--threads", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="top features per family pair")
    p.add_argument("bundle")
    p.add_argument("--pair", nargs=2, metavar=("FAMILY_A", "FAMILY_B"))
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--format", choices=("text", "machine"), default="text")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a JSON spec")
    p.add_argument("spec")
    p.add_argument("out")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DaemonError, OSError, ValueError, LookupError) as exc:
        stage = getattr(exc, "stage", None)
        label = dict(STAGES).get(stage, stage)
        prefix = f"{label}: " if label else ""
        msg = exc.args[0] if isinstance(exc, LookupError) and exc.args else exc
        print(f"error: {prefix}{msg}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
