"""Command-line entry point: ``vifidel {score,eval-pairwise,correlate,combine}``."""
from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from typing import Optional

from .embeddings import load_embeddings
from .estimator import VifidelScorer, WMDReferenceScorer
from .evalharness import (
    SPLITS,
    correlate,
    forced_choice_accuracy,
    load_forced_choice,
    load_judgments,
    load_references,
    load_scores,
)
from .exceptions import DataFormatError, MissingAssetError, VifidelError
from .imagecontent import (
    MERGE_CONCAT,
    MERGE_UNION_UNIQUE,
    THRESHOLD_PROFILES,
    load_detections,
    merge_maps,
)
from .metric import combine_scores
from .textproc import read_stopwords

logger = logging.getLogger("vifidel")

ENV_PREFIX = "VIFIDEL_"


def _version():
    try:
        return version("vifidel")
    except PackageNotFoundError:
        return "0+unknown"


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    embeddings: Optional[str] = None
    embedding_format: str = "auto"
    detections: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    merge: str = MERGE_UNION_UNIQUE
    binarize: bool = False
    stopwords: Optional[str] = None
    p: float = 2.0
    empty_policy: str = "zero"
    n_refs: list = field(default_factory=list)
    output: Optional[str] = None
    workers: int = 1

    def validate(self):
        paths = [self.embeddings, self.stopwords, *self.detections]
        for path in paths:
            if path is not None and not os.path.exists(path):
                raise UsageError(f"no such file: {path}")
        if not self.p > 0:
            raise UsageError("--p must be positive")
        if any(n < 0 for n in self.n_refs):
            raise UsageError("--n-refs must be nonnegative")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        if self.thresholds and len(self.thresholds) not in (1, len(self.detections)):
            raise UsageError("give one --det-threshold, or one per --detections")
        for t in self.thresholds:
            if not 0.0 <= t <= 1.0:
                raise UsageError(f"--det-threshold {t} outside [0, 1]")
        return self


def _threshold(value):
    if value in THRESHOLD_PROFILES:
        return THRESHOLD_PROFILES[value]
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a number or one of {sorted(THRESHOLD_PROFILES)}"
        ) from None


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename; ``None`` means stdout."""
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".vifidel-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# worker pool: the scorer lives in a module global inherited through fork, so
# the embedding table is never pickled


_WORKER_SCORER = None


def _score_task(task):
    image_id, cand, caption, refs, with_plan = task
    try:
        rec = _WORKER_SCORER.score_record(
            image_id, caption, cand, references=refs, keep_plan=with_plan
        )
    except MissingAssetError as exc:
        return ("skip", str(exc))
    except VifidelError as exc:
        return ("error", str(exc))
    return ("ok", rec.to_dict(with_plan=with_plan))


def _similarity_task(task):
    image_id, caption, refs = task
    try:
        return ("ok", _WORKER_SCORER.score_caption(image_id, caption, refs))
    except (VifidelError, KeyError) as exc:
        return ("skip", str(exc))


def run_tasks(scorer, fn, tasks, workers):
    """Apply ``fn`` to ``tasks`` with ``workers`` processes, results in input order."""
    global _WORKER_SCORER
    _WORKER_SCORER = scorer
    try:
        if workers <= 1 or len(tasks) < 2 * workers or "fork" not in multiprocessing.get_all_start_methods():
            return [fn(t) for t in tasks]
        ctx = multiprocessing.get_context("fork")
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            return list(pool.map(fn, tasks, chunksize=chunk))
    finally:
        _WORKER_SCORER = None


# ---------------------------------------------------------------------------
# shared loading


def _load_images(cfg):
    thresholds = cfg.thresholds or [0.0]
    if len(thresholds) == 1:
        thresholds = thresholds * len(cfg.detections)
    maps = [load_detections(p, t) for p, t in zip(cfg.detections, thresholds)]
    return merge_maps(maps, cfg.merge)


def _load_table(cfg):
    return load_embeddings(cfg.embeddings, cfg.embedding_format)


def _stopwords(cfg):
    return read_stopwords(cfg.stopwords) if cfg.stopwords else None


def _read_captions(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append(
                    (lineno, str(obj["image_id"]), str(obj["candidate_id"]), obj["caption"])
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"bad caption record: {exc}", path, lineno) from None
            if not isinstance(rows[-1][3], str):
                raise DataFormatError("caption must be a string", path, lineno)
    return rows


def _fmt(x):
    return "nan" if x != x else f"{x:.6f}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_score(args, cfg):
    if not cfg.detections:
        raise UsageError("score needs at least one --detections file")
    table = _load_table(cfg)
    images = _load_images(cfg)
    references = load_references(args.references) if args.references else None
    n_refs = cfg.n_refs[0] if cfg.n_refs else None
    scorer = VifidelScorer(
        table, _stopwords(cfg), cfg.p, cfg.binarize, n_refs, cfg.empty_policy
    ).fit(images, references=references)

    captions = _read_captions(args.captions)
    tasks = [(i, c, cap, None, args.dump_plan) for _, i, c, cap in captions]
    results = run_tasks(scorer, _score_task, tasks, cfg.workers)

    lines, tsv = [], ["image_id\tcandidate_id\tscore"]
    skipped = 0
    scores = []
    for (lineno, image_id, cand, _), (status, payload) in zip(captions, results):
        if status == "error":
            raise DataFormatError(payload, args.captions, lineno)
        if status == "skip":
            skipped += 1
            logger.warning("%s:%d skipped: %s", args.captions, lineno, payload)
            continue
        lines.append(json.dumps(payload, ensure_ascii=False))
        tsv.append(f"{image_id}\t{cand}\t{_fmt(payload['score'])}")
        scores.append(payload["score"])
    mean = sum(scores) / len(scores) if scores else float("nan")
    tsv.append(f"mean\t{len(scores)}\t{_fmt(mean)}")

    write_atomic(cfg.output, "".join(s + "\n" for s in lines))
    if args.summary:
        write_atomic(args.summary, "\n".join(tsv) + "\n")
    return len(scores), skipped


def _pairwise_scorer(args, cfg, table, references):
    if args.metric == "vifidel":
        if not cfg.detections:
            raise UsageError("eval-pairwise with --metric vifidel needs --detections")
        return VifidelScorer(
            table, _stopwords(cfg), cfg.p, cfg.binarize, None, cfg.empty_policy
        ).fit(_load_images(cfg))
    if references is None:
        raise UsageError(f"--metric {args.metric} needs --references")
    mode = "best" if args.metric == "wmd-best" else "worst"
    return WMDReferenceScorer(table, _stopwords(cfg), cfg.p, mode).fit(references)


def cmd_eval_pairwise(args, cfg):
    table = _load_table(cfg)
    references = load_references(args.references) if args.references else None
    items, ties = load_forced_choice(args.items)
    for lineno, image_id in ties:
        logger.warning("%s:%d human votes tie for %s; item skipped", args.items, lineno, image_id)
    scorer = _pairwise_scorer(args, cfg, table, references)
    n_refs_list = cfg.n_refs or [0]
    seeds = args.ref_sample_seeds or [None]

    header = ["metric", "n_refs", *SPLITS, "all", "n_items", "skipped"]
    rows = ["\t".join(header)]
    total_scored = 0
    total_skipped = len(ties)
    for n_refs in n_refs_list:
        if args.metric != "vifidel" and n_refs == 0:
            continue
        reports = []
        for seed in seeds:
            # collect every (image, caption, refs) triple the harness will ask
            # for, score them on the pool, then replay from the cache
            requests = []
            forced_choice_accuracy(
                items,
                lambda i, cap, refs: requests.append((i, cap, tuple(refs))) or 0.0,
                n_refs,
                references,
                seed,
            )
            unique = list(dict.fromkeys(requests))
            results = run_tasks(
                scorer, _similarity_task, [(i, c, list(r)) for i, c, r in unique], cfg.workers
            )
            cache = dict(zip(unique, results))

            def lookup(image_id, caption, refs, cache=cache):
                status, value = cache[(image_id, caption, tuple(refs))]
                if status != "ok":
                    raise MissingAssetError(value)
                return value

            reports.append(forced_choice_accuracy(items, lookup, n_refs, references, seed))
        per_split = {
            s: sum(r.per_split[s] for r in reports) / len(reports) for s in SPLITS
        }
        overall = sum(r.overall for r in reports) / len(reports)
        n_items = sum(reports[0].counts.values())
        skipped = len(reports[0].skipped)
        for idx, image_id, why in reports[0].skipped:
            logger.warning("item %d (%s) skipped at n_refs=%d: %s", idx, image_id, n_refs, why)
        total_scored += n_items
        total_skipped += skipped
        rows.append(
            "\t".join(
                [args.metric, str(n_refs), *(_fmt(per_split[s]) for s in SPLITS),
                 _fmt(overall), str(n_items), str(skipped)]
            )
        )
    write_atomic(cfg.output, "\n".join(rows) + "\n")
    return total_scored, total_skipped


def cmd_correlate(args, cfg):
    judgments = load_judgments(args.judgments)
    records = load_scores(args.scores)
    scores = {}
    for rec in records:
        key = (rec["image_id"], rec["candidate_id"])
        if key in scores:
            raise DataFormatError(f"duplicate score for {key}", args.scores)
        scores[key] = rec["score"]
    result = correlate(judgments, scores)
    text = "relevance\tthoroughness\n" + f"{_fmt(result['relevance'])}\t{_fmt(result['thoroughness'])}\n"
    write_atomic(cfg.output, text)
    return len(judgments), 0


def cmd_combine(args, cfg):
    a = load_scores(args.first)
    b = load_scores(args.second)
    combined = combine_scores(a, b)
    write_atomic(cfg.output, "".join(json.dumps(r) + "\n" for r in combined))
    return len(combined), 0


# ---------------------------------------------------------------------------
# parser


def _add_embedding_flags(p):
    p.add_argument("--embeddings", default=_env("EMBEDDINGS"), help="word2vec file (env VIFIDEL_EMBEDDINGS)")
    p.add_argument("--embedding-format", choices=["text", "binary", "auto"],
                   default=_env("EMBEDDING_FORMAT", "auto"))
    p.add_argument("--stopwords", default=_env("STOPWORDS"), help="one stopword per line; '#' comments")
    p.add_argument("--p", type=float, default=float(_env("P", "2")), help="travel cost exponent (default 2)")


def _add_image_flags(p):
    p.add_argument("--detections", action="append", default=[],
                   help="detections JSONL; repeat to merge several sources")
    p.add_argument("--det-threshold", action="append", type=_threshold, default=[],
                   help="confidence threshold or profile (d80=0.6, d500=0.4); once, or once per --detections")
    p.add_argument("--merge", choices=[MERGE_UNION_UNIQUE, MERGE_CONCAT], default=MERGE_UNION_UNIQUE)
    p.add_argument("--binarize", action="store_true", help="presence/absence instead of label counts")


def _add_run_flags(p, empty=True):
    p.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    p.add_argument("--workers", type=int,
                   default=int(_env("WORKERS", str(os.cpu_count() or 1))))
    if empty:
        p.add_argument("--empty-policy", choices=["error", "zero"], default=_env("EMPTY_POLICY", "zero"))


def build_parser():
    parser = argparse.ArgumentParser(prog="vifidel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score captions against image object labels")
    _add_embedding_flags(p)
    _add_image_flags(p)
    p.add_argument("--captions", required=True, help='JSONL {"image_id","candidate_id","caption"}')
    p.add_argument("--references", help='JSONL {"image_id","references":[...]}')
    p.add_argument("--n-refs", type=int, default=None, help="use only the first N references")
    p.add_argument("--summary", help="TSV summary path")
    p.add_argument("--dump-plan", action="store_true", help="include the transport plan in each record")
    _add_run_flags(p)
    p.set_defaults(func=cmd_score, needs_embeddings=True)

    p = sub.add_parser("eval-pairwise", help="forced-choice accuracy per split")
    _add_embedding_flags(p)
    _add_image_flags(p)
    p.add_argument("--items", required=True, help='JSONL {"image_id","b","c","label","split"}')
    p.add_argument("--references")
    p.add_argument("--n-refs", type=int, nargs="+", default=[0])
    p.add_argument("--metric", choices=["vifidel", "wmd-best", "wmd-worst"], default="vifidel")
    p.add_argument("--ref-sample-seeds", type=int, nargs="*", default=None,
                   help="average accuracy over random reference subsets drawn with these seeds")
    _add_run_flags(p)
    p.set_defaults(func=cmd_eval_pairwise, needs_embeddings=True)

    p = sub.add_parser("correlate", help="Spearman correlation with human judgments")
    p.add_argument("--judgments", required=True)
    p.add_argument("--scores", required=True)
    _add_run_flags(p, empty=False)
    p.set_defaults(func=cmd_correlate, needs_embeddings=False)

    p = sub.add_parser("combine", help="average two aligned score files")
    p.add_argument("first")
    p.add_argument("second")
    _add_run_flags(p, empty=False)
    p.set_defaults(func=cmd_combine, needs_embeddings=False)
    return parser


def _config(args):
    n_refs = getattr(args, "n_refs", None)
    if n_refs is None:
        n_refs = []
    elif isinstance(n_refs, int):
        n_refs = [n_refs]
    cfg = RunConfig(
        embeddings=getattr(args, "embeddings", None),
        embedding_format=getattr(args, "embedding_format", "auto"),
        detections=list(getattr(args, "detections", [])),
        thresholds=list(getattr(args, "det_threshold", [])),
        merge=getattr(args, "merge", MERGE_UNION_UNIQUE),
        binarize=getattr(args, "binarize", False),
        stopwords=getattr(args, "stopwords", None),
        p=getattr(args, "p", 2.0),
        empty_policy=getattr(args, "empty_policy", "zero"),
        n_refs=list(n_refs),
        output=args.output,
        workers=args.workers,
    )
    for name in ("captions", "references", "items", "judgments", "scores", "first", "second"):
        path = getattr(args, name, None)
        if path is not None and not os.path.exists(path):
            raise UsageError(f"no such file: {path}")
    return cfg.validate()


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="vifidel: %(levelname)s: %(message)s",
    )
    if args.needs_embeddings and not args.embeddings:
        parser.print_usage(sys.stderr)
        print(f"vifidel {args.command}: error: --embeddings is required", file=sys.stderr)
        return 2
    try:
        cfg = _config(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"vifidel {args.command}: error: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    try:
        scored, skipped = args.func(args, cfg)
    except UsageError as exc:
        print(f"vifidel {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (VifidelError, OSError, ValueError) as exc:
        print(f"vifidel {args.command}: error: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - start
    print(
        f"vifidel {args.command}: {scored} items scored, {skipped} skipped, {elapsed:.2f}s",
        file=sys.stderr,
    )
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
