"""Command-line entry point.

Every stage reads and writes files in a work directory (``-w``), so a full
run is::

    pathgr -w run build-taxonomy --in taxonomy.txt
    pathgr -w run assign-paths --corpus corpus.jsonl --fallback-only
    pathgr -w run build-dataset --corpus corpus.jsonl --queries queries.jsonl
    pathgr -w run train --kind mixture
    pathgr -w run evaluate --queries queries.jsonl
"""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

import numpy as np

from . import assignment, config, corpus, evaluation, plotting, ranking, scorer, synthetic
from .embedding import TrigramEncoder
from .taxonomy import enumerate_paths, linearize, load_taxonomy, write_paths

logger = logging.getLogger("pathgr")

PATHS_FILE = "paths.txt"
ASSIGNMENTS_FILE = "assignments.jsonl"
DOCIDS_FILE = "docids.json"
TRAIN_FILE = "train.jsonl"
MODEL_FILE = "model.json"
RESULTS_FILE = "results.jsonl"
REPORT_FILE = "report.json"


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",")]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",")]


def _csv(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _wd(args, name: str, explicit: str | None = None) -> Path:
    return Path(explicit) if explicit else Path(args.workdir) / name


def _encoder(cfg) -> TrigramEncoder:
    return TrigramEncoder(cfg["embedder"]["dim"])


def _decode_config(cfg) -> ranking.DecodeConfig:
    d = cfg["decode"]
    return ranking.DecodeConfig(
        k_paths=d["k_paths"], beam=d["beam"], max_len=d["max_len"],
        top_k=cfg["eval"]["top_k"], path_beam=d["path_beam"],
        constrain_paths=d["constrain_paths"], path_filtered_trie=d["path_filtered_trie"],
        include_path_score=cfg["rank"]["include_path_score"],
    )


def _load_index(args, cfg) -> tuple[scorer.Scorer, ranking.RetrievalIndex]:
    m = scorer.load_model(_wd(args, MODEL_FILE, args.model))
    table = corpus.DocidTable.load(_wd(args, DOCIDS_FILE, args.docids))
    sets = assignment.load_assignments(_wd(args, ASSIGNMENTS_FILE, args.assignments))
    all_paths = None
    if cfg["decode"]["full_path_space"]:
        tax = _wd(args, PATHS_FILE, args.taxonomy)
        all_paths = enumerate_paths(load_taxonomy(tax, cfg["taxonomy"]["root"],
                                                  cfg["taxonomy"]["max_depth"]))
    return m, ranking.RetrievalIndex.build(table, sets, all_paths)


# --- commands -----------------------------------------------------------------

def cmd_build_taxonomy(args, cfg) -> int:
    t = load_taxonomy(args.input, cfg["taxonomy"]["root"], cfg["taxonomy"]["max_depth"])
    paths = enumerate_paths(t)
    out = _wd(args, PATHS_FILE, args.out)
    write_paths(paths, out)
    print(f"root\t{t.root_name}\nmax_depth\t{t.max_depth}\npaths\t{len(paths)}\nout\t{out}")
    return 0


def cmd_assign_paths(args, cfg) -> int:
    docs = corpus.load_documents(args.corpus)
    t = load_taxonomy(_wd(args, PATHS_FILE, args.taxonomy), cfg["taxonomy"]["root"],
                      cfg["taxonomy"]["max_depth"])
    sel = cfg["selector"]
    selector = None
    if sel["url"] and not args.fallback_only:
        prompt = sel.get("prompt_template") or assignment.DEFAULT_PROMPT_TEMPLATE
        selector = assignment.HttpPathSelector(
            sel["url"], timeout=sel["timeout"], cache_dir=sel["cache_dir"],
            prompt_template=prompt if sel["send_prompt"] else None,
        )
    sets = assignment.assign_paths(docs, enumerate_paths(t), k=cfg["assign"]["k"],
                                   selector=selector, max_concurrency=sel["max_concurrency"],
                                   encoder=_encoder(cfg))
    out = _wd(args, ASSIGNMENTS_FILE, args.out)
    assignment.save_assignments(sets, out)
    n_ext = sum(1 for s in sets if s.provenance == assignment.EXTERNAL)
    print(f"documents\t{len(sets)}\nexternal\t{n_ext}\nfallback\t{len(sets) - n_ext}\nout\t{out}")
    return 0


def cmd_build_dataset(args, cfg) -> int:
    docs, queries = corpus.ingest_corpus(args.corpus, args.queries)
    sets = assignment.load_assignments(_wd(args, ASSIGNMENTS_FILE, args.assignments))
    ds = cfg["dataset"]
    table = corpus.assign_docids(docs, ds["scheme"], ds["n_keywords"])
    examples = assignment.build_training_set(
        docs, queries, sets, table, firstp_tokens=ds["firstp_tokens"],
        max_synthetic=ds["max_synthetic"], encoder=_encoder(cfg))
    table.save(_wd(args, DOCIDS_FILE, args.docids))
    assignment.save_examples(examples, _wd(args, TRAIN_FILE, args.out))
    kinds: dict[str, int] = {}
    for ex in examples:
        kinds[ex.kind] = kinds.get(ex.kind, 0) + 1
    print(f"scheme\t{table.scheme}\ndocids\t{len(table)}")
    for k in sorted(kinds):
        print(f"{k}\t{kinds[k]}")
    return 0


def cmd_train(args, cfg) -> int:
    examples = assignment.load_examples(_wd(args, TRAIN_FILE, args.data))
    table = corpus.DocidTable.load(_wd(args, DOCIDS_FILE, args.docids))
    mc = cfg["model"]
    m = scorer.train(examples, mc["kind"], mc["lambda"], mc["alpha"],
                     extra_tokens=table.vocabulary())
    out = _wd(args, MODEL_FILE, args.out)
    scorer.save_model(m, out)
    print(f"kind\t{m.kind}\nexamples\t{len(examples)}\nvocab\t{len(m.vocab)}\nout\t{out}")
    return 0


def cmd_search(args, cfg) -> int:
    m, index = _load_index(args, cfg)
    ans = ranking.retrieve(m, args.query, index, _decode_config(cfg))
    print("# paths")
    for p, lp in ans.paths:
        print(f"{linearize(p)}\t{lp:.6f}")
    print("# ranking")
    print("rank\tdoc_id\tscore\tpath")
    for i, s in enumerate(ans.ranking, 1):
        print(f"{i}\t{s.doc_id}\t{s.score:.6f}\t{linearize(s.source_path) if s.source_path else ''}")
    return 0


def _doc_map(args):
    if not getattr(args, "corpus", None):
        return None
    return {d.doc_id: d for d in corpus.load_documents(args.corpus)}


def cmd_evaluate(args, cfg) -> int:
    m, index = _load_index(args, cfg)
    docs = _doc_map(args)
    queries = corpus.load_queries(args.queries)
    answers, report = evaluation.evaluate(m, queries, index, _decode_config(cfg),
                                          cfg["eval"]["metrics"], docs)
    outdir = Path(args.out_dir or args.workdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ranking.save_answers(answers, outdir / RESULTS_FILE)
    report.config = {**report.config, "model": cfg["model"], "dataset": cfg["dataset"]}
    report.save(outdir / REPORT_FILE)
    lines = ["metric\tvalue"] + [f"{k}\t{v:.6f}" for k, v in sorted(report.metrics.items())]
    (outdir / "metrics.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    plotting.plot_recall_curve(report.ranks, outdir / "recall.png",
                               max_k=max(1, cfg["eval"]["top_k"]))
    print("\n".join(lines))
    return 0


def cmd_sweep(args, cfg) -> int:
    m, index = _load_index(args, cfg)
    queries = corpus.load_queries(args.queries)
    res = evaluation.sweep_paths(m, queries, index, args.k_list, _decode_config(cfg),
                                 cfg["eval"]["metrics"])
    outdir = Path(args.out_dir or args.workdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tsv = res.to_tsv()
    (outdir / "sweep.tsv").write_text(tsv, encoding="utf-8")
    plotting.plot_sweep({k: r.metrics for k, r in res.reports.items()}, outdir / "sweep.png")
    print(tsv, end="")
    return 0


def cmd_bench(args, cfg) -> int:
    m, index = _load_index(args, cfg)
    queries = corpus.load_queries(args.queries)
    if args.limit:
        queries = sorted(queries, key=lambda q: q.query_id)[:args.limit]
    t = evaluation.bench(m, queries, index, _decode_config(cfg))
    outdir = Path(args.out_dir or args.workdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["setting\tseconds_per_query",
             f"docid_only\t{t['docid_only_s']:.6f}",
             f"path_and_docid\t{t['path_and_docid_s']:.6f}"]
    (outdir / "bench.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if t["n_queries"]:
        plotting.plot_bench(t, outdir / "bench.png")
    print("\n".join(lines))
    return 0


def cmd_synth(args, cfg) -> int:
    data = synthetic.generate(args.n_docs, seed=cfg["seed"])
    out = Path(args.workdir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.write_documents(data.docs, out / "corpus.jsonl")
    corpus.write_queries(data.queries, out / "queries.jsonl")
    corpus.write_queries(data.test_queries, out / "test_queries.jsonl")
    write_paths(enumerate_paths(data.taxonomy), out / "taxonomy.txt")
    print(f"documents\t{len(data.docs)}\nqueries\t{len(data.queries)}\nout\t{out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathgr", description=__doc__.splitlines()[0])
    p.add_argument("-w", "--workdir", default=".", help="directory for intermediate files")
    p.add_argument("--config", help=f"JSON config file (default: ${config.ENV_VAR})")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def index_args(sp):
        sp.add_argument("--model")
        sp.add_argument("--docids")
        sp.add_argument("--assignments")
        sp.add_argument("--taxonomy", help="paths file, used with --full-path-space")
        sp.add_argument("--k-paths", type=int, dest="decode__k_paths")
        sp.add_argument("--beam", type=int, dest="decode__beam")
        sp.add_argument("--path-beam", type=int, dest="decode__path_beam")
        sp.add_argument("--max-len", type=int, dest="decode__max_len")
        sp.add_argument("--top-k", type=int, dest="eval__top_k")
        sp.add_argument("--full-path-space", action="store_const", const=True,
                        dest="decode__full_path_space")
        sp.add_argument("--unconstrained-paths", action="store_const", const=False,
                        dest="decode__constrain_paths")
        sp.add_argument("--path-filtered-trie", action="store_const", const=True,
                        dest="decode__path_filtered_trie")
        sp.add_argument("--include-path-score", action="store_const", const=True,
                        dest="rank__include_path_score")

    sp = sub.add_parser("build-taxonomy", help="load, depth-limit and linearize a taxonomy")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--max-depth", type=int, dest="taxonomy__max_depth")
    sp.add_argument("--root", dest="taxonomy__root")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_build_taxonomy)

    sp = sub.add_parser("assign-paths", help="candidate category paths per document")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--taxonomy")
    sp.add_argument("--k", type=int, dest="assign__k")
    sp.add_argument("--selector-url", dest="selector__url")
    sp.add_argument("--fallback-only", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_assign_paths)

    sp = sub.add_parser("build-dataset", help="docid table and path-augmented training set")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--assignments")
    sp.add_argument("--scheme", choices=corpus.SCHEMES, dest="dataset__scheme")
    sp.add_argument("--n-keywords", type=int, dest="dataset__n_keywords")
    sp.add_argument("--firstp-tokens", type=int, dest="dataset__firstp_tokens")
    sp.add_argument("--docids")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_build_dataset)

    sp = sub.add_parser("train", help="fit a scorer")
    sp.add_argument("--data")
    sp.add_argument("--docids")
    sp.add_argument("--kind", choices=("tabular", "mixture"), dest="model__kind")
    sp.add_argument("--lambda", type=_floats, dest="model__lambda")
    sp.add_argument("--alpha", type=float, dest="model__alpha")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("search", help="answer one query: paths, then ranked docids")
    sp.add_argument("--query", required=True)
    index_args(sp)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("evaluate", help="retrieve for a query file and report metrics")
    sp.add_argument("--queries", required=True)
    sp.add_argument("--corpus", help="enables the explanation-relevance metric")
    sp.add_argument("--metrics", type=_csv, dest="eval__metrics")
    sp.add_argument("--out-dir")
    index_args(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="metrics against the number of decoded paths")
    sp.add_argument("--queries", required=True)
    sp.add_argument("--k-list", type=_ints, default=[1, 2, 3, 4, 5])
    sp.add_argument("--metrics", type=_csv, dest="eval__metrics")
    sp.add_argument("--out-dir")
    index_args(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bench", help="per-query time, docid-only vs path+docid decoding")
    sp.add_argument("--queries", required=True)
    sp.add_argument("--limit", type=int, default=0)
    sp.add_argument("--out-dir")
    index_args(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("synth", help="write a seeded toy corpus, queries and taxonomy")
    sp.add_argument("--n-docs", type=int, default=200)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config.load_config(args.config)
    config.override(cfg, seed=args.seed,
                    **{k: v for k, v in vars(args).items() if "__" in k})
    random.seed(cfg["seed"])
    np.random.seed(cfg["seed"])
    Path(args.workdir).mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args, cfg)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
