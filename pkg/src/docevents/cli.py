"""Command-line interface.

Subcommands cover data conversion, corpus statistics, zero-shot split
construction, the individual pipeline stages and the full pipeline.  The
``DOCEVENTS_CACHE`` environment variable supplies the default directory
for model artifacts when ``--output`` is omitted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import generation, pipeline, tapkey
from .backends import TinySeq2SeqBackend, TrainConfig
from .corpus import (distance_stats, dump_canonical, load_canonical,
                     load_rams, load_wikievents)
from .embeddings import SvdCooccurrenceBackend
from .generation import DecodeConfig
from .metrics import (format_reports, predictions_from_jsonlines,
                      score_args_coref, score_args_head,
                      score_args_informative, score_rams_span, score_triggers)
from .ontology import load_ontology, template_for
from .pipeline import (RunConfig, load_class_vectors, run_pipeline,
                       save_class_vectors, sentences_of, training_pairs)
from .templates import alignment_trace, build_instance

log = logging.getLogger(__name__)

# The 8 subtypes of the one-per-general-type zero-shot split.
ONTOLOGY_SPLIT_TYPES = (
    "Movement:Transport", "Personnel:Elect", "Business:Start-Org",
    "Life:Injure", "Transaction:Transfer-Money", "Justice:Arrest-Jail",
    "Contact:Phone-Write", "Conflict:Demonstrate",
)


def _cache_default(name: str) -> str:
    cache = os.environ.get("DOCEVENTS_CACHE", ".docevents")
    return str(Path(cache) / name)


def build_splits(docs, mode: str, top_n: int = 10):
    """Filter training event annotations by split mode; documents are kept
    (only their event lists shrink).  Dev/test splits are never filtered.
    """
    import dataclasses
    from collections import Counter

    if mode == "full":
        return docs
    if mode == "freq":
        counts = Counter(ev.event_type for doc in docs
                         for ev in doc.event_mentions)
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        keep = set(ranked[:top_n])
    elif mode == "ontology_1per":
        keep = set(ONTOLOGY_SPLIT_TYPES)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return [dataclasses.replace(
        doc, event_mentions=[ev for ev in doc.event_mentions
                             if ev.event_type in keep])
        for doc in docs]


# ---------------------------------------------------------------------------
# subcommands

def cmd_convert(args) -> int:
    ontology = load_ontology(args.ontology) if args.ontology else None
    if args.format == "wikievents":
        docs = load_wikievents(args.input, coref_path=args.coref,
                               ontology=ontology)
    elif args.format == "rams":
        docs = load_rams(args.input)
    else:
        docs = load_canonical(args.input)
    dump_canonical(docs, args.output)
    print(f"wrote {len(docs)} documents to {args.output}")
    return 0


def cmd_stats(args) -> int:
    docs = load_canonical(args.input)
    n_events = sum(len(d.event_mentions) for d in docs)
    n_args = sum(len(e.arguments) for d in docs for e in d.event_mentions)
    print(f"documents: {len(docs)}  sentences: "
          f"{sum(len(d.sentence_boundaries) for d in docs)}  "
          f"events: {n_events}  arguments: {n_args}")
    for view in ("nearest", "informative"):
        stats = distance_stats(docs, view=view)
        print(f"{view:>12} view: mean trigger-argument distance "
              f"{stats.mean:.2f} words over {stats.count} arguments")
    print(f"same-sentence informative fraction: "
          f"{stats.same_sentence_informative_fraction:.3f}")
    return 0


def cmd_build_splits(args) -> int:
    docs = load_canonical(args.input)
    out = build_splits(docs, args.mode, top_n=args.top_n)
    dump_canonical(out, args.output)
    kept = sum(len(d.event_mentions) for d in out)
    total = sum(len(d.event_mentions) for d in docs)
    print(f"{args.mode}: kept {kept} of {total} events")
    return 0


def cmd_build_class_vectors(args) -> int:
    out_dir = Path(args.output or _cache_default("class_vectors"))
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = load_canonical(args.input)
    sentences = sentences_of(docs)
    backend = SvdCooccurrenceBackend(sentences, dim=args.dim)
    backend.save(out_dir / "embed_backend.npz")
    if args.keywords:
        keyword_map = tapkey.load_keywords(args.keywords)
    else:
        ontology = load_ontology(args.ontology)
        keyword_map = {name: list(et.keywords)
                       for name, et in sorted(ontology.event_types.items())
                       if et.keywords}
    cvs = []
    for name, kws in keyword_map.items():
        try:
            cvs.append(tapkey.build_class_vector(backend, name, kws,
                                                 sentences, top_k=args.top_k))
        except tapkey.ClassVectorError as exc:
            log.warning("skipping %s: %s", name, exc)
    save_class_vectors(cvs, out_dir / "class_vectors.npz")
    for cv in cvs:
        print(f"{cv.event_type}: {cv.support_count} occurrences retained")
    return 0


def _load_cv_dir(path: str):
    d = Path(path)
    backend = SvdCooccurrenceBackend.load(d / "embed_backend.npz")
    cvs = load_class_vectors(d / "class_vectors.npz")
    return backend, cvs


def cmd_pseudo_label(args) -> int:
    backend, cvs = _load_cv_dir(args.class_vectors)
    docs = load_canonical(args.input)
    with open(args.output, "w", encoding="utf-8") as f:
        for doc in docs:
            sents = [doc.tokens[s:e] for s, e in doc.sentence_boundaries]
            for idx, tags in enumerate(tapkey.pseudo_label(
                    cvs, backend, sents, tau_i=args.tau_i, tau_o=args.tau_o)):
                f.write(json.dumps({"doc_id": doc.doc_id, "sent_idx": idx,
                                    "tags": tags}, sort_keys=True) + "\n")
    print(f"wrote pseudo labels to {args.output}")
    return 0


def cmd_train_trigger(args) -> int:
    backend, cvs = _load_cv_dir(args.class_vectors)
    docs = load_canonical(args.input)
    model = tapkey.TapKeyModel(cvs, dim=backend.dim, lam=args.lam,
                               alpha=args.alpha)
    if args.pseudo:
        by_doc = {doc.doc_id: doc for doc in docs}
        data = []
        with open(args.pseudo, encoding="utf-8") as f:
            for line in f:
                rec = json.loads(line)
                doc = by_doc[rec["doc_id"]]
                s, e = doc.sentence_boundaries[rec["sent_idx"]]
                data.append((backend.token_embeddings(doc.tokens[s:e]),
                             rec["tags"]))
        tapkey.train(model, data, epochs=args.epochs,
                     learning_rate=args.lr, objective="token",
                     seed=args.seed)
    if args.gold:
        types = {cv.event_type for cv in cvs}
        data = pipeline.gold_tag_sequences(docs, backend, types)
        tapkey.train(model, data, epochs=args.epochs, learning_rate=args.lr,
                     objective="crf", seed=args.seed)
    out = args.output or _cache_default("trigger_model")
    model.save(out)
    print(f"saved trigger model to {out}")
    return 0


def cmd_predict_trigger(args) -> int:
    backend, _ = _load_cv_dir(args.class_vectors)
    model = tapkey.TapKeyModel.load(args.model)
    docs = load_canonical(args.input)
    with open(args.output, "w", encoding="utf-8") as f:
        for doc in docs:
            for span, event_type, score in tapkey.predict_triggers(
                    model, backend, doc):
                f.write(json.dumps(
                    {"doc_id": doc.doc_id,
                     "sent_idx": doc.sentence_index(span[0]),
                     "span": list(span), "event_type": event_type,
                     "score": round(score, 6)}, sort_keys=True) + "\n")
    print(f"wrote trigger predictions to {args.output}")
    return 0


def cmd_train_args(args) -> int:
    ontology = load_ontology(args.ontology)
    docs = load_canonical(args.input)
    pairs = training_pairs(docs, ontology, args.view, args.max_input_len)
    vocab = pipeline.generation_vocab(pairs, ontology)
    backend = TinySeq2SeqBackend(vocab, d_model=args.d_model,
                                 num_layers=args.num_layers, seed=args.seed)
    out = args.output or _cache_default("arggen_model")
    generation.train(backend, pairs,
                     TrainConfig(epochs=args.epochs,
                                 batch_size=args.batch_size,
                                 learning_rate=args.lr, seed=args.seed))
    backend.save(out)
    print(f"saved generation backend to {out}")
    return 0


def cmd_extract_args(args) -> int:
    ontology = load_ontology(args.ontology)
    docs = load_canonical(args.input)
    backend = TinySeq2SeqBackend.load(args.model)
    cfg = DecodeConfig(beam_width=args.beam_width,
                       max_output_len=args.max_output_len,
                       rerank=not args.no_rerank,
                       copy_restrict=not args.no_copy_restrict,
                       max_input_len=args.max_input_len)
    if args.triggers:
        trigger_records = [json.loads(line)
                           for line in open(args.triggers, encoding="utf-8")
                           if line.strip()]
    else:  # gold triggers
        trigger_records = [
            {"doc_id": doc.doc_id, "span": list(ev.trigger_span),
             "event_type": ev.event_type, "event_id": ev.event_id}
            for doc in docs for ev in ev_sorted(doc)]
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    preds = pipeline.stage_extract_args(
        _extract_cfg(args, cfg), ontology, backend, docs, trigger_records,
        out.parent, path=out)
    print(f"wrote predictions for {len(preds)} documents to {out}")
    return 0


def ev_sorted(doc):
    return sorted(doc.event_mentions, key=lambda e: e.trigger_span)


def _extract_cfg(args, decode_cfg: DecodeConfig) -> RunConfig:
    # minimal RunConfig wrapper so the stage function can be reused
    cfg = RunConfig(ontology=args.ontology, train_path="", test_path="",
                    output_dir=str(Path(args.output).parent))
    cfg.arggen.beam_width = decode_cfg.beam_width
    cfg.arggen.max_output_len = decode_cfg.max_output_len
    cfg.arggen.rerank = decode_cfg.rerank
    cfg.arggen.copy_restrict = decode_cfg.copy_restrict
    cfg.arggen.max_input_len = decode_cfg.max_input_len
    return cfg


def cmd_score(args) -> int:
    golds = load_canonical(args.gold)
    golds = pipeline.docs_with_view(golds, args.view)
    preds = predictions_from_jsonlines(args.pred)
    reports = []
    if args.settings in ("all", "triggers"):
        reports.extend(score_triggers(preds, golds))
    if args.settings in ("all", "head"):
        reports.append(score_args_head(preds, golds, classification=False))
        reports.append(score_args_head(preds, golds, classification=True))
    if args.settings in ("all", "coref"):
        reports.append(score_args_coref(preds, golds, classification=False))
        reports.append(score_args_coref(preds, golds, classification=True))
    if args.settings in ("all", "informative"):
        reports.append(score_args_informative(preds, golds,
                                              classification=False))
        reports.append(score_args_informative(preds, golds,
                                              classification=True))
    if args.settings == "rams":
        reports.extend(score_rams_span(preds, golds))
    print(format_reports(reports))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            json.dump([r.to_json() for r in reports], f, indent=2,
                      sort_keys=True)
    return 0


def cmd_pipeline(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            cfg = RunConfig.from_json(json.load(f))
    elif args.ontology and args.train and args.test and args.output:
        cfg = RunConfig(ontology=args.ontology, train_path=args.train,
                        test_path=args.test, output_dir=args.output)
    else:
        raise SystemExit("pipeline needs --config or all of "
                         "--ontology/--train/--test/--output")
    # flag overrides on top of the config file
    overrides = {"ontology": args.ontology, "train_path": args.train,
                 "test_path": args.test, "output_dir": args.output,
                 "seed": args.seed, "argument_view": args.view}
    for name, value in overrides.items():
        if value is not None:
            setattr(cfg, name, value)
    if args.gold_triggers:
        cfg.use_gold_triggers = True
    if args.resume:
        cfg.resume = True
    reports = run_pipeline(cfg)
    print(format_reports(reports))
    return 0


def cmd_debug_align(args) -> int:
    ontology = load_ontology(args.ontology)
    docs = load_canonical(args.input)
    doc = next(d for d in docs if d.doc_id == args.doc_id) \
        if args.doc_id else docs[0]
    event = next(e for e in doc.event_mentions
                 if e.event_id == args.event_id) \
        if args.event_id else doc.event_mentions[0]
    event_def = template_for(ontology, event.event_type)
    instance = build_instance(doc, event, event_def)
    generated = args.generated.split()
    print(alignment_trace(instance, generated))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="docevents")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert a corpus to the canonical "
                                       "jsonlines format")
    c.add_argument("--format", choices=["wikievents", "rams", "canonical"],
                   required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--coref")
    c.add_argument("--ontology")
    c.add_argument("--output", required=True)
    c.set_defaults(fn=cmd_convert)

    c = sub.add_parser("stats", help="corpus and distance statistics")
    c.add_argument("--input", required=True)
    c.set_defaults(fn=cmd_stats)

    c = sub.add_parser("build-splits", help="restrict training annotation "
                                            "to a zero-shot split")
    c.add_argument("--input", required=True)
    c.add_argument("--mode", choices=["full", "freq", "ontology_1per"],
                   required=True)
    c.add_argument("--top-n", type=int, default=10)
    c.add_argument("--output", required=True)
    c.set_defaults(fn=cmd_build_splits)

    c = sub.add_parser("build-class-vectors",
                       help="keyword class vectors + embedding backend")
    c.add_argument("--ontology")
    c.add_argument("--keywords", help="event_type: kw1, kw2 per line")
    c.add_argument("--input", required=True)
    c.add_argument("--output")
    c.add_argument("--dim", type=int, default=48)
    c.add_argument("--top-k", type=int, default=50)
    c.set_defaults(fn=cmd_build_class_vectors)

    c = sub.add_parser("pseudo-label", help="cosine pseudo-labels with X "
                                            "for uncertain tokens")
    c.add_argument("--class-vectors", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--tau-i", type=float, default=0.55)
    c.add_argument("--tau-o", type=float, default=0.30)
    c.set_defaults(fn=cmd_pseudo_label)

    c = sub.add_parser("train-trigger", help="train the trigger tagger")
    c.add_argument("--class-vectors", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--pseudo", help="pseudo-label jsonl (token objective)")
    c.add_argument("--gold", action="store_true",
                   help="CRF-train on gold triggers")
    c.add_argument("--output")
    c.add_argument("--lam", type=float, default=0.5)
    c.add_argument("--alpha", type=float, default=0.1)
    c.add_argument("--epochs", type=int, default=40)
    c.add_argument("--lr", type=float, default=0.05)
    c.add_argument("--seed", type=int, default=13)
    c.set_defaults(fn=cmd_train_trigger)

    c = sub.add_parser("predict-trigger", help="Viterbi trigger prediction")
    c.add_argument("--class-vectors", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.set_defaults(fn=cmd_predict_trigger)

    c = sub.add_parser("train-args", help="train the generation backend")
    c.add_argument("--ontology", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--output")
    c.add_argument("--view", choices=["raw", "nearest", "informative"],
                   default="nearest")
    c.add_argument("--d-model", type=int, default=96)
    c.add_argument("--num-layers", type=int, default=2)
    c.add_argument("--epochs", type=int, default=150)
    c.add_argument("--batch-size", type=int, default=8)
    c.add_argument("--lr", type=float, default=1e-3)
    c.add_argument("--max-input-len", type=int)
    c.add_argument("--seed", type=int, default=13)
    c.set_defaults(fn=cmd_train_args)

    c = sub.add_parser("extract-args", help="extract arguments per trigger")
    c.add_argument("--ontology", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--triggers", help="trigger jsonl; omit to use gold")
    c.add_argument("--output", required=True)
    c.add_argument("--beam-width", type=int, default=4)
    c.add_argument("--max-output-len", type=int, default=48)
    c.add_argument("--max-input-len", type=int)
    c.add_argument("--no-rerank", action="store_true")
    c.add_argument("--no-copy-restrict", action="store_true")
    c.set_defaults(fn=cmd_extract_args)

    c = sub.add_parser("score", help="score predictions against gold")
    c.add_argument("--gold", required=True)
    c.add_argument("--pred", required=True)
    c.add_argument("--view", choices=["raw", "nearest", "informative"],
                   default="raw")
    c.add_argument("--settings",
                   choices=["all", "triggers", "head", "coref",
                            "informative", "rams"], default="all")
    c.add_argument("--output")
    c.set_defaults(fn=cmd_score)

    c = sub.add_parser("pipeline", help="run all stages end to end")
    c.add_argument("--config")
    c.add_argument("--ontology")
    c.add_argument("--train")
    c.add_argument("--test")
    c.add_argument("--output")
    c.add_argument("--seed", type=int)
    c.add_argument("--view", choices=["raw", "nearest", "informative"])
    c.add_argument("--gold-triggers", action="store_true")
    c.add_argument("--resume", action="store_true")
    c.set_defaults(fn=cmd_pipeline)

    c = sub.add_parser("debug-align", help="print the template alignment "
                                           "trace for a generated string")
    c.add_argument("--ontology", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--doc-id")
    c.add_argument("--event-id")
    c.add_argument("--generated", required=True)
    c.set_defaults(fn=cmd_debug_align)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
