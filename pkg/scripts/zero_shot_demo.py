#!/usr/bin/env python3
"""Zero-shot trigger transfer on the synthetic corpus.

Trains the tagger with mention-level supervision for a subset of event
types, then adds the held-out types from their ontology keywords alone
and evaluates trigger identification/classification over all types.
"""

import argparse
import logging

from docevents.embeddings import SvdCooccurrenceBackend
from docevents.metrics import Prediction, format_reports, score_triggers
from docevents.pipeline import gold_tag_sequences, sentences_of
from docevents.tapkey import (TapKeyModel, build_class_vector, train,
                              predict_triggers)
from docevents.toy import build_toy_corpus, toy_ontology

SEEN_SHAPES = ["attack", "statement", "personnel"]
ALL_SHAPES = SEEN_SHAPES + ["justice"]


def class_vectors_for(ontology, backend, sentences, types):
    out = []
    for name in sorted(types):
        keywords = list(ontology.event_types[name].keywords)
        out.append(build_class_vector(backend, name, keywords, sentences))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train-docs", type=int, default=40)
    parser.add_argument("--test-docs", type=int, default=12)
    parser.add_argument("--epochs", type=int, default=80)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    ontology = toy_ontology()
    train_docs = build_toy_corpus(args.train_docs, seed=args.seed,
                                  shapes=SEEN_SHAPES)
    test_docs = build_toy_corpus(args.test_docs, seed=args.seed + 1,
                                 shapes=ALL_SHAPES)
    seen_types = {e.event_type for d in train_docs for e in d.event_mentions}
    all_types = {e.event_type for d in test_docs for e in d.event_mentions}
    unseen = sorted(all_types - seen_types)
    print(f"seen types: {sorted(seen_types)}")
    print(f"unseen types (keywords only): {unseen}")

    sentences = sentences_of(train_docs) + sentences_of(test_docs)
    backend = SvdCooccurrenceBackend(sentences, dim=args.dim)

    cvs = class_vectors_for(ontology, backend, sentences, seen_types)
    model = TapKeyModel(cvs, dim=args.dim)
    data = gold_tag_sequences(train_docs, backend, seen_types)
    train(model, data, epochs=args.epochs, seed=args.seed)

    for cv in class_vectors_for(ontology, backend, sentences, unseen):
        model.add_class(cv)
    model.recompute_projection()

    preds = []
    unseen_hits = 0
    for doc in test_docs:
        triggers = [(span, etype) for span, etype, _ in
                    predict_triggers(model, backend, doc)]
        preds.append(Prediction(doc_id=doc.doc_id, triggers=triggers))
        gold_unseen = {(e.trigger_span, e.event_type)
                       for e in doc.event_mentions
                       if e.event_type in unseen}
        unseen_hits += len(gold_unseen & set(triggers))
    ti, tc = score_triggers(preds, test_docs)
    print()
    print(format_reports([ti, tc]))
    total_unseen = sum(1 for d in test_docs for e in d.event_mentions
                       if e.event_type in unseen)
    print(f"\nunseen-type triggers recalled: {unseen_hits}/{total_unseen}")


if __name__ == "__main__":
    main()
