#!/usr/bin/env python3
"""Memorization check for the generation backend.

Trains the bundled encoder-decoder on a handful of instances and then
regenerates each target with greedy copy-restricted decoding; with enough
epochs every target should come back exactly.
"""

import argparse
import time

from docevents.backends import TinySeq2SeqBackend, TrainConfig
from docevents.generation import DecodeConfig, decode, train
from docevents.ontology import template_for
from docevents.pipeline import generation_vocab, training_pairs
from docevents.templates import build_instance
from docevents.toy import build_toy_corpus, toy_ontology


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--instances", type=int, default=20)
    parser.add_argument("--epochs", type=int, default=150)
    parser.add_argument("--d-model", type=int, default=128)
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    ontology = toy_ontology()
    docs = build_toy_corpus(n_docs=args.instances, seed=21)
    events = [(doc, ev) for doc in docs
              for ev in doc.event_mentions][:args.instances]
    pairs = training_pairs(docs, ontology, "nearest")[:args.instances]
    vocab = generation_vocab(pairs, ontology)
    backend = TinySeq2SeqBackend(vocab, d_model=args.d_model,
                                 seed=args.seed)

    started = time.time()
    history = []
    train(backend, pairs,
          TrainConfig(epochs=args.epochs, batch_size=4, learning_rate=1e-3,
                      seed=args.seed))
    print(f"trained {len(pairs)} instances in {time.time() - started:.0f}s")

    config = DecodeConfig(beam_width=1, max_output_len=64, rerank=False)
    exact = 0
    for (doc, ev), (_, target) in zip(events, pairs):
        inst = build_instance(doc, ev, template_for(ontology, ev.event_type))
        best = decode(backend, inst, config)[0]
        match = best.tokens == target
        exact += match
        if not match:
            print(f"miss {ev.event_id}:")
            print("  want:", " ".join(target))
            print("  got: ", " ".join(best.tokens))
    print(f"exact regeneration: {exact}/{len(pairs)}")


if __name__ == "__main__":
    main()
