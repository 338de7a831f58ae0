#!/usr/bin/env python3
"""Run the full pipeline end to end on the bundled synthetic corpus.

Builds a train/test corpus, writes the ontology, then runs
pseudo-label -> train trigger tagger -> predict triggers -> train
generator -> extract arguments -> score, leaving all stage artifacts
under the output directory.
"""

import argparse
import logging
from pathlib import Path

from docevents.corpus import dump_canonical
from docevents.metrics import format_reports
from docevents.pipeline import (ArgGenConfig, RunConfig, TapKeyConfig,
                                run_pipeline)
from docevents.toy import TOY_ONTOLOGY_YAML, build_toy_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/toy_pipeline")
    parser.add_argument("--train-docs", type=int, default=30)
    parser.add_argument("--test-docs", type=int, default=8)
    parser.add_argument("--shapes", nargs="*",
                        default=["attack", "statement", "personnel"])
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument("--gold-triggers", action="store_true")
    parser.add_argument("--gen-epochs", type=int, default=150)
    parser.add_argument("--trigger-epochs", type=int, default=40)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ontology.yaml").write_text(TOY_ONTOLOGY_YAML)
    dump_canonical(build_toy_corpus(args.train_docs, seed=args.seed,
                                    shapes=args.shapes),
                   out / "train.jsonl")
    dump_canonical(build_toy_corpus(args.test_docs, seed=args.seed + 1,
                                    shapes=args.shapes),
                   out / "test.jsonl")

    cfg = RunConfig(
        ontology=str(out / "ontology.yaml"),
        train_path=str(out / "train.jsonl"),
        test_path=str(out / "test.jsonl"),
        output_dir=str(out / "run"),
        seed=args.seed,
        use_gold_triggers=args.gold_triggers,
        tapkey=TapKeyConfig(epochs=args.trigger_epochs),
        arggen=ArgGenConfig(epochs=args.gen_epochs),
    )
    reports = run_pipeline(cfg)
    print()
    print(format_reports(reports))
    print(f"\nartifacts under {out / 'run'}")


if __name__ == "__main__":
    main()
