"""End-to-end run orchestration.

Every stage reads and writes files under the run directory, so stages are
individually resumable and the trigger and argument components stay
swappable: any trigger extractor that can write the stage file format can
feed the argument stage.

Stage files (all jsonlines unless noted):

* ``config.json``          full serialized RunConfig (reproducibility)
* ``class_vectors/``       tapkey class-vector cache + embedding backend
* ``pseudo_labels.jsonl``  {doc_id, sent_idx, tags}
* ``trigger_model/``       tapkey checkpoint
* ``triggers.jsonl``       {doc_id, sent_idx, span, event_type, score}
* ``arggen_model/``        generation backend checkpoint
* ``predictions.jsonl``    prediction format of :mod:`docevents.metrics`
* ``reports.json/.txt``    final scores
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generation, metrics, tapkey
from .backends import TinySeq2SeqBackend, TrainConfig, Vocab
from .corpus import Document, EventMention, argument_view, load_canonical
from .embeddings import SvdCooccurrenceBackend
from .generation import DecodeConfig
from .ontology import EventOntology, load_ontology
from .templates import build_input, build_instance, fill_gold
from .tapkey import (ClassVector, ClassVectorError, TapKeyModel,
                     build_class_vector)

log = logging.getLogger(__name__)


class PipelineStageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class TapKeyConfig:
    lam: float = 0.5
    alpha: float = 0.1
    tau_i: float = 0.55
    tau_o: float = 0.30
    epochs: int = 40
    learning_rate: float = 0.05
    embed_dim: int = 48
    top_k: int = 50
    batch_size: int = 16
    use_pseudo: bool = True
    use_gold: bool = True


@dataclass
class ArgGenConfig:
    d_model: int = 96
    nhead: int = 4
    num_layers: int = 2
    dim_ff: int = 192
    epochs: int = 150
    batch_size: int = 8
    learning_rate: float = 1e-3
    beam_width: int = 4
    max_output_len: int = 48
    rerank: bool = True
    copy_restrict: bool = True
    max_input_len: int | None = None


@dataclass
class RunConfig:
    ontology: str
    train_path: str
    test_path: str
    output_dir: str
    dev_path: str | None = None
    seed: int = 13
    argument_view: str = "nearest"  # nearest | informative | raw
    use_gold_triggers: bool = False
    resume: bool = False
    tapkey: TapKeyConfig = field(default_factory=TapKeyConfig)
    arggen: ArgGenConfig = field(default_factory=ArgGenConfig)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if isinstance(data.get("tapkey"), dict):
            data["tapkey"] = TapKeyConfig(**data["tapkey"])
        if isinstance(data.get("arggen"), dict):
            data["arggen"] = ArgGenConfig(**data["arggen"])
        return cls(**data)


# ---------------------------------------------------------------------------
# helpers

def sentences_of(docs: list[Document]) -> list[list[str]]:
    return [doc.tokens[s:e] for doc in docs
            for s, e in doc.sentence_boundaries]


def gold_tag_sequences(docs: list[Document], backend,
                       types: set[str]) -> list[tuple[np.ndarray, list[str]]]:
    """Per-sentence (embeddings, IO tags) pairs from gold triggers of the
    given event types."""
    out = []
    for doc in docs:
        for s, e in doc.sentence_boundaries:
            tags = [tapkey.O_TAG] * (e - s)
            for ev in doc.event_mentions:
                if ev.event_type not in types:
                    continue
                ts, te = ev.trigger_span
                if s <= ts and te <= e:
                    for i in range(ts, te):
                        tags[i - s] = tapkey.itag(ev.event_type)
            H = backend.token_embeddings(doc.tokens[s:e])
            out.append((H, tags))
    return out


def training_pairs(docs: list[Document], ontology: EventOntology,
                   view: str, max_input_len: int | None = None
                   ) -> list[tuple[list[str], list[str]]]:
    """(encoder input, gold filled template) pairs for generation training."""
    pairs = []
    for doc in docs:
        for ev in doc.event_mentions:
            if ev.event_type not in ontology.event_types:
                log.warning("%s: skipping %s with unknown type %s",
                            doc.doc_id, ev.event_id, ev.event_type)
                continue
            event_def = ontology.event_types[ev.event_type]
            instance = build_instance(doc, ev, event_def)
            pairs.append((build_input(instance, max_input_len),
                          fill_gold(instance, doc, ev, view=view)))
    return pairs


def generation_vocab(pairs, ontology: EventOntology) -> Vocab:
    vocab = Vocab.build([tokens for pair in pairs for tokens in pair])
    # clarification statements must be scorable
    for word in ("is", "a", "."):
        vocab.add(word)
    for t in ontology.entity_types.values():
        vocab.add(t.statement_phrase)
    return vocab


def docs_with_view(docs: list[Document], view: str) -> list[Document]:
    if view == "raw":
        return docs
    return [dataclasses.replace(
        doc, event_mentions=[argument_view(doc, ev, view)
                             for ev in doc.event_mentions])
        for doc in docs]


# ---------------------------------------------------------------------------
# stages

def _stage(name: str):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except Exception as exc:  # keep partial artifacts, name the stage
                raise PipelineStageError(name, exc) from exc
        return inner
    return wrap


@_stage("class-vectors")
def stage_class_vectors(cfg: RunConfig, ontology: EventOntology,
                        embed_backend, docs: list[Document],
                        out_dir: Path) -> list[ClassVector]:
    path = out_dir / "class_vectors" / "class_vectors.npz"
    if cfg.resume and path.exists():
        return load_class_vectors(path)
    sentences = sentences_of(docs)
    cvs = []
    for name, et in sorted(ontology.event_types.items()):
        if not et.keywords:
            log.warning("%s has no keywords; skipped for trigger tagging",
                        name)
            continue
        try:
            cvs.append(build_class_vector(embed_backend, name,
                                          list(et.keywords), sentences,
                                          top_k=cfg.tapkey.top_k))
        except ClassVectorError as exc:
            log.warning("skipping %s: %s", name, exc)
    if not cvs:
        raise ClassVectorError("no class vectors could be built: no event "
                               "type has keywords occurring in the corpus")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_class_vectors(cvs, path)
    return cvs


def save_class_vectors(cvs: list[ClassVector], path) -> None:
    np.savez(path, vectors=np.stack([cv.vector for cv in cvs]),
             names=np.array([cv.event_type for cv in cvs]),
             support=np.array([cv.support_count for cv in cvs]))


def load_class_vectors(path) -> list[ClassVector]:
    data = np.load(path, allow_pickle=False)
    return [ClassVector(event_type=str(n), vector=v, support_count=int(s))
            for n, v, s in zip(data["names"], data["vectors"],
                               data["support"])]


@_stage("pseudo-label")
def stage_pseudo_label(cfg: RunConfig, cvs, embed_backend,
                       docs: list[Document], out_dir: Path) -> list[dict]:
    path = out_dir / "pseudo_labels.jsonl"
    if cfg.resume and path.exists():
        return [json.loads(line) for line in path.read_text().splitlines()]
    records = []
    for doc in docs:
        sents = [doc.tokens[s:e] for s, e in doc.sentence_boundaries]
        tag_seqs = tapkey.pseudo_label(cvs, embed_backend, sents,
                                       tau_i=cfg.tapkey.tau_i,
                                       tau_o=cfg.tapkey.tau_o)
        for idx, tags in enumerate(tag_seqs):
            records.append({"doc_id": doc.doc_id, "sent_idx": idx,
                            "tags": tags})
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


@_stage("train-trigger")
def stage_train_trigger(cfg: RunConfig, cvs, embed_backend,
                        docs: list[Document], pseudo_records: list[dict],
                        out_dir: Path) -> TapKeyModel:
    model_dir = out_dir / "trigger_model"
    if cfg.resume and (model_dir / "model.json").exists():
        return TapKeyModel.load(str(model_dir))
    model = TapKeyModel(cvs, dim=cfg.tapkey.embed_dim, lam=cfg.tapkey.lam,
                        alpha=cfg.tapkey.alpha)
    by_doc = {doc.doc_id: doc for doc in docs}
    if cfg.tapkey.use_pseudo and pseudo_records:
        data = []
        for rec in pseudo_records:
            doc = by_doc[rec["doc_id"]]
            s, e = doc.sentence_boundaries[rec["sent_idx"]]
            H = embed_backend.token_embeddings(doc.tokens[s:e])
            data.append((H, rec["tags"]))
        tapkey.train(model, data, epochs=cfg.tapkey.epochs,
                     learning_rate=cfg.tapkey.learning_rate,
                     objective="token", batch_size=cfg.tapkey.batch_size,
                     seed=cfg.seed)
    if cfg.tapkey.use_gold:
        types = {cv.event_type for cv in cvs}
        data = gold_tag_sequences(docs, embed_backend, types)
        tapkey.train(model, data, epochs=cfg.tapkey.epochs,
                     learning_rate=cfg.tapkey.learning_rate,
                     objective="crf", batch_size=cfg.tapkey.batch_size,
                     seed=cfg.seed)
    model.save(str(model_dir))
    return model


@_stage("predict-trigger")
def stage_predict_triggers(cfg: RunConfig, model: TapKeyModel | None,
                           embed_backend, test_docs: list[Document],
                           out_dir: Path) -> list[dict]:
    path = out_dir / "triggers.jsonl"
    if cfg.resume and path.exists():
        return [json.loads(line) for line in path.read_text().splitlines()]
    records = []
    if cfg.use_gold_triggers:
        for doc in test_docs:
            for ev in doc.event_mentions:
                records.append({"doc_id": doc.doc_id,
                                "sent_idx": doc.sentence_index(
                                    ev.trigger_span[0]),
                                "span": list(ev.trigger_span),
                                "event_type": ev.event_type, "score": 1.0,
                                "event_id": ev.event_id})
    else:
        for doc in test_docs:
            for span, event_type, score in tapkey.predict_triggers(
                    model, embed_backend, doc):
                records.append({"doc_id": doc.doc_id,
                                "sent_idx": doc.sentence_index(span[0]),
                                "span": list(span),
                                "event_type": event_type,
                                "score": round(score, 6)})
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


@_stage("train-args")
def stage_train_args(cfg: RunConfig, ontology: EventOntology,
                     train_docs: list[Document], out_dir: Path):
    model_dir = out_dir / "arggen_model"
    if cfg.resume and (model_dir / "backend.json").exists():
        return TinySeq2SeqBackend.load(str(model_dir))
    pairs = training_pairs(train_docs, ontology, cfg.argument_view,
                           cfg.arggen.max_input_len)
    vocab = generation_vocab(pairs, ontology)
    a = cfg.arggen
    backend = TinySeq2SeqBackend(vocab, d_model=a.d_model, nhead=a.nhead,
                                 num_layers=a.num_layers, dim_ff=a.dim_ff,
                                 seed=cfg.seed)
    generation.train(backend, pairs,
                     TrainConfig(epochs=a.epochs, batch_size=a.batch_size,
                                 learning_rate=a.learning_rate,
                                 seed=cfg.seed))
    backend.save(str(model_dir))
    return backend


@_stage("extract-args")
def stage_extract_args(cfg: RunConfig, ontology: EventOntology, gen_backend,
                       test_docs: list[Document], trigger_records: list[dict],
                       out_dir: Path,
                       path: Path | None = None) -> list[metrics.Prediction]:
    path = path or out_dir / "predictions.jsonl"
    if cfg.resume and path.exists():
        return metrics.predictions_from_jsonlines(path)
    a = cfg.arggen
    decode_cfg = DecodeConfig(beam_width=a.beam_width,
                              max_output_len=a.max_output_len,
                              rerank=a.rerank, copy_restrict=a.copy_restrict,
                              max_input_len=a.max_input_len)
    by_doc: dict[str, metrics.Prediction] = {
        doc.doc_id: metrics.Prediction(doc_id=doc.doc_id) for doc in test_docs}
    doc_map = {doc.doc_id: doc for doc in test_docs}
    for i, rec in enumerate(trigger_records):
        doc = doc_map[rec["doc_id"]]
        span = (rec["span"][0], rec["span"][1])
        event_type = rec["event_type"]
        pred = by_doc[doc.doc_id]
        pred.triggers.append((span, event_type))
        if event_type not in ontology.event_types:
            log.warning("%s: no template for predicted type %s",
                        doc.doc_id, event_type)
            continue
        ref = rec.get("event_id") or (span, event_type)
        event = EventMention(event_id=rec.get("event_id") or f"pred-{i}",
                             event_type=event_type, trigger_span=span,
                             arguments=())
        result = generation.extract_arguments(gen_backend, doc, event,
                                              ontology, decode_cfg)
        for arg in result.arguments:
            pred.arguments.append(metrics.ArgPrediction(
                event_ref=ref, role=arg.role, span=arg.span, text=arg.text))
    preds = [by_doc[doc.doc_id] for doc in test_docs]
    metrics.predictions_to_jsonlines(preds, path)
    return preds


@_stage("score")
def stage_score(cfg: RunConfig, preds: list[metrics.Prediction],
                test_docs: list[Document],
                out_dir: Path) -> list[metrics.ScoreReport]:
    gold = docs_with_view(test_docs, cfg.argument_view)
    ti, tc = metrics.score_triggers(preds, gold)
    ai = metrics.score_args_head(preds, gold, classification=False)
    ac = metrics.score_args_head(preds, gold, classification=True)
    reports = [ti, tc, ai, ac]
    with open(out_dir / "reports.json", "w", encoding="utf-8") as f:
        json.dump([r.to_json() for r in reports], f, indent=2, sort_keys=True)
    (out_dir / "reports.txt").write_text(metrics.format_reports(reports)
                                         + "\n", encoding="utf-8")
    return reports


def run_pipeline(cfg: RunConfig) -> list[metrics.ScoreReport]:
    """pseudo-label -> train tapkey -> predict triggers -> train/extract
    arguments -> score.  All intermediate artifacts are persisted under
    the output directory; a failed stage raises PipelineStageError and
    keeps what earlier stages wrote."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w", encoding="utf-8") as f:
        json.dump(cfg.to_json(), f, indent=2, sort_keys=True)

    ontology = load_ontology(cfg.ontology)
    train_docs = load_canonical(cfg.train_path)
    test_docs = load_canonical(cfg.test_path)

    # unsupervised over raw text, so all splits may contribute
    embed_backend = SvdCooccurrenceBackend(
        sentences_of(train_docs) + sentences_of(test_docs),
        dim=cfg.tapkey.embed_dim)

    trigger_model = None
    if cfg.use_gold_triggers:
        trigger_records = stage_predict_triggers(cfg, None, embed_backend,
                                                 test_docs, out_dir)
    else:
        cvs = stage_class_vectors(cfg, ontology, embed_backend, train_docs,
                                  out_dir)
        pseudo = stage_pseudo_label(cfg, cvs, embed_backend, train_docs,
                                    out_dir)
        trigger_model = stage_train_trigger(cfg, cvs, embed_backend,
                                            train_docs, pseudo, out_dir)
        trigger_records = stage_predict_triggers(cfg, trigger_model,
                                                 embed_backend, test_docs,
                                                 out_dir)

    gen_backend = stage_train_args(cfg, ontology, train_docs, out_dir)
    preds = stage_extract_args(cfg, ontology, gen_backend, test_docs,
                               trigger_records, out_dir)
    return stage_score(cfg, preds, test_docs, out_dir)
