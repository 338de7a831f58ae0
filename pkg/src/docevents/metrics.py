"""Precision/recall/F1 scoring for trigger and argument extraction.

Argument credit comes in four settings:

* head: predicted head offsets equal the gold argument's head offsets
  (the head of a span without an annotated head is its last token),
* coref: the predicted span equals any mention span in the gold
  argument's coreference cluster,
* informative: the predicted span equals the span of the cluster's most
  informative mention,
* span (RAMS): exact span offsets.

Identification ignores the role; classification requires it.  Each gold
argument can be matched by at most one prediction.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Document, EventMention, Span, informative_mention

EventRef = str | tuple[Span, str]


@dataclass(frozen=True)
class ArgPrediction:
    event_ref: EventRef  # gold event id, or (trigger span, event type)
    role: str
    span: Span
    text: str = ""


@dataclass
class Prediction:
    doc_id: str
    triggers: list[tuple[Span, str]] = field(default_factory=list)
    arguments: list[ArgPrediction] = field(default_factory=list)


@dataclass
class ScoreReport:
    setting: str
    precision: float
    recall: float
    f1: float
    num_pred: int
    num_gold: int
    num_correct: int

    @classmethod
    def from_counts(cls, setting: str, num_pred: int, num_gold: int,
                    num_correct: int) -> "ScoreReport":
        p = num_correct / num_pred if num_pred else 0.0
        r = num_correct / num_gold if num_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(setting=setting, precision=p, recall=r, f1=f1,
                   num_pred=num_pred, num_gold=num_gold,
                   num_correct=num_correct)

    def to_json(self) -> dict:
        return {"setting": self.setting, "precision": self.precision,
                "recall": self.recall, "f1": self.f1,
                "num_pred": self.num_pred, "num_gold": self.num_gold,
                "num_correct": self.num_correct}


def format_reports(reports: list[ScoreReport]) -> str:
    width = max((len(r.setting) for r in reports), default=10)
    lines = [f"{'setting':<{width}}      P      R     F1   pred   gold  corr"]
    for r in reports:
        lines.append(f"{r.setting:<{width}} {r.precision:6.4f} {r.recall:6.4f} "
                     f"{r.f1:6.4f} {r.num_pred:6d} {r.num_gold:6d} "
                     f"{r.num_correct:5d}")
    return "\n".join(lines)


def _index_docs(golds: list[Document]) -> dict[str, Document]:
    return {d.doc_id: d for d in golds}


def _check_doc_ids(preds: list[Prediction], by_id: dict[str, Document]) -> None:
    for p in preds:
        if p.doc_id not in by_id:
            raise ValueError(f"prediction for unknown doc_id {p.doc_id!r}")


def _resolve_event(doc: Document, ref: EventRef) -> EventMention | None:
    if isinstance(ref, str):
        for ev in doc.event_mentions:
            if ev.event_id == ref:
                return ev
        return None
    span, event_type = ref
    for ev in doc.event_mentions:
        if ev.trigger_span == tuple(span) and ev.event_type == event_type:
            return ev
    return None


def _multiset_counts(pred_keys: list, gold_keys: list) -> tuple[int, int, int]:
    pred_counter, gold_counter = Counter(pred_keys), Counter(gold_keys)
    correct = sum(min(c, gold_counter[k]) for k, c in pred_counter.items())
    return len(pred_keys), len(gold_keys), correct


# ---------------------------------------------------------------------------
# triggers

def score_triggers(preds: list[Prediction], golds: list[Document]
                   ) -> tuple[ScoreReport, ScoreReport]:
    """Trigger identification (offsets) and classification (offsets +
    type); each gold trigger is matched at most once."""
    by_id = _index_docs(golds)
    _check_doc_ids(preds, by_id)
    pred_ti, pred_tc, gold_ti, gold_tc = [], [], [], []
    for p in preds:
        for span, event_type in p.triggers:
            pred_ti.append((p.doc_id, tuple(span)))
            pred_tc.append((p.doc_id, tuple(span), event_type))
    for doc in golds:
        for ev in doc.event_mentions:
            gold_ti.append((doc.doc_id, ev.trigger_span))
            gold_tc.append((doc.doc_id, ev.trigger_span, ev.event_type))
    ti = ScoreReport.from_counts("trigger-id", *_multiset_counts(pred_ti, gold_ti))
    tc = ScoreReport.from_counts("trigger-cls", *_multiset_counts(pred_tc, gold_tc))
    return ti, tc


# ---------------------------------------------------------------------------
# arguments

def _head_token(span: Span, head_span: Span | None = None) -> int:
    """Head token index: last token of the annotated head, else last token
    of the span."""
    return (head_span or span)[1] - 1


def _gold_event_key(doc: Document, ev: EventMention) -> tuple:
    return (doc.doc_id, ev.event_id)


def _pred_event_key(doc: Document, ref: EventRef) -> tuple:
    ev = _resolve_event(doc, ref)
    if ev is None:
        return (doc.doc_id, ("<unmatched>", ref if isinstance(ref, str)
                             else (tuple(ref[0]), ref[1])))
    return _gold_event_key(doc, ev)


def score_args_head(preds: list[Prediction], golds: list[Document],
                    classification: bool = True,
                    setting: str | None = None) -> ScoreReport:
    """Head-offset argument matching (Head F1)."""
    by_id = _index_docs(golds)
    _check_doc_ids(preds, by_id)
    pred_keys, gold_keys = [], []
    for p in preds:
        doc = by_id[p.doc_id]
        for a in p.arguments:
            key = (_pred_event_key(doc, a.event_ref), _head_token(a.span))
            pred_keys.append(key + ((a.role,) if classification else ()))
    for doc in golds:
        for ev in doc.event_mentions:
            for role, mid in ev.arguments:
                m = doc.mentions_by_id[mid]
                key = (_gold_event_key(doc, ev),
                       _head_token(m.span, m.head_span))
                gold_keys.append(key + ((role,) if classification else ()))
    name = setting or ("arg-cls-head" if classification else "arg-id-head")
    return ScoreReport.from_counts(name, *_multiset_counts(pred_keys, gold_keys))


def score_args_coref(preds: list[Prediction], golds: list[Document],
                     classification: bool = True,
                     setting: str | None = None) -> ScoreReport:
    """Coreferential argument matching (Coref F1): full credit when the
    predicted span equals any mention span of the gold argument's
    cluster.  One-to-one greedy matching in document order."""
    by_id = _index_docs(golds)
    _check_doc_ids(preds, by_id)
    num_pred = num_gold = num_correct = 0

    gold_by_doc: dict[str, list] = {}
    for doc in golds:
        entries = []
        for ev in doc.event_mentions:
            for role, mid in ev.arguments:
                m = doc.mentions_by_id[mid]
                cluster = doc.cluster_by_mention.get(mid)
                if cluster is None:
                    acceptable = {m.span}
                else:
                    acceptable = {doc.mentions_by_id[x].span
                                  for x in cluster.mention_ids}
                entries.append({"event": _gold_event_key(doc, ev),
                                "role": role, "spans": acceptable,
                                "matched": False})
        gold_by_doc[doc.doc_id] = entries
        num_gold += len(entries)

    for p in preds:
        doc = by_id[p.doc_id]
        entries = gold_by_doc[doc.doc_id]
        for a in p.arguments:
            num_pred += 1
            key = _pred_event_key(doc, a.event_ref)
            for entry in entries:
                if entry["matched"] or entry["event"] != key:
                    continue
                if classification and entry["role"] != a.role:
                    continue
                if tuple(a.span) in entry["spans"]:
                    entry["matched"] = True
                    num_correct += 1
                    break
    name = setting or ("arg-cls-coref" if classification else "arg-id-coref")
    return ScoreReport.from_counts(name, num_pred, num_gold, num_correct)


def score_args_informative(preds: list[Prediction], golds: list[Document],
                           classification: bool = True,
                           use_head: bool = False,
                           setting: str | None = None) -> ScoreReport:
    """Credit only when the prediction is the most informative mention of
    the gold argument's cluster (resolved with
    :func:`corpus.informative_mention`)."""
    by_id = _index_docs(golds)
    _check_doc_ids(preds, by_id)
    pred_keys, gold_keys = [], []
    for p in preds:
        doc = by_id[p.doc_id]
        for a in p.arguments:
            anchor = _head_token(a.span) if use_head else tuple(a.span)
            key = (_pred_event_key(doc, a.event_ref), anchor)
            pred_keys.append(key + ((a.role,) if classification else ()))
    for doc in golds:
        for ev in doc.event_mentions:
            for role, mid in ev.arguments:
                m = doc.mentions_by_id[mid]
                cluster = doc.cluster_by_mention.get(mid)
                target = m if cluster is None else informative_mention(
                    cluster, doc.mentions_by_id)
                anchor = (_head_token(target.span, target.head_span)
                          if use_head else target.span)
                key = (_gold_event_key(doc, ev), anchor)
                gold_keys.append(key + ((role,) if classification else ()))
    name = setting or ("arg-cls-informative" if classification
                       else "arg-id-informative")
    return ScoreReport.from_counts(name, *_multiset_counts(pred_keys, gold_keys))


def score_rams_span(preds: list[Prediction], golds: list[Document]
                    ) -> tuple[ScoreReport, ScoreReport]:
    """RAMS-style scoring: Span F1 (exact offsets + role) and Head F1
    (head token + role); the head of a span without an annotated head is
    its last token."""
    by_id = _index_docs(golds)
    _check_doc_ids(preds, by_id)
    pred_span, pred_head, gold_span, gold_head = [], [], [], []
    for p in preds:
        doc = by_id[p.doc_id]
        for a in p.arguments:
            key = (_pred_event_key(doc, a.event_ref), a.role)
            pred_span.append(key + (tuple(a.span),))
            pred_head.append(key + (_head_token(a.span),))
    for doc in golds:
        for ev in doc.event_mentions:
            for role, mid in ev.arguments:
                m = doc.mentions_by_id[mid]
                key = (_gold_event_key(doc, ev), role)
                gold_span.append(key + (m.span,))
                gold_head.append(key + (_head_token(m.span, m.head_span),))
    span = ScoreReport.from_counts("arg-span",
                                   *_multiset_counts(pred_span, gold_span))
    head = ScoreReport.from_counts("arg-head",
                                   *_multiset_counts(pred_head, gold_head))
    return span, head


# ---------------------------------------------------------------------------
# prediction jsonlines

def _arg_to_json(a: ArgPrediction) -> dict:
    rec = {"role": a.role, "span": list(a.span), "text": a.text}
    if isinstance(a.event_ref, str):
        rec["event_id"] = a.event_ref
    else:
        rec["trigger"] = [list(a.event_ref[0]), a.event_ref[1]]
    return rec


def predictions_to_jsonlines(preds: list[Prediction], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in sorted(preds, key=lambda x: x.doc_id):
            rec = {
                "doc_id": p.doc_id,
                "triggers": [[list(s), t] for s, t in p.triggers],
                "arguments": [_arg_to_json(a) for a in p.arguments],
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def predictions_from_jsonlines(path) -> list[Prediction]:
    preds = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            args = []
            for a in rec.get("arguments", []):
                if "event_id" in a:
                    ref = a["event_id"]
                else:
                    trigger = a["trigger"]
                    ref = (tuple(trigger[0]), trigger[1])
                args.append(ArgPrediction(event_ref=ref, role=a["role"],
                                          span=tuple(a["span"]),
                                          text=a.get("text", "")))
            preds.append(Prediction(
                doc_id=rec["doc_id"],
                triggers=[(tuple(s), t) for s, t in rec.get("triggers", [])],
                arguments=args))
    return preds
