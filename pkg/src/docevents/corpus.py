"""Document object model, corpus loaders and corpus statistics.

Spans are ``(start, end)`` token offsets with exclusive ``end``.  Documents
are treated as immutable after load; the view operations below return new
objects instead of mutating.

Three input formats are supported:

* WikiEvents-style jsonlines: one document per line plus a separate
  coreference jsonlines file (``load_wikievents``),
* RAMS v1.0 jsonlines: one 5-sentence example per line (``load_rams``),
* the canonical dump format written by :func:`dump_canonical`, which is
  the schema used between pipeline stages (documented in the README).
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property

log = logging.getLogger(__name__)

Span = tuple[int, int]

# Mention levels, most informative first.
NAME = "NAME"
NOMINAL = "NOMINAL"
PRONOUN = "PRONOUN"
LEVEL_RANK = {NAME: 2, NOMINAL: 1, PRONOUN: 0}

_LEVEL_ALIASES = {
    "NAM": NAME, "NAME": NAME,
    "NOM": NOMINAL, "NOMINAL": NOMINAL,
    "PRO": PRONOUN, "PRON": PRONOUN, "PRONOUN": PRONOUN,
}


class CorpusLoadError(Exception):
    pass


@dataclass(frozen=True)
class EntityMention:
    mention_id: str
    span: Span
    head_span: Span
    mention_level: str
    entity_type: str
    text: str

    @property
    def start(self) -> int:
        return self.span[0]

    @property
    def end(self) -> int:
        return self.span[1]


@dataclass(frozen=True)
class EventMention:
    event_id: str
    event_type: str
    trigger_span: Span
    # (role name, mention id) pairs; role strings are kept verbatim even
    # when they are unknown to the ontology.
    arguments: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class CorefCluster:
    cluster_id: str
    mention_ids: frozenset[str]
    informative_mention_id: str


@dataclass
class Document:
    doc_id: str
    tokens: list[str]
    sentence_boundaries: list[Span]
    entity_mentions: list[EntityMention]
    event_mentions: list[EventMention]
    coref_clusters: list[CorefCluster] = field(default_factory=list)

    @cached_property
    def mentions_by_id(self) -> dict[str, EntityMention]:
        return {m.mention_id: m for m in self.entity_mentions}

    @cached_property
    def cluster_by_mention(self) -> dict[str, CorefCluster]:
        out: dict[str, CorefCluster] = {}
        for c in self.coref_clusters:
            for mid in c.mention_ids:
                out[mid] = c
        return out

    def sentence_index(self, token_index: int) -> int:
        for i, (s, e) in enumerate(self.sentence_boundaries):
            if s <= token_index < e:
                return i
        raise IndexError(f"token {token_index} outside {self.doc_id}")

    def text_of(self, span: Span) -> str:
        return " ".join(self.tokens[span[0]:span[1]])


def token_distance(a: Span, b: Span) -> int:
    """Gap in tokens between the closest endpoints of two spans (0 if they
    touch or overlap)."""
    if a[1] <= b[0]:
        return b[0] - a[1]
    if b[1] <= a[0]:
        return a[0] - b[1]
    return 0


def validate_document(doc: Document) -> None:
    """Check Document invariants; raises CorpusLoadError naming the doc."""
    n = len(doc.tokens)
    bounds = doc.sentence_boundaries
    if bounds:
        if bounds[0][0] != 0 or bounds[-1][1] != n:
            raise CorpusLoadError(
                f"{doc.doc_id}: sentences do not cover [0, {n})")
        for (s, e), (s2, _) in zip(bounds, bounds[1:]):
            if e != s2:
                raise CorpusLoadError(
                    f"{doc.doc_id}: sentence gap/overlap at token {e}")
        if any(s >= e for s, e in bounds):
            raise CorpusLoadError(f"{doc.doc_id}: empty sentence span")
    elif n:
        raise CorpusLoadError(f"{doc.doc_id}: no sentence boundaries")

    def check_span(span: Span, what: str) -> None:
        s, e = span
        if not (0 <= s < e <= n):
            raise CorpusLoadError(
                f"{doc.doc_id}: {what} offsets {span} out of range [0, {n})")

    for m in doc.entity_mentions:
        check_span(m.span, f"mention {m.mention_id}")
        if not (m.span[0] <= m.head_span[0] and m.head_span[1] <= m.span[1]):
            raise CorpusLoadError(
                f"{doc.doc_id}: head span {m.head_span} of {m.mention_id} "
                f"not inside {m.span}")
    mention_ids = {m.mention_id for m in doc.entity_mentions}
    for ev in doc.event_mentions:
        check_span(ev.trigger_span, f"trigger of {ev.event_id}")
        if doc.sentence_index(ev.trigger_span[0]) != doc.sentence_index(
                ev.trigger_span[1] - 1):
            log.warning("%s: trigger of %s crosses a sentence boundary",
                        doc.doc_id, ev.event_id)
        for role, mid in ev.arguments:
            if mid not in mention_ids:
                raise CorpusLoadError(
                    f"{doc.doc_id}: event {ev.event_id} argument {role} "
                    f"references unknown mention {mid!r}")
    seen: set[str] = set()
    for c in doc.coref_clusters:
        if not c.mention_ids:
            raise CorpusLoadError(f"{doc.doc_id}: empty cluster {c.cluster_id}")
        if c.informative_mention_id not in c.mention_ids:
            raise CorpusLoadError(
                f"{doc.doc_id}: informative mention of {c.cluster_id} "
                f"outside the cluster")
        overlap = seen & c.mention_ids
        if overlap:
            raise CorpusLoadError(
                f"{doc.doc_id}: clusters overlap on {sorted(overlap)}")
        seen |= c.mention_ids


def informative_mention(cluster: CorefCluster,
                        mentions: dict[str, EntityMention]) -> EntityMention:
    """The most informative mention of a cluster.

    Ordering: NAME > NOMINAL > PRONOUN, ties broken by the longest token
    span, remaining ties by the earliest document position.
    """
    if not cluster.mention_ids:
        raise ValueError(f"cluster {cluster.cluster_id} is empty")
    members = [mentions[mid] for mid in cluster.mention_ids]
    return max(members, key=lambda m: (LEVEL_RANK[m.mention_level],
                                       m.end - m.start, -m.start))


def _resolve_view(doc: Document, trigger: Span, mention: EntityMention,
                  view: str) -> EntityMention:
    cluster = doc.cluster_by_mention.get(mention.mention_id)
    if cluster is None:
        return mention
    if view == "nearest":
        members = [doc.mentions_by_id[mid] for mid in cluster.mention_ids]
        return min(members,
                   key=lambda m: (token_distance(m.span, trigger), m.start))
    if view == "informative":
        return informative_mention(cluster, doc.mentions_by_id)
    raise ValueError(f"unknown view {view!r}")


def nearest_argument_view(doc: Document, event: EventMention) -> EventMention:
    """Replace each argument by the coreferent mention closest to the
    trigger (distance ties go to the earlier mention).  Idempotent."""
    return argument_view(doc, event, "nearest")


def informative_argument_view(doc: Document, event: EventMention) -> EventMention:
    return argument_view(doc, event, "informative")


def argument_view(doc: Document, event: EventMention, view: str) -> EventMention:
    args = []
    for role, mid in event.arguments:
        m = _resolve_view(doc, event.trigger_span, doc.mentions_by_id[mid], view)
        args.append((role, m.mention_id))
    return replace(event, arguments=tuple(args))


@dataclass
class DistanceStats:
    count: int
    mean: float
    histogram: dict[int, int]
    # Fraction of arguments whose informative mention falls in the same
    # sentence as the trigger.
    same_sentence_informative_fraction: float


def distance_stats(docs: list[Document], view: str = "informative") -> DistanceStats:
    """Trigger-argument token distances under a mention view.

    Distance is measured in tokens between the closest endpoints of the
    trigger span and the argument mention span under ``view``.
    """
    distances: list[int] = []
    same_sentence = 0
    total = 0
    for doc in docs:
        for ev in doc.event_mentions:
            for role, mid in ev.arguments:
                mention = doc.mentions_by_id[mid]
                viewed = _resolve_view(doc, ev.trigger_span, mention, view)
                distances.append(token_distance(ev.trigger_span, viewed.span))
                informative = _resolve_view(doc, ev.trigger_span, mention,
                                            "informative")
                total += 1
                if doc.sentence_index(informative.start) == doc.sentence_index(
                        ev.trigger_span[0]):
                    same_sentence += 1
    mean = sum(distances) / len(distances) if distances else 0.0
    frac = same_sentence / total if total else 0.0
    return DistanceStats(count=len(distances), mean=mean,
                         histogram=dict(Counter(distances)),
                         same_sentence_informative_fraction=frac)


# ---------------------------------------------------------------------------
# loaders

def _read_jsonlines(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusLoadError(f"{path}:{lineno}: {exc}") from exc
    return records


def _sentence_lengths(sentences) -> list[int]:
    lengths = []
    for entry in sentences:
        if isinstance(entry, str):
            lengths.append(len(entry.split()))
        elif isinstance(entry, dict) and "tokens" in entry:
            lengths.append(len(entry["tokens"]))
        elif isinstance(entry, (list, tuple)):
            if entry and all(isinstance(t, str) for t in entry):
                lengths.append(len(entry))
            elif (len(entry) == 2 and isinstance(entry[0], (list, tuple))
                  and isinstance(entry[1], str)):
                # ([token records...], sentence text) pairs
                lengths.append(len(entry[0]))
            else:
                # a list of per-token records
                lengths.append(len(entry))
        else:
            raise CorpusLoadError(f"unrecognized sentence entry: {entry!r}")
    return lengths


def _boundaries_from_lengths(lengths: list[int]) -> list[Span]:
    bounds, pos = [], 0
    for n in lengths:
        bounds.append((pos, pos + n))
        pos += n
    return bounds


def _level_of(record: dict) -> str:
    raw = str(record.get("mention_type") or record.get("level")
              or record.get("mention_level") or "").upper()
    # values like "UNK" or fine-grained labels default to the middle rank
    return _LEVEL_ALIASES.get(raw, NOMINAL)


def _mention_from_record(rec: dict, tokens: list[str], doc_id: str) -> EntityMention:
    mid = str(rec.get("id") or rec.get("mention_id") or rec.get("entity_id"))
    try:
        start, end = int(rec["start"]), int(rec["end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusLoadError(
            f"{doc_id}: mention {mid} lacks usable offsets: {exc}") from exc
    if end <= start:  # inclusive-end data
        end = start + 1
    span = (start, end)
    if "head_span" in rec:
        head = tuple(rec["head_span"])
    elif "head_start" in rec and "head_end" in rec:
        head = (int(rec["head_start"]), int(rec["head_end"]))
    else:
        head = span
    return EntityMention(
        mention_id=mid,
        span=span,
        head_span=(int(head[0]), int(head[1])),
        mention_level=_level_of(rec),
        entity_type=str(rec.get("entity_type") or rec.get("type") or "UNK"),
        text=" ".join(tokens[span[0]:span[1]]),
    )


def load_wikievents(doc_path, coref_path=None, ontology=None) -> list[Document]:
    """Load WikiEvents-style documents plus, optionally, their coreference
    file.  Coref lines carry ``clusters`` (lists of entity mention ids) and
    optionally the informative mention of each cluster (id or surface
    text); when absent it is derived with :func:`informative_mention`.
    """
    coref_by_doc: dict[str, dict] = {}
    if coref_path is not None:
        for rec in _read_jsonlines(coref_path):
            key = str(rec.get("doc_key") or rec.get("doc_id"))
            coref_by_doc[key] = rec

    docs = []
    for rec in _read_jsonlines(doc_path):
        doc_id = str(rec.get("doc_id") or rec.get("doc_key"))
        tokens = list(rec["tokens"])
        if "sentence_boundaries" in rec:
            bounds = [tuple(b) for b in rec["sentence_boundaries"]]
        elif rec.get("sentences"):
            bounds = _boundaries_from_lengths(_sentence_lengths(rec["sentences"]))
            if bounds and bounds[-1][1] != len(tokens):
                log.warning("%s: sentence lengths sum to %d, expected %d; "
                            "treating the document as one sentence",
                            doc_id, bounds[-1][1], len(tokens))
                bounds = [(0, len(tokens))]
        else:
            bounds = [(0, len(tokens))] if tokens else []

        mentions = [_mention_from_record(m, tokens, doc_id)
                    for m in rec.get("entity_mentions", [])]
        known = {m.mention_id for m in mentions}

        events = []
        for e in rec.get("event_mentions", []):
            trig = e["trigger"]
            ts, te = int(trig["start"]), int(trig["end"])
            if te <= ts:
                te = ts + 1
            args = []
            for a in e.get("arguments", []):
                role = str(a.get("role"))
                mid = str(a.get("entity_id") or a.get("mention_id"))
                if mid not in known:
                    log.warning("%s: dropping argument %s of %s: unknown "
                                "mention %s", doc_id, role, e.get("id"), mid)
                    continue
                if ontology is not None:
                    et = ontology.event_types.get(str(e["event_type"]))
                    if et is not None and role not in et.role_names():
                        log.warning("%s: role %r unknown to the ontology for "
                                    "%s; kept verbatim", doc_id, role,
                                    e["event_type"])
                args.append((role, mid))
            events.append(EventMention(
                event_id=str(e.get("id") or e.get("event_id")),
                event_type=str(e["event_type"]),
                trigger_span=(ts, te),
                arguments=tuple(args),
            ))

        clusters = []
        coref = coref_by_doc.get(doc_id, {})
        informative_hints = coref.get("informative_mentions") or []
        raw_clusters = coref.get("clusters") or []
        mention_map = {m.mention_id: m for m in mentions}
        for i, ids in enumerate(raw_clusters):
            ids = [str(x) for x in ids if str(x) in mention_map]
            if not ids:
                continue
            cluster = CorefCluster(
                cluster_id=f"{doc_id}-cluster-{i}",
                mention_ids=frozenset(ids),
                informative_mention_id=ids[0],
            )
            hint = informative_hints[i] if i < len(informative_hints) else None
            chosen = None
            if hint is not None:
                hint = str(hint)
                if hint in cluster.mention_ids:
                    chosen = hint
                else:  # a surface string; match by text
                    for mid in sorted(cluster.mention_ids):
                        if mention_map[mid].text == hint:
                            chosen = mid
                            break
            if chosen is None:
                chosen = informative_mention(cluster, mention_map).mention_id
            clusters.append(replace(cluster, informative_mention_id=chosen))

        doc = Document(doc_id=doc_id, tokens=tokens, sentence_boundaries=bounds,
                       entity_mentions=mentions, event_mentions=events,
                       coref_clusters=clusters)
        validate_document(doc)
        docs.append(doc)
    return docs


_RAMS_ROLE_RE = re.compile(r"^evt\d+arg\d*(.+)$")


def _rams_role(raw: str) -> str:
    m = _RAMS_ROLE_RE.match(raw)
    return m.group(1) if m else raw


def load_rams(path) -> list[Document]:
    """Load RAMS v1.0 jsonlines: each example is one Document whose tokens
    are the 5-sentence window around a single event trigger.  RAMS span
    offsets are inclusive; they are converted to exclusive ends."""
    docs = []
    for rec in _read_jsonlines(path):
        doc_id = str(rec.get("doc_key") or rec.get("doc_id"))
        sentences = rec["sentences"]
        tokens = [t for sent in sentences for t in sent]
        bounds = _boundaries_from_lengths([len(s) for s in sentences])

        triggers = rec.get("evt_triggers") or []
        if len(triggers) != 1:
            raise CorpusLoadError(f"{doc_id}: expected 1 trigger, "
                                  f"got {len(triggers)}")
        ts, te, type_info = triggers[0][0], triggers[0][1], triggers[0][2]
        event_type = str(type_info[0][0]) if type_info else "UNK"

        mentions: dict[Span, EntityMention] = {}

        def mention_for(span: Span) -> EntityMention:
            if span not in mentions:
                mid = f"{doc_id}-m{len(mentions)}"
                mentions[span] = EntityMention(
                    mention_id=mid, span=span, head_span=span,
                    mention_level=NOMINAL, entity_type="UNK",
                    text=" ".join(tokens[span[0]:span[1]]))
            return mentions[span]

        args = []
        for link in rec.get("gold_evt_links") or []:
            _trig, arg_span, raw_role = link
            span = (int(arg_span[0]), int(arg_span[1]) + 1)
            args.append((_rams_role(str(raw_role)), mention_for(span).mention_id))

        event = EventMention(event_id=f"{doc_id}-e0", event_type=event_type,
                             trigger_span=(int(ts), int(te) + 1),
                             arguments=tuple(args))
        doc = Document(doc_id=doc_id, tokens=tokens,
                       sentence_boundaries=bounds,
                       entity_mentions=list(mentions.values()),
                       event_mentions=[event])
        validate_document(doc)
        docs.append(doc)
    return docs


# ---------------------------------------------------------------------------
# canonical dump format (stage files)

def document_to_json(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "tokens": doc.tokens,
        "sentence_boundaries": [list(b) for b in doc.sentence_boundaries],
        "entity_mentions": [
            {"id": m.mention_id, "start": m.start, "end": m.end,
             "head_start": m.head_span[0], "head_end": m.head_span[1],
             "level": m.mention_level, "entity_type": m.entity_type,
             "text": m.text}
            for m in doc.entity_mentions
        ],
        "event_mentions": [
            {"id": e.event_id, "event_type": e.event_type,
             "trigger_start": e.trigger_span[0],
             "trigger_end": e.trigger_span[1],
             "arguments": [[r, m] for r, m in e.arguments]}
            for e in doc.event_mentions
        ],
        "coref_clusters": [
            {"id": c.cluster_id, "mention_ids": sorted(c.mention_ids),
             "informative": c.informative_mention_id}
            for c in doc.coref_clusters
        ],
    }


def document_from_json(rec: dict) -> Document:
    doc = Document(
        doc_id=rec["doc_id"],
        tokens=list(rec["tokens"]),
        sentence_boundaries=[tuple(b) for b in rec["sentence_boundaries"]],
        entity_mentions=[
            EntityMention(mention_id=m["id"], span=(m["start"], m["end"]),
                          head_span=(m["head_start"], m["head_end"]),
                          mention_level=m["level"],
                          entity_type=m["entity_type"], text=m["text"])
            for m in rec["entity_mentions"]
        ],
        event_mentions=[
            EventMention(event_id=e["id"], event_type=e["event_type"],
                         trigger_span=(e["trigger_start"], e["trigger_end"]),
                         arguments=tuple((r, m) for r, m in e["arguments"]))
            for e in rec["event_mentions"]
        ],
        coref_clusters=[
            CorefCluster(cluster_id=c["id"],
                         mention_ids=frozenset(c["mention_ids"]),
                         informative_mention_id=c["informative"])
            for c in rec["coref_clusters"]
        ],
    )
    validate_document(doc)
    return doc


def dump_canonical(docs: list[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(document_to_json(doc), sort_keys=True))
            f.write("\n")


def load_canonical(path) -> list[Document]:
    return [document_from_json(rec) for rec in _read_jsonlines(path)]
