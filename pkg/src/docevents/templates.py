"""Build generation inputs from templates and parse generated output back
into grounded argument spans.

The reserved symbols below are atomic tokens: backends must register them
with their tokenizer so they never split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import Document, EventMention, Span, token_distance
from .ontology import EventTypeDef, SLOT_RE

log = logging.getLogger(__name__)

PLACEHOLDER = "<arg>"
TRIGGER_MARK = "<tgr>"
BOS = "<s>"
EOS = "</s>"
RESERVED_TOKENS = (BOS, EOS, PLACEHOLDER, TRIGGER_MARK)

# Below this fraction of matched template anchors the generation has
# abandoned the template and parsing fails soft.
MIN_ANCHOR_COVERAGE = 0.6


class TemplateParseError(Exception):
    """Generated text no longer follows the template structure."""


@dataclass(frozen=True)
class GenerationInstance:
    event_id: str
    event_type: str
    blank_template: tuple[str, ...]
    marked_document: tuple[str, ...]
    slot_order: tuple[str, ...]

    def __post_init__(self):
        assert self.blank_template.count(PLACEHOLDER) == len(self.slot_order)
        assert self.marked_document.count(TRIGGER_MARK) == 2


@dataclass
class FilledTemplate:
    # role name -> ordered filler strings; empty list means unfilled
    role_fills: dict[str, list[str]]


@dataclass(frozen=True)
class GroundedArgument:
    role: str
    span: Span
    text: str


def blank_template(event_def: EventTypeDef) -> tuple[list[str], list[str]]:
    """Replace every ``<argN>`` marker by the placeholder symbol.

    Returns (tokens, slot_order) where slot_order[i] is the role filling
    the i-th placeholder.
    """
    by_slot = {r.slot_index: r.name for r in event_def.roles}
    tokens: list[str] = []
    slot_order: list[str] = []
    for raw in event_def.template.split():
        pos = 0
        for m in SLOT_RE.finditer(raw):
            if m.start() > pos:
                tokens.append(raw[pos:m.start()])
            tokens.append(PLACEHOLDER)
            slot_order.append(by_slot[int(m.group(1))])
            pos = m.end()
        if pos < len(raw):
            tokens.append(raw[pos:])
    return tokens, slot_order


def _window(n_tokens: int, focus: Span, max_len: int) -> Span:
    """A max_len window containing ``focus``, centered on it and clamped
    at the edges."""
    if max_len >= n_tokens:
        return (0, n_tokens)
    mid = (focus[0] + focus[1]) // 2
    start = max(0, min(mid - max_len // 2, n_tokens - max_len))
    # keep the whole focus inside
    start = min(start, focus[0])
    start = max(start, focus[1] - max_len, 0)
    return (start, start + max_len)


def mark_trigger(doc: Document, event: EventMention,
                 max_len: int | None = None) -> list[str]:
    """Insert trigger delimiters around the event trigger; long documents
    are cut to a max_len token window centered on the trigger."""
    ts, te = event.trigger_span
    n = len(doc.tokens)
    if not (0 <= ts < te <= n):
        raise ValueError(f"trigger span {event.trigger_span} outside "
                         f"document of {n} tokens")
    if max_len is not None:
        if max_len < te - ts:
            raise ValueError(f"max_len {max_len} smaller than the trigger")
        ws, we = _window(n, (ts, te), max_len)
    else:
        ws, we = 0, n
    out = list(doc.tokens[ws:ts]) + [TRIGGER_MARK] + list(doc.tokens[ts:te]) \
        + [TRIGGER_MARK] + list(doc.tokens[te:we])
    return out


def build_instance(doc: Document, event: EventMention,
                   event_def: EventTypeDef,
                   max_doc_len: int | None = None) -> GenerationInstance:
    tokens, slot_order = blank_template(event_def)
    marked = mark_trigger(doc, event, max_len=max_doc_len)
    return GenerationInstance(
        event_id=event.event_id,
        event_type=event.event_type,
        blank_template=tuple(tokens),
        marked_document=tuple(marked),
        slot_order=tuple(slot_order),
    )


def build_input(instance: GenerationInstance,
                max_input_len: int | None = None) -> list[str]:
    """Encoder input: boundary, blank template, boundary pair, marked
    document, boundary.  Over-length inputs lose document tokens around
    the trigger window; template tokens are never cut."""
    doc = list(instance.marked_document)
    if max_input_len is not None:
        overhead = len(instance.blank_template) + 4
        budget = max_input_len - overhead
        first = doc.index(TRIGGER_MARK)
        second = doc.index(TRIGGER_MARK, first + 1)
        if budget < second - first + 1:
            raise ValueError(f"max_input_len {max_input_len} leaves no room "
                             f"for the trigger region")
        if len(doc) > budget:
            ws, we = _window(len(doc), (first, second + 1), budget)
            doc = doc[ws:we]
    return [BOS, *instance.blank_template, BOS, EOS, *doc, EOS]


def _document_args(doc: Document, event: EventMention) -> dict[str, list[str]]:
    """Role -> filler texts in document order."""
    out: dict[str, list[str]] = {}
    mention_pairs = []
    for role, mid in event.arguments:
        m = doc.mentions_by_id[mid]
        mention_pairs.append((m.start, role, m.text))
    for _, role, text in sorted(mention_pairs, key=lambda p: p[0]):
        out.setdefault(role, []).append(text)
    return out


def fill_gold(instance: GenerationInstance, doc: Document,
              event: EventMention, view: str = "raw") -> list[str]:
    """The gold decoder target: placeholders replaced by argument texts
    under the chosen mention view ('raw', 'nearest' or 'informative');
    multiple fillers of one role are joined with the word "and"."""
    from .corpus import argument_view

    viewed = event if view == "raw" else argument_view(doc, event, view)
    fills = _document_args(doc, viewed)
    out: list[str] = []
    slot = 0
    for tok in instance.blank_template:
        if tok != PLACEHOLDER:
            out.append(tok)
            continue
        role = instance.slot_order[slot]
        slot += 1
        texts = fills.get(role, [])
        if not texts:
            out.append(PLACEHOLDER)
        else:
            joined: list[str] = []
            for i, t in enumerate(texts):
                if i:
                    joined.append("and")
                joined.extend(t.split())
            out.extend(joined)
    return out


# ---------------------------------------------------------------------------
# parsing generated output

def _lcs_alignment(template: tuple[str, ...], generated: list[str]) -> dict[int, int]:
    """Longest common subsequence between template tokens and generated
    tokens (case-insensitive).  Returns template index -> generated index
    for matched positions; matching is monotone."""
    a = [t.lower() for t in template]
    b = [t.lower() for t in generated]
    n, m = len(a), len(b)
    lengths = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = lengths[i], lengths[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = max(nxt[j], row[j + 1])
    match: dict[int, int] = {}
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            match[i] = j
            i += 1
            j += 1
        elif lengths[i + 1][j] >= lengths[i][j + 1]:
            i += 1
        else:
            j += 1
    return match


def _subsequence_positions(haystack: list[str], needle: list[str]) -> list[int]:
    """Start indices of contiguous case-insensitive occurrences."""
    if not needle or len(needle) > len(haystack):
        return []
    hay = [t.lower() for t in haystack]
    ned = [t.lower() for t in needle]
    return [i for i in range(len(hay) - len(ned) + 1)
            if hay[i:i + len(ned)] == ned]


def split_on_and(tokens: list[str]) -> list[list[str]]:
    parts: list[list[str]] = [[]]
    for t in tokens:
        if t.lower() == "and":
            parts.append([])
        else:
            parts[-1].append(t)
    return [p for p in parts if p]


def parse_filled(instance: GenerationInstance,
                 generated: list[str]) -> FilledTemplate:
    """Parse a generated filled template back into per-role filler strings.

    Generated tokens are aligned to the blank template by LCS; the tokens
    between two consecutive matched template positions belong to the slot
    enclosed by them.  A fill region is split on standalone "and" only
    when it has no contiguous match in the instance document.

    Raises TemplateParseError when fewer than 60% of the template anchor
    tokens align (the generation abandoned the template).
    """
    template = instance.blank_template
    match = _lcs_alignment(template, generated)

    anchor_positions = [i for i, t in enumerate(template) if t != PLACEHOLDER]
    if anchor_positions:
        coverage = sum(1 for i in anchor_positions if i in match) / len(anchor_positions)
        if coverage < MIN_ANCHOR_COVERAGE:
            raise TemplateParseError(
                f"only {coverage:.0%} of template anchors aligned for "
                f"{instance.event_id}")

    doc_tokens = [t for t in instance.marked_document if t != TRIGGER_MARK]

    fills: dict[str, list[str]] = {role: [] for role in instance.slot_order}
    slot = 0
    cursor = 0  # next unconsumed generated position
    i = 0
    n = len(template)
    while i < n:
        if template[i] != PLACEHOLDER:
            if i in match:
                cursor = max(cursor, match[i] + 1)
            i += 1
            continue
        # maximal run of consecutive placeholders
        run = [i]
        while i + 1 < n and template[i + 1] == PLACEHOLDER:
            i += 1
            run.append(i)
        i += 1
        roles = [instance.slot_order[slot + k] for k in range(len(run))]
        slot += len(run)

        after = [match[p] for p in range(run[-1] + 1, n) if p in match]
        hi = min(after) if after else len(generated)
        region = generated[cursor:hi] if cursor < hi else []
        cursor = max(cursor, hi)

        for role, tokens in zip(roles, _split_region(region, roles, instance)):
            fills[role] = _region_to_fills(tokens, doc_tokens)
    return FilledTemplate(role_fills=fills)


def _split_region(region: list[str], roles: list[str],
                  instance: GenerationInstance) -> list[list[str]]:
    """Distribute a fill region over a run of adjacent slots.

    Literal placeholder tokens in the region mark empty slots; text runs
    fill the remaining slots in order.
    """
    out: list[list[str]] = [[] for _ in roles]
    k = 0
    buf: list[str] = []
    for tok in region:
        if tok == PLACEHOLDER:
            if buf:
                if k < len(roles):
                    out[k] = buf
                    k += 1
                buf = []
            if k < len(roles):
                k += 1  # literal placeholder: slot stays empty
        else:
            buf.append(tok)
    if buf:
        if k < len(roles):
            out[k] = buf
        else:
            log.warning("%s: dropping %r, no slot left in the run",
                        instance.event_id, " ".join(buf))
    if len(roles) > 1 and sum(map(bool, out)) > 1:
        log.warning("%s: adjacent slots %r share one region; the split is "
                    "heuristic", instance.event_id, roles)
    return out


def _region_to_fills(region: list[str], doc_tokens: list[str]) -> list[str]:
    region = [t for t in region if t != PLACEHOLDER]
    if not region:
        return []
    if _subsequence_positions(doc_tokens, region):
        return [" ".join(region)]
    parts = split_on_and(region)
    if len(parts) > 1:
        return [" ".join(p) for p in parts]
    return [" ".join(region)]


def alignment_trace(instance: GenerationInstance, generated: list[str]) -> str:
    """Human-readable LCS alignment, for the debug CLI."""
    match = _lcs_alignment(instance.blank_template, generated)
    lines = []
    for i, tok in enumerate(instance.blank_template):
        if i in match:
            lines.append(f"{i:>4} {tok!r:>24} == gen[{match[i]}] "
                         f"{generated[match[i]]!r}")
        else:
            lines.append(f"{i:>4} {tok!r:>24} -- unmatched")
    return "\n".join(lines)


def ground(doc: Document, trigger_span: Span, filler: str,
           role: str = "") -> list[GroundedArgument]:
    """Ground a filler string to document token offsets.

    Exact case-insensitive token-subsequence match; among multiple matches
    the span closest to the trigger wins (ties to the earlier one).  When
    the full string has no match it is split on standalone "and" and the
    parts are grounded independently; unmatched parts are dropped with a
    warning.
    """
    if not filler.strip():
        raise ValueError("filler must be non-empty")
    needle = filler.split()
    starts = _subsequence_positions(doc.tokens, needle)
    if starts:
        span = min(((s, s + len(needle)) for s in starts),
                   key=lambda sp: (token_distance(sp, trigger_span), sp[0]))
        return [GroundedArgument(role=role, span=span, text=doc.text_of(span))]
    parts = split_on_and(needle)
    if len(parts) <= 1:
        log.warning("%s: filler %r not found in document", doc.doc_id, filler)
        return []
    out = []
    for part in parts:
        sub = ground(doc, trigger_span, " ".join(part), role=role) \
            if part else []
        if sub:
            out.extend(sub)
        else:
            log.warning("%s: filler part %r not found in document",
                        doc.doc_id, " ".join(part))
    return out
