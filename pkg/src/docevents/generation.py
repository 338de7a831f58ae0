"""Argument extraction by copy-restricted conditional generation.

The decoder vocabulary at every step is restricted to the tokens of the
encoder input (plus the reserved symbols), so the model can only copy
from the template or the document.  Beam candidates can be reranked by
appending entity-type clarification statements ("<filler> is a <type>.")
and scoring them with the same backend; fillers whose type statements
read as implausible are pruned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .backends import GeneratorBackend, TrainConfig, Vocab
from .corpus import Document, EventMention
from .ontology import EventOntology, is_unconstrained, template_for
from .templates import (EOS, FilledTemplate, GenerationInstance,
                        GroundedArgument, TemplateParseError, build_input,
                        build_instance, ground, parse_filled)

log = logging.getLogger(__name__)


class PreprocessingError(Exception):
    pass


class DecodeError(Exception):
    pass


@dataclass
class DecodeConfig:
    beam_width: int = 4
    max_output_len: int = 64
    rerank: bool = True
    copy_restrict: bool = True
    max_input_len: int | None = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")


@dataclass
class Candidate:
    tokens: list[str]           # decoded output without <s>/</s>
    token_ids: list[int]
    gen_logprob: float          # includes the end-of-sequence step
    truncated: bool = False
    rerank_score: float | None = None


@dataclass(frozen=True)
class Clarification:
    role: str
    filler: str
    entity_type: str
    tokens: tuple[str, ...]


def copy_mask(vocab: Vocab, input_tokens: list[str]) -> frozenset[int]:
    """Allowed decoder vocabulary: ids of input tokens plus the reserved
    symbols (placeholder, "and", sequence boundaries, end-of-sequence)."""
    return frozenset(vocab.ids(input_tokens)) | vocab.reserved_ids


def constrained_step(backend: GeneratorBackend, context,
                     prefix_ids: list[int],
                     allowed: frozenset[int]) -> np.ndarray:
    """One decoding step with tokens outside ``allowed`` set to -inf and
    the rest renormalized.  Returns log-probabilities over the full
    vocabulary (disallowed entries are -inf)."""
    if not allowed:
        raise DecodeError("empty allowed vocabulary")
    logprobs = backend.next_token_logprobs(context, prefix_ids)
    masked = np.full_like(logprobs, -np.inf)
    idx = np.fromiter(allowed, dtype=int)
    masked[idx] = logprobs[idx]
    norm = _logsumexp(masked[idx])
    if not np.isfinite(norm):
        raise DecodeError("all allowed tokens have zero probability")
    return masked - norm


def _logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(x - m).sum()))


def decode(backend: GeneratorBackend, instance: GenerationInstance,
           config: DecodeConfig) -> list[Candidate]:
    """Length-unnormalized beam search under the copy restriction.

    Returns up to ``beam_width`` candidates, best first.  Deterministic:
    score ties are broken by beam rank, then token id.  ``beam_width=1``
    is exactly greedy decoding.
    """
    input_tokens = build_input(instance, config.max_input_len)
    vocab = backend.vocab
    if config.copy_restrict:
        allowed = copy_mask(vocab, input_tokens)
    else:
        allowed = frozenset(range(len(vocab))) - {vocab.pad_id}
    allowed_idx = np.fromiter(sorted(allowed), dtype=int)
    context = backend.encode(input_tokens)
    eos = vocab.eos_id

    beams: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[list[int], float, bool]] = []
    for _step in range(config.max_output_len):
        capacity = config.beam_width - len(finished)
        if capacity <= 0 or not beams:
            break
        scores, origins, toks = [], [], []
        for b, (prefix, lp) in enumerate(beams):
            step_logprobs = constrained_step(backend, context, prefix, allowed)
            scores.append(lp + step_logprobs[allowed_idx])
            origins.append(np.full(len(allowed_idx), b))
            toks.append(allowed_idx)
        flat_scores = np.concatenate(scores)
        flat_origin = np.concatenate(origins)
        flat_tok = np.concatenate(toks)
        # best first; ties by beam rank then token id
        order = np.lexsort((flat_tok, flat_origin, -flat_scores))
        # a hypothesis retires (occupies a result slot) only when the
        # end-of-sequence token itself is selected into the beam
        next_beams: list[tuple[list[int], float]] = []
        for j in order[:capacity]:
            prefix, _ = beams[flat_origin[j]]
            tok = int(flat_tok[j])
            score = float(flat_scores[j])
            if tok == eos:
                finished.append((prefix, score, False))
            else:
                next_beams.append((prefix + [tok], score))
        beams = next_beams
    for prefix, lp in beams[:config.beam_width - len(finished)]:
        # still alive at max_output_len
        log.warning("%s: candidate hit max_output_len", instance.event_id)
        finished.append((prefix, lp, True))

    finished.sort(key=lambda f: -f[1])
    return [Candidate(tokens=vocab.tokens(ids), token_ids=list(ids),
                      gen_logprob=lp, truncated=trunc)
            for ids, lp, trunc in finished[:config.beam_width]]


def clarifications(filled: FilledTemplate, ontology: EventOntology,
                   event_type: str) -> list[Clarification]:
    """Type statements for every filled, type-constrained role: one
    statement per allowed entity type, "<filler> is a <phrase>."

    Roles that accept any entity type yield no statement (the statement
    would carry no constraint).
    """
    event_def = template_for(ontology, event_type)
    out = []
    for role_def in event_def.roles:
        fillers = filled.role_fills.get(role_def.name) or []
        if not fillers or is_unconstrained(ontology, role_def):
            continue
        for filler in fillers:
            for type_name in sorted(role_def.allowed_entity_types):
                phrase = ontology.entity_types[type_name].statement_phrase
                tokens = (*filler.split(), "is", "a", phrase, ".")
                out.append(Clarification(role=role_def.name, filler=filler,
                                         entity_type=type_name,
                                         tokens=tokens))
    return out


def rerank(backend: GeneratorBackend, candidates: list[Candidate],
           instance: GenerationInstance,
           ontology: EventOntology) -> Candidate:
    """Pick the candidate maximizing generation log-probability plus, per
    filled constrained role, the best clarification statement score.

    The statement is scored conditionally on the candidate's filled
    template and the original encoder input.  Unparseable candidates fall
    back to their generation score.  Ties go to the higher generation
    score, then the earlier beam rank.
    """
    if not candidates:
        raise ValueError("no candidates to rerank")
    input_tokens = build_input(instance)
    best, best_key = None, None
    for rank, cand in enumerate(candidates):
        score = cand.gen_logprob
        try:
            filled = parse_filled(instance, cand.tokens)
        except TemplateParseError:
            filled = None
        if filled is not None:
            base = backend.score_sequence(input_tokens, cand.tokens)
            by_filler: dict[tuple[str, str], float] = {}
            for c in clarifications(filled, ontology, instance.event_type):
                z = backend.score_sequence(
                    input_tokens, [*cand.tokens, *c.tokens]) - base
                key = (c.role, c.filler)
                by_filler[key] = max(by_filler.get(key, -np.inf), z)
            score += sum(by_filler.values())
        cand.rerank_score = score
        key = (score, cand.gen_logprob, -rank)
        if best_key is None or key > best_key:
            best, best_key = cand, key
    return best


def dataset_loss(backend: GeneratorBackend,
                 pairs: list[tuple[list[str], list[str]]]) -> float:
    """Mean per-token negative log-likelihood of (input, target) pairs;
    targets are scored with a terminating end-of-sequence token."""
    total, ntokens = 0.0, 0
    for inp, target in pairs:
        total -= backend.score_sequence(inp, [*target, EOS])
        ntokens += len(target) + 1
    return total / max(ntokens, 1)


def train(backend, pairs: list[tuple[list[str], list[str]]],
          config: TrainConfig):
    """Fit the backend on (input, target) pairs by per-token negative
    log-likelihood; a checkpoint is written after every epoch when
    ``config.checkpoint_dir`` is set.  Deterministic for a fixed seed.
    """
    oov = sorted({t for _, target in pairs for t in target
                  if t not in backend.vocab})
    if oov:
        raise PreprocessingError(
            f"targets contain tokens outside the backend vocabulary: "
            f"{oov[:10]}{'...' if len(oov) > 10 else ''}")

    def on_epoch(epoch: int, loss: float) -> None:
        log.info("epoch %d: per-token loss %.4f", epoch, loss)
        if config.checkpoint_dir:
            backend.save(f"{config.checkpoint_dir}/epoch_{epoch:03d}")

    backend.fit(pairs, config, on_epoch=on_epoch)
    return backend


@dataclass
class ExtractionResult:
    event_id: str
    event_type: str
    arguments: list[GroundedArgument]
    generated: list[str]
    unparseable: bool = False


def extract_arguments(backend: GeneratorBackend, doc: Document,
                      event: EventMention, ontology: EventOntology,
                      config: DecodeConfig) -> ExtractionResult:
    """Full pipeline for one trigger: build the input, decode, optionally
    rerank, parse the filled template and ground fillers to document
    offsets.  One generation pass extracts all arguments of the event."""
    event_def = template_for(ontology, event.event_type)
    instance = build_instance(doc, event, event_def,
                              max_doc_len=config.max_input_len)
    candidates = decode(backend, instance, config)
    if config.rerank and len(candidates) > 1:
        best = rerank(backend, candidates, instance, ontology)
    else:
        best = candidates[0]
    try:
        filled = parse_filled(instance, best.tokens)
    except TemplateParseError as exc:
        log.warning("%s: %s", event.event_id, exc)
        return ExtractionResult(event_id=event.event_id,
                                event_type=event.event_type, arguments=[],
                                generated=best.tokens, unparseable=True)
    seen: set[tuple[str, tuple[int, int]]] = set()
    grounded: list[GroundedArgument] = []
    for role in instance.slot_order:
        for filler in filled.role_fills.get(role, []):
            for arg in ground(doc, event.trigger_span, filler, role=role):
                if (arg.role, arg.span) not in seen:
                    seen.add((arg.role, arg.span))
                    grounded.append(arg)
    return ExtractionResult(event_id=event.event_id,
                            event_type=event.event_type, arguments=grounded,
                            generated=best.tokens)
