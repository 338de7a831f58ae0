"""Contextual token embedding backends for the trigger tagger.

The tagger only needs two operations from its backend: per-token
contextual vectors of a fixed dimension, and a distribution over the
backend vocabulary at a masked position.  :class:`SvdCooccurrenceBackend`
implements both from corpus statistics alone (PPMI + SVD word vectors
with window-averaged context mixing), which keeps toy experiments
self-contained and deterministic.  Any masked LM can be adapted behind
the same interface.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

# Minimal irregular verb table for keyword/trigger matching; regular
# inflection is generated by rule.
IRREGULAR_FORMS: dict[str, tuple[str, ...]] = {
    "buy": ("bought",), "sell": ("sold",), "pay": ("paid",),
    "meet": ("met", "meeting"), "say": ("said",), "send": ("sent",),
    "leave": ("left",), "flee": ("fled",), "fight": ("fought",),
    "strike": ("struck",), "shoot": ("shot",), "steal": ("stole", "stolen"),
    "take": ("took", "taken"), "give": ("gave", "given"),
    "go": ("went", "gone"), "make": ("made",), "hold": ("held",),
    "win": ("won",), "lose": ("lost",), "choose": ("chose", "chosen"),
    "break": ("broke", "broken"), "speak": ("spoke", "spoken"),
    "write": ("wrote", "written"), "begin": ("began", "begun"),
}

_VOWELS = set("aeiou")


def morphological_variants(word: str) -> set[str]:
    """The word plus its rule-generated inflections (lowercased)."""
    w = word.lower()
    out = {w, w + "s", w + "es", w + "ed", w + "ing"}
    if w.endswith("e"):
        out |= {w + "d", w[:-1] + "ing"}
    if w.endswith("y") and len(w) > 2 and w[-2] not in _VOWELS:
        out |= {w[:-1] + "ies", w[:-1] + "ied"}
    if (len(w) >= 3 and w[-1] not in _VOWELS and w[-2] in _VOWELS
            and w[-3] not in _VOWELS):
        out |= {w + w[-1] + "ed", w + w[-1] + "ing"}
    out |= set(IRREGULAR_FORMS.get(w, ()))
    return out


class EmbeddingBackend(ABC):
    dim: int

    @abstractmethod
    def token_embeddings(self, tokens: list[str]) -> np.ndarray:
        """Contextual vectors, shape (len(tokens), dim)."""

    @abstractmethod
    def masked_prediction(self, tokens: list[str], position: int) -> np.ndarray:
        """Probabilities over :attr:`vocabulary` for the masked position."""

    @property
    @abstractmethod
    def vocabulary(self) -> list[str]:
        ...

    def top_predictions(self, tokens: list[str], position: int,
                        k: int = 50) -> list[str]:
        probs = self.masked_prediction(tokens, position)
        order = np.argsort(-probs, kind="stable")[:k]
        vocab = self.vocabulary
        return [vocab[i] for i in order]


class SvdCooccurrenceBackend(EmbeddingBackend):
    """Count-based embeddings: PPMI of window co-occurrence, reduced by
    SVD.  Matching is case-insensitive.

    Contextual vectors mix the word vector with the mean vector of its
    window; masked prediction scores every vocabulary word against the
    context mean.
    """

    def __init__(self, sentences: list[list[str]], dim: int = 64,
                 window: int = 3, context_weight: float = 0.5):
        self.dim = dim
        self.window = window
        self.context_weight = context_weight
        words = sorted({t.lower() for sent in sentences for t in sent})
        self._vocab = words
        self._index = {w: i for i, w in enumerate(words)}
        v = len(words)

        counts = np.zeros((v, v))
        for sent in sentences:
            ids = [self._index[t.lower()] for t in sent]
            for i, wi in enumerate(ids):
                lo, hi = max(0, i - window), min(len(ids), i + window + 1)
                for j in range(lo, hi):
                    if j != i:
                        counts[wi, ids[j]] += 1.0

        total = counts.sum()
        if total == 0:
            self.vectors = np.zeros((v, dim))
            return
        row = counts.sum(axis=1, keepdims=True)
        col = counts.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            pmi = np.log(counts * total / (row @ col))
        ppmi = np.where(np.isfinite(pmi) & (pmi > 0), pmi, 0.0)

        u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
        k = min(dim, len(s))
        vecs = u[:, :k] * np.sqrt(s[:k])
        if k < dim:
            vecs = np.hstack([vecs, np.zeros((v, dim - k))])
        self.vectors = vecs

    @property
    def vocabulary(self) -> list[str]:
        return self._vocab

    def _word_vec(self, token: str) -> np.ndarray:
        i = self._index.get(token.lower())
        return self.vectors[i] if i is not None else np.zeros(self.dim)

    def _context_vec(self, tokens: list[str], position: int) -> np.ndarray:
        lo = max(0, position - self.window)
        hi = min(len(tokens), position + self.window + 1)
        ctx = [self._word_vec(tokens[j]) for j in range(lo, hi)
               if j != position]
        return np.mean(ctx, axis=0) if ctx else np.zeros(self.dim)

    def token_embeddings(self, tokens: list[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        for i in range(len(tokens)):
            out[i] = self._word_vec(tokens[i]) \
                + self.context_weight * self._context_vec(tokens, i)
        return out

    def masked_prediction(self, tokens: list[str], position: int) -> np.ndarray:
        ctx = self._context_vec(tokens, position)
        scores = self.vectors @ ctx
        scores -= scores.max() if len(scores) else 0.0
        exp = np.exp(scores)
        z = exp.sum()
        if z == 0:
            return np.full(len(self._vocab), 1.0 / max(len(self._vocab), 1))
        return exp / z

    def save(self, path) -> None:
        np.savez(path, vocab=np.array(self._vocab), vectors=self.vectors,
                 meta=np.array([self.dim, self.window, self.context_weight]))

    @classmethod
    def load(cls, path) -> "SvdCooccurrenceBackend":
        data = np.load(path, allow_pickle=False)
        backend = cls.__new__(cls)
        backend.dim = int(data["meta"][0])
        backend.window = int(data["meta"][1])
        backend.context_weight = float(data["meta"][2])
        backend._vocab = [str(w) for w in data["vocab"]]
        backend._index = {w: i for i, w in enumerate(backend._vocab)}
        backend.vectors = data["vectors"]
        return backend
