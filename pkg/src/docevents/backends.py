"""Generation backends.

A backend owns a vocabulary and exposes three operations: ``encode`` an
input token sequence into an opaque context, ``next_token_logprobs`` for
one decoding step, and ``score_sequence`` for the total log-probability
of an output given an input (no implicit end-of-sequence, so conditional
scores decompose by the chain rule).

Two concrete backends ship here: :class:`BigramBackend`, a trainable
conditional bigram model with hand-derived gradients used for gradient
checks and fast tests, and :class:`TinySeq2SeqBackend`, a small
transformer encoder-decoder with tied input/output embeddings that is
practical to train from scratch on a CPU.
"""

from __future__ import annotations

import json
import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .templates import BOS, EOS, PLACEHOLDER, TRIGGER_MARK

PAD = "<pad>"
UNK = "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK, PLACEHOLDER, TRIGGER_MARK)
# tokens every vocabulary carries besides the specials; "and" joins
# multi-argument fills and must always be generatable
ALWAYS_TOKENS = ("and",)


class Vocab:
    def __init__(self, tokens: Iterable[str] = ()):
        self._tok2id: dict[str, int] = {}
        self._toks: list[str] = []
        for t in (*SPECIALS, *ALWAYS_TOKENS):
            self.add(t)
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self._tok2id:
            self._tok2id[token] = len(self._toks)
            self._toks.append(token)
        return self._tok2id[token]

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]]) -> "Vocab":
        v = cls()
        for seq in sequences:
            for t in seq:
                v.add(t)
        return v

    def __len__(self) -> int:
        return len(self._toks)

    def __contains__(self, token: str) -> bool:
        return token in self._tok2id

    def id(self, token: str) -> int:
        return self._tok2id.get(token, self._tok2id[UNK])

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def token(self, idx: int) -> str:
        return self._toks[idx]

    def tokens(self, ids: Sequence[int]) -> list[str]:
        return [self._toks[i] for i in ids]

    @property
    def pad_id(self) -> int:
        return self._tok2id[PAD]

    @property
    def bos_id(self) -> int:
        return self._tok2id[BOS]

    @property
    def eos_id(self) -> int:
        return self._tok2id[EOS]

    @property
    def reserved_ids(self) -> frozenset[int]:
        """Ids always allowed under copy restriction: placeholder, "and",
        sequence boundaries and end-of-sequence."""
        return frozenset(self._tok2id[t]
                         for t in (PLACEHOLDER, "and", BOS, EOS))

    def to_list(self) -> list[str]:
        return list(self._toks)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocab":
        v = cls.__new__(cls)
        v._toks = list(tokens)
        v._tok2id = {t: i for i, t in enumerate(tokens)}
        return v


class GeneratorBackend(ABC):
    vocab: Vocab

    @abstractmethod
    def encode(self, input_tokens: Sequence[str]):
        """Encode the input; the return value is only ever passed back to
        :meth:`next_token_logprobs`."""

    @abstractmethod
    def next_token_logprobs(self, context, prefix_ids: Sequence[int]) -> np.ndarray:
        """Normalized log-probabilities over the vocabulary for the token
        following ``prefix_ids``."""

    @abstractmethod
    def score_sequence(self, input_tokens: Sequence[str],
                       output_tokens: Sequence[str]) -> float:
        """Sum of per-token log-probabilities of ``output_tokens`` given
        the input.  No end-of-sequence term, so
        ``score(a + b) - score(a) == log p(b | a, input)``."""


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 13
    checkpoint_dir: str | None = None


# ---------------------------------------------------------------------------
# analytic bigram backend

class BigramBackend(GeneratorBackend):
    """First-order model: p(x_i | x_{i-1}) = softmax(L[x_{i-1}]).

    The context is ignored by the probabilities (it is retained only so
    the interface matches).  Gradients of the negative log-likelihood are
    computed analytically, which makes this the reference model for
    finite-difference gradient checks.
    """

    def __init__(self, vocab: Vocab, seed: int = 0):
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        self.logits = rng.normal(scale=0.1, size=(len(vocab), len(vocab)))

    def _logprobs(self, prev_id: int) -> np.ndarray:
        row = self.logits[prev_id]
        return row - _logsumexp(row)

    def encode(self, input_tokens: Sequence[str]):
        return tuple(self.vocab.ids(input_tokens))

    def next_token_logprobs(self, context, prefix_ids: Sequence[int]) -> np.ndarray:
        prev = prefix_ids[-1] if prefix_ids else self.vocab.bos_id
        return self._logprobs(prev)

    def score_sequence(self, input_tokens: Sequence[str],
                       output_tokens: Sequence[str]) -> float:
        ids = self.vocab.ids(output_tokens)
        prev = self.vocab.bos_id
        total = 0.0
        for i in ids:
            total += self._logprobs(prev)[i]
            prev = i
        return float(total)

    def nll_and_grad(self, pairs: Sequence[tuple[Sequence[str], Sequence[str]]]
                     ) -> tuple[float, np.ndarray]:
        """Summed negative log-likelihood of the (input, target) pairs and
        its gradient with respect to the logits."""
        grad = np.zeros_like(self.logits)
        total = 0.0
        for _inp, target in pairs:
            ids = [*self.vocab.ids(target), self.vocab.eos_id]
            prev = self.vocab.bos_id
            for i in ids:
                logp = self._logprobs(prev)
                total -= logp[i]
                probs = np.exp(logp)
                grad[prev] += probs
                grad[prev, i] -= 1.0
                prev = i
        return total, grad

    def fit(self, pairs, config: TrainConfig,
            on_epoch: Callable[[int, float], None] | None = None) -> list[float]:
        ntokens = sum(len(t) + 1 for _, t in pairs)
        history = []
        for epoch in range(config.epochs):
            loss, grad = self.nll_and_grad(pairs)
            self.logits -= config.learning_rate * grad
            per_token = loss / ntokens
            history.append(per_token)
            if on_epoch:
                on_epoch(epoch, per_token)
        return history

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        np.save(os.path.join(directory, "logits.npy"), self.logits)
        with open(os.path.join(directory, "vocab.json"), "w") as f:
            json.dump(self.vocab.to_list(), f)

    @classmethod
    def load(cls, directory: str) -> "BigramBackend":
        with open(os.path.join(directory, "vocab.json")) as f:
            vocab = Vocab.from_list(json.load(f))
        backend = cls(vocab)
        backend.logits = np.load(os.path.join(directory, "logits.npy"))
        return backend


def _logsumexp(x: np.ndarray) -> float:
    m = x.max()
    return float(m + np.log(np.exp(x - m).sum()))


# ---------------------------------------------------------------------------
# tiny transformer encoder-decoder

class _Seq2SeqModule(nn.Module):
    def __init__(self, vocab_size: int, d_model: int, nhead: int,
                 num_layers: int, dim_ff: int, max_len: int):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, d_model)
        self.pos = nn.Embedding(max_len, d_model)
        enc_layer = nn.TransformerEncoderLayer(
            d_model, nhead, dim_ff, dropout=0.0, batch_first=True)
        dec_layer = nn.TransformerDecoderLayer(
            d_model, nhead, dim_ff, dropout=0.0, batch_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, num_layers)
        self.decoder = nn.TransformerDecoder(dec_layer, num_layers)
        self.scale = math.sqrt(d_model)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.size(1), device=ids.device)
        return self.embed(ids) * self.scale + self.pos(positions)[None]

    def encode(self, src: torch.Tensor,
               src_pad: torch.Tensor | None = None) -> torch.Tensor:
        return self.encoder(self._embed(src), src_key_padding_mask=src_pad)

    def decode_logits(self, memory: torch.Tensor, tgt: torch.Tensor,
                      memory_pad: torch.Tensor | None = None) -> torch.Tensor:
        causal = nn.Transformer.generate_square_subsequent_mask(
            tgt.size(1), device=tgt.device)
        h = self.decoder(self._embed(tgt), memory, tgt_mask=causal,
                         memory_key_padding_mask=memory_pad)
        # output projection tied to the input embeddings (logits are dot
        # products with token embeddings)
        return h @ self.embed.weight.T


class TinySeq2SeqBackend(GeneratorBackend):
    def __init__(self, vocab: Vocab, d_model: int = 128, nhead: int = 4,
                 num_layers: int = 2, dim_ff: int = 256, max_len: int = 640,
                 seed: int = 0):
        self.vocab = vocab
        self.config = dict(d_model=d_model, nhead=nhead,
                           num_layers=num_layers, dim_ff=dim_ff,
                           max_len=max_len, seed=seed)
        torch.manual_seed(seed)
        self.module = _Seq2SeqModule(len(vocab), d_model, nhead, num_layers,
                                     dim_ff, max_len)
        self.module.eval()

    def _src(self, input_tokens: Sequence[str]) -> torch.Tensor:
        return torch.tensor([self.vocab.ids(input_tokens)], dtype=torch.long)

    def encode(self, input_tokens: Sequence[str]):
        with torch.no_grad():
            return self.module.encode(self._src(input_tokens))

    def next_token_logprobs(self, context, prefix_ids: Sequence[int]) -> np.ndarray:
        tgt = torch.tensor([[self.vocab.bos_id, *prefix_ids]], dtype=torch.long)
        with torch.no_grad():
            logits = self.module.decode_logits(context, tgt)[0, -1]
            return F.log_softmax(logits.double(), dim=-1).numpy()

    def score_sequence(self, input_tokens: Sequence[str],
                       output_tokens: Sequence[str]) -> float:
        if not output_tokens:
            return 0.0
        out_ids = self.vocab.ids(output_tokens)
        tgt_in = torch.tensor([[self.vocab.bos_id, *out_ids[:-1]]],
                              dtype=torch.long)
        with torch.no_grad():
            memory = self.module.encode(self._src(input_tokens))
            logits = self.module.decode_logits(memory, tgt_in)[0]
            logprobs = F.log_softmax(logits.double(), dim=-1)
            idx = torch.tensor(out_ids)
            return float(logprobs[torch.arange(len(out_ids)), idx].sum())

    def fit(self, pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
            config: TrainConfig,
            on_epoch: Callable[[int, float], None] | None = None) -> list[float]:
        """Minimize per-token negative log-likelihood of the targets."""
        torch.manual_seed(config.seed)
        rng = np.random.default_rng(config.seed)
        pad = self.vocab.pad_id
        encoded = []
        for inp, target in pairs:
            src = self.vocab.ids(inp)
            tgt = [*self.vocab.ids(target), self.vocab.eos_id]
            encoded.append((src, tgt))
        optimizer = torch.optim.Adam(self.module.parameters(),
                                     lr=config.learning_rate)
        self.module.train()
        history = []
        order = np.arange(len(encoded))
        for epoch in range(config.epochs):
            rng.shuffle(order)
            total_loss, total_tokens = 0.0, 0
            for start in range(0, len(encoded), config.batch_size):
                batch = [encoded[i] for i in order[start:start + config.batch_size]]
                src = _pad_batch([b[0] for b in batch], pad)
                tgt = _pad_batch([[self.vocab.bos_id, *b[1]] for b in batch], pad)
                tgt_in, tgt_out = tgt[:, :-1], tgt[:, 1:]
                src_pad = src.eq(pad)
                memory = self.module.encode(src, src_pad)
                logits = self.module.decode_logits(memory, tgt_in, src_pad)
                loss = F.cross_entropy(logits.reshape(-1, logits.size(-1)),
                                       tgt_out.reshape(-1),
                                       ignore_index=pad, reduction="sum")
                ntok = int(tgt_out.ne(pad).sum())
                optimizer.zero_grad()
                (loss / ntok).backward()
                optimizer.step()
                total_loss += float(loss.detach())
                total_tokens += ntok
            per_token = total_loss / total_tokens
            history.append(per_token)
            if on_epoch:
                on_epoch(epoch, per_token)
        self.module.eval()
        return history

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        torch.save(self.module.state_dict(),
                   os.path.join(directory, "weights.pt"))
        with open(os.path.join(directory, "backend.json"), "w") as f:
            json.dump({"config": self.config, "vocab": self.vocab.to_list()},
                      f)

    @classmethod
    def load(cls, directory: str) -> "TinySeq2SeqBackend":
        with open(os.path.join(directory, "backend.json")) as f:
            blob = json.load(f)
        backend = cls(Vocab.from_list(blob["vocab"]), **blob["config"])
        backend.module.load_state_dict(
            torch.load(os.path.join(directory, "weights.pt"),
                       weights_only=True))
        backend.module.eval()
        return backend


def _pad_batch(seqs: list[list[int]], pad: int) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    return torch.tensor([s + [pad] * (width - len(s)) for s in seqs],
                        dtype=torch.long)
