"""Caption metrics (BLEU-1, ROUGE-L, METEOR), embedding cosine, and sequence NLL.

All text metrics operate on lowercase word tokens and return scores in [0, 1].
Conventions that the reference literature leaves open are fixed here and
surfaced in report metadata:

* ROUGE-L uses beta=1 (plain F1).
* METEOR uses exact surface matching only (no stemming, no synonymy).
* BLEU-1 is unsmoothed; empty overlap scores 0.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

__all__ = [
    "TokenizedText",
    "TokenSequence",
    "MetricDomainError",
    "tokenize",
    "bleu1",
    "rougeL_f1",
    "meteor",
    "embedding_similarity",
    "sequence_nll",
    "score_pair",
]

_WORD_RE = re.compile(r"\w+", re.UNICODE)

# Exact minimal-chunk search gives up past this many visited nodes and falls
# back to the greedy in-order alignment (only reachable on pathological
# inputs with heavy token repetition).
_CHUNK_SEARCH_BUDGET = 200_000


class MetricDomainError(ValueError):
    """An input lies outside a metric's domain (e.g. probability > 1)."""


@dataclass(frozen=True)
class TokenizedText:
    """A string plus its deterministic lowercase word tokens."""

    original: str
    tokens: tuple[str, ...]

    @property
    def empty(self) -> bool:
        return not self.tokens


@dataclass(frozen=True)
class TokenSequence:
    """Instruction/response token ids with per-response-token probabilities.

    Probabilities are p(token_i | previous response tokens, instruction),
    each in (0, 1].
    """

    instruction_tokens: tuple[str, ...] = ()
    response_tokens: tuple[str, ...] = ()
    probabilities: tuple[float, ...] = ()

    def __post_init__(self):
        if self.response_tokens and len(self.response_tokens) != len(self.probabilities):
            raise MetricDomainError(
                f"{len(self.response_tokens)} response tokens but "
                f"{len(self.probabilities)} probabilities"
            )


def tokenize(text: str) -> TokenizedText:
    """Lowercase and split on Unicode word boundaries, dropping punctuation."""
    return TokenizedText(original=text, tokens=tuple(_WORD_RE.findall(text.lower())))


def _as_tokens(text: str | TokenizedText | Sequence[str]) -> tuple[str, ...]:
    if isinstance(text, TokenizedText):
        return text.tokens
    if isinstance(text, str):
        return tokenize(text).tokens
    return tuple(text)


def bleu1(candidate, reference) -> float:
    """Clipped unigram precision times brevity penalty exp(min(0, 1 - |ref|/|cand|)).

    Empty candidate scores 0 by convention. Deliberately asymmetric in its
    arguments (the brevity penalty only punishes short candidates).
    """
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    cand_counts = Counter(cand)
    ref_counts = Counter(ref)
    clipped = sum(min(n, ref_counts[tok]) for tok, n in cand_counts.items())
    precision = clipped / len(cand)
    if precision == 0.0:
        return 0.0
    bp = math.exp(min(0.0, 1.0 - len(ref) / len(cand)))
    return precision * bp


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Standard O(len(a)*len(b)) DP, rolling single row.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rougeL_f1(candidate, reference) -> float:
    """F1 over the longest common subsequence (beta=1)."""
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


def _greedy_alignment(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """In-order exact-match alignment: each candidate token takes the first
    unused reference occurrence of the same word."""
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(ref):
        positions.setdefault(tok, []).append(j)
    used: dict[str, int] = {}
    pairs = []
    for i, tok in enumerate(cand):
        occ = positions.get(tok, [])
        k = used.get(tok, 0)
        if k < len(occ):
            pairs.append((i, occ[k]))
            used[tok] = k + 1
    return pairs


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    if not pairs:
        return 0
    chunks = 1
    for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]):
        if not (i2 == i1 + 1 and j2 == j1 + 1):
            chunks += 1
    return chunks


def _min_chunks(cand: Sequence[str], ref: Sequence[str], matches: int) -> int:
    """Minimal chunk count over all maximal exact matchings.

    Branch-and-bound over candidate positions left to right; the greedy
    alignment seeds the bound. Falls back to the greedy count when the
    search exceeds its node budget.
    """
    greedy = _greedy_alignment(cand, ref)
    best = _count_chunks(greedy)
    if best <= 1 or matches == 0:
        return best

    ref_positions: dict[str, list[int]] = {}
    for j, tok in enumerate(ref):
        ref_positions.setdefault(tok, []).append(j)
    quota = {
        tok: min(n, len(ref_positions.get(tok, ())))
        for tok, n in Counter(cand).items()
        if tok in ref_positions
    }
    # Candidate positions that could participate in a matching.
    cand_slots = [i for i, tok in enumerate(cand) if tok in quota]
    # How many slots of each word remain at or after slot index k.
    remaining_after: list[Counter] = [Counter() for _ in range(len(cand_slots) + 1)]
    for k in range(len(cand_slots) - 1, -1, -1):
        remaining_after[k] = remaining_after[k + 1].copy()
        remaining_after[k][cand[cand_slots[k]]] += 1

    used_ref: set[int] = set()
    need = dict(quota)
    nodes = 0
    best_found = best

    def feasible(k: int) -> bool:
        rem = remaining_after[k]
        return all(rem[tok] >= n for tok, n in need.items() if n > 0)

    def rec(k: int, matched: int, prev: tuple[int, int] | None, chunks: int):
        nonlocal nodes, best_found
        nodes += 1
        if nodes > _CHUNK_SEARCH_BUDGET:
            return
        if chunks >= best_found:
            return
        if matched == matches:
            best_found = chunks
            return
        if k >= len(cand_slots) or not feasible(k):
            return
        i = cand_slots[k]
        tok = cand[i]
        if need[tok] > 0:
            for j in ref_positions[tok]:
                if j in used_ref:
                    continue
                extends = prev is not None and i == prev[0] + 1 and j == prev[1] + 1
                used_ref.add(j)
                need[tok] -= 1
                rec(k + 1, matched + 1, (i, j), chunks if extends else chunks + 1)
                need[tok] += 1
                used_ref.discard(j)
        # Skip this occurrence (legal only if later slots can still fill quota).
        if remaining_after[k + 1][tok] >= need[tok]:
            rec(k + 1, matched, prev, chunks)

    rec(0, 0, None, 0)
    return best_found


def meteor(candidate, reference) -> float:
    """Exact-match METEOR: F_mean = 10PR/(R+9P), penalty = 0.5*(chunks/matches)^3."""
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    matches = sum((Counter(cand) & Counter(ref)).values())
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    chunks = _min_chunks(cand, ref, matches)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


def embedding_similarity(candidate: str, reference: str, embedding_backend) -> float:
    """Cosine similarity between the two texts' embeddings.

    The backend contract already L2-normalizes, so this is a plain dot product.
    """
    vecs = embedding_backend.embed([candidate, reference])
    a, b = vecs[0], vecs[1]
    return float(sum(x * y for x, y in zip(a, b)))


def sequence_nll(seq: TokenSequence | Sequence[float]) -> float:
    """Negative log-likelihood of a response: -sum(ln p_i) over its tokens.

    Zero iff every probability is 1. Probabilities outside (0, 1] raise
    MetricDomainError.
    """
    probs = seq.probabilities if isinstance(seq, TokenSequence) else tuple(seq)
    if not probs:
        raise MetricDomainError("response must contain at least one token")
    total = 0.0
    for i, p in enumerate(probs):
        if not (0.0 < p <= 1.0) or math.isnan(p):
            raise MetricDomainError(f"probability out of (0, 1] at position {i}: {p!r}")
        total -= math.log(p)
    return total


@dataclass
class PairScores:
    """All text-metric scores for one candidate/reference pair."""

    bleu1: float
    rougeL_f1: float
    meteor: float
    flags: list[str] = field(default_factory=list)

    def as_dict(self, scale_100: bool = False) -> dict:
        scale = 100.0 if scale_100 else 1.0
        out = {
            "bleu1": round(self.bleu1 * scale, 2) if scale_100 else self.bleu1,
            "rougeL_f1": round(self.rougeL_f1 * scale, 2) if scale_100 else self.rougeL_f1,
            "meteor": round(self.meteor * scale, 2) if scale_100 else self.meteor,
        }
        if self.flags:
            out["flags"] = list(self.flags)
        out["conventions"] = {
            "rouge_beta": 1,
            "meteor_matcher": "exact",
            "bleu_smoothing": "none",
        }
        return out


def score_pair(candidate: str, reference: str) -> PairScores:
    cand = tokenize(candidate)
    ref = tokenize(reference)
    flags = []
    if cand.empty:
        flags.append("empty_candidate")
    if ref.empty:
        flags.append("empty_reference")
    return PairScores(
        bleu1=bleu1(cand, ref),
        rougeL_f1=rougeL_f1(cand, ref),
        meteor=meteor(cand, ref),
        flags=flags,
    )
