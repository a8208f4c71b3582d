"""Metric tests against hand-derived fixtures and independent brute-force oracles.

The oracles below deliberately share no code with pointloop.metrics: BLEU via
direct per-token counting, LCS via full-table recursion, METEOR chunks via
exhaustive enumeration of every maximal matching.
"""

import itertools
import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointloop.metrics import (
    MetricDomainError,
    TokenSequence,
    bleu1,
    meteor,
    rougeL_f1,
    score_pair,
    sequence_nll,
    tokenize,
)

# ---------------------------------------------------------------------------
# Independent oracles


def oracle_bleu1(cand_tokens, ref_tokens):
    if not cand_tokens or not ref_tokens:
        return 0.0
    hit = 0
    ref_budget = list(ref_tokens)
    for tok in cand_tokens:
        if tok in ref_budget:
            ref_budget.remove(tok)
            hit += 1
    precision = hit / len(cand_tokens)
    if len(cand_tokens) >= len(ref_tokens):
        bp = 1.0
    else:
        bp = math.exp(1.0 - len(ref_tokens) / len(cand_tokens))
    return precision * bp


def oracle_lcs(a, b):
    # Full-table DP, no rolling-row tricks.
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[n][m]


def oracle_rouge(cand_tokens, ref_tokens):
    if not cand_tokens or not ref_tokens:
        return 0.0
    lcs = oracle_lcs(cand_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand_tokens)
    r = lcs / len(ref_tokens)
    return 2 * p * r / (p + r)


def oracle_chunk_count(pairs):
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or not (i == prev[0] + 1 and j == prev[1] + 1):
            chunks += 1
        prev = (i, j)
    return chunks


def oracle_min_chunks(cand_tokens, ref_tokens):
    """Enumerate every maximal matching: per word type, all choices of which
    candidate occurrences match, times all bijections onto reference
    occurrences. Returns (matches, min chunks)."""
    cand_occ, ref_occ = {}, {}
    for i, t in enumerate(cand_tokens):
        cand_occ.setdefault(t, []).append(i)
    for j, t in enumerate(ref_tokens):
        ref_occ.setdefault(t, []).append(j)
    types = sorted(set(cand_occ) & set(ref_occ))
    matches = sum(min(len(cand_occ[t]), len(ref_occ[t])) for t in types)
    if matches == 0:
        return 0, 0

    per_type_pairings = []
    for t in types:
        k = min(len(cand_occ[t]), len(ref_occ[t]))
        options = []
        for cs in itertools.combinations(cand_occ[t], k):
            for rs in itertools.permutations(ref_occ[t], k):
                options.append(list(zip(cs, rs)))
        per_type_pairings.append(options)

    best = matches + 1
    for combo in itertools.product(*per_type_pairings):
        pairs = [p for group in combo for p in group]
        best = min(best, oracle_chunk_count(pairs))
    return matches, best


def oracle_meteor(cand_tokens, ref_tokens):
    if not cand_tokens or not ref_tokens:
        return 0.0
    matches, chunks = oracle_min_chunks(cand_tokens, ref_tokens)
    if matches == 0:
        return 0.0
    p = matches / len(cand_tokens)
    r = matches / len(ref_tokens)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1 - penalty)


def seeded_corpus(seed=20240117, n_pairs=50):
    """50 random token pairs; per-sentence word repetition capped at 3 so the
    exhaustive oracle stays cheap."""
    rng = random.Random(seed)
    vocab = [
        "red", "blue", "chair", "table", "lamp", "round", "tall", "small",
        "wooden", "metal", "box", "sphere", "behind", "above", "leg",
    ]

    def sentence():
        while True:
            toks = rng.choices(vocab, k=rng.randint(3, 12))
            if max(Counter(toks).values()) <= 3:
                return toks

    return [(sentence(), sentence()) for _ in range(n_pairs)]


# ---------------------------------------------------------------------------
# Tokenizer


def test_tokenize_basic():
    assert tokenize("The cat.").tokens == ("the", "cat")


def test_tokenize_empty():
    assert tokenize("").tokens == ()


def test_tokenize_word_boundaries():
    assert tokenize("Co-pilot v2").tokens == ("co", "pilot", "v2")


# ---------------------------------------------------------------------------
# Hand-derived fixtures


def test_bleu1_identity():
    assert bleu1("a red chair", "a red chair") == 1.0


def test_bleu1_brevity_penalty():
    # precision 1, BP = exp(1 - 6/3) = e^-1
    got = bleu1("the cat sat", "the cat sat on the mat")
    assert abs(got - math.exp(-1)) < 1e-9


def test_bleu1_disjoint():
    assert bleu1("dog", "cat") == 0.0


def test_bleu1_empty_candidate():
    assert bleu1("", "cat") == 0.0
    assert score_pair("", "cat").flags == ["empty_candidate"]


def test_rouge_identity():
    assert rougeL_f1("the tall lamp", "the tall lamp") == 1.0


def test_rouge_hand_case():
    # LCS = 2 ("the cat"), P = 2/3, R = 2/5, F1 = 0.5
    assert abs(rougeL_f1("the cat sat", "the cat on the mat") - 0.5) < 1e-9


def test_rouge_disjoint():
    assert rougeL_f1("red box", "blue sphere") == 0.0


def test_rouge_symmetric():
    a, b = "the cat sat", "the cat on the mat"
    assert rougeL_f1(a, b) == rougeL_f1(b, a)


def test_bleu1_asymmetric_counterexample():
    a, b = "the cat sat", "the cat sat on the mat"
    assert bleu1(a, b) != bleu1(b, a)


def test_meteor_single_word():
    # m=1, chunks=1, F_mean=1, penalty=0.5
    assert abs(meteor("cat", "cat") - 0.5) < 1e-9


def test_meteor_no_overlap():
    assert meteor("dog", "cat") == 0.0


def test_meteor_identity_m4():
    # identical 4-word texts, one chunk: 1 - 0.5*(1/4)^3 = 0.9921875
    got = meteor("a tall red chair", "a tall red chair")
    assert abs(got - 0.9921875) < 1e-9


@pytest.mark.parametrize("m", [1, 2, 3, 4, 7])
def test_meteor_identity_formula(m):
    words = [f"w{i}" for i in range(m)]
    got = meteor(words, words)
    assert abs(got - (1 - 0.5 * (1 / m) ** 3)) < 1e-9


def test_meteor_chunk_minimality():
    # Greedy in-order alignment maps "b" to ref position 0 (3 chunks); the
    # minimal matching uses ref positions 1..3 as one contiguous chunk.
    cand = ["a", "b", "c"]
    ref = ["b", "a", "b", "c"]
    matches, chunks = oracle_min_chunks(cand, ref)
    assert matches == 3
    assert chunks == 1
    assert abs(meteor(cand, ref) - oracle_meteor(cand, ref)) < 1e-12


# ---------------------------------------------------------------------------
# Oracle equivalence on the seeded corpus


def test_oracle_equivalence_corpus():
    for cand, ref in seeded_corpus():
        assert abs(bleu1(cand, ref) - oracle_bleu1(cand, ref)) < 1e-9
        assert abs(rougeL_f1(cand, ref) - oracle_rouge(cand, ref)) < 1e-9
        assert abs(meteor(cand, ref) - oracle_meteor(cand, ref)) < 1e-9


# ---------------------------------------------------------------------------
# Property tests

words = st.lists(st.sampled_from("red blue box cat dog tall sat on the".split()),
                 min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(words)
def test_identity_scores(tokens):
    text = " ".join(tokens)
    assert bleu1(text, text) == 1.0
    assert rougeL_f1(text, text) == 1.0
    m = len(tokenize(text).tokens)
    assert abs(meteor(text, text) - (1 - 0.5 * (1 / m) ** 3)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(words, words)
def test_score_ranges_and_case_invariance(a, b):
    ta, tb = " ".join(a), " ".join(b)
    for metric in (bleu1, rougeL_f1, meteor):
        s = metric(ta, tb)
        assert 0.0 <= s <= 1.0
        assert metric(ta.upper(), tb.upper()) == s


@settings(max_examples=60, deadline=None)
@given(words, words)
def test_rouge_f1_symmetry(a, b):
    assert abs(rougeL_f1(" ".join(a), " ".join(b)) - rougeL_f1(" ".join(b), " ".join(a))) < 1e-12


def test_meteor_pathological_input_terminates():
    # Heavy repetition blows past the exact-search budget; the greedy
    # fallback must still return a sane in-range score.
    cand = ["spam"] * 30 + ["a", "b"] * 15
    ref = ["a", "spam"] * 30
    score = meteor(cand, ref)
    assert 0.0 <= score <= 1.0


# ---------------------------------------------------------------------------
# Embedding similarity


class FakeEmbedBackend:
    def __init__(self, table):
        self.table = table

    def embed(self, texts):
        return [self.table[t] for t in texts]


def test_embedding_similarity_identical_text():
    from pointloop.metrics import embedding_similarity

    backend = FakeEmbedBackend({"a chair": [0.6, 0.8]})
    assert abs(embedding_similarity("a chair", "a chair", backend) - 1.0) < 1e-6


def test_embedding_similarity_orthogonal():
    from pointloop.metrics import embedding_similarity

    backend = FakeEmbedBackend({"x": [1.0, 0.0], "y": [0.0, 1.0]})
    assert embedding_similarity("x", "y", backend) == 0.0


def test_embedding_similarity_hand_cosine():
    from pointloop.metrics import embedding_similarity

    s2 = math.sqrt(2) / 2
    backend = FakeEmbedBackend({"x": [1.0, 0.0], "y": [s2, s2]})
    assert abs(embedding_similarity("x", "y", backend) - 0.707107) < 1e-6


def test_embedding_similarity_through_real_client():
    from pointloop.backends import BackendClient, BackendDescriptor, ScriptedBackend
    from pointloop.metrics import embedding_similarity

    desc = BackendDescriptor(kind="embedding", model_name="emb")
    backend = BackendClient(desc, ScriptedBackend(
        embed_rule=lambda fp, texts: [[2.0, 0.0] if t == "x" else [0.0, 5.0]
                                      for t in texts]))
    assert abs(embedding_similarity("x", "not-x", backend)) < 1e-9


# ---------------------------------------------------------------------------
# Sequence NLL


def test_nll_certain_tokens():
    assert sequence_nll([1.0, 1.0, 1.0]) == 0.0


def test_nll_uniform_analytic():
    # L tokens uniform over V: NLL = L * ln V
    got = sequence_nll([0.25, 0.25])
    assert abs(got - 2 * math.log(4)) < 1e-9
    assert round(got, 6) == 2.772589


def test_nll_hand_sum():
    got = sequence_nll([0.5, 0.25])
    assert abs(got - (math.log(2) + math.log(4))) < 1e-9


def test_nll_domain_errors():
    for bad in ([0.0], [-0.1], [1.1], [float("nan")]):
        with pytest.raises(MetricDomainError):
            sequence_nll(bad)
    with pytest.raises(MetricDomainError):
        sequence_nll([])


def test_nll_token_sequence_type():
    seq = TokenSequence(
        instruction_tokens=("describe",),
        response_tokens=("a", "chair"),
        probabilities=(0.5, 0.5),
    )
    assert abs(sequence_nll(seq) - 2 * math.log(2)) < 1e-12
    with pytest.raises(MetricDomainError):
        TokenSequence(response_tokens=("a",), probabilities=(0.5, 0.5))


def test_nll_additivity_seeded():
    rng = random.Random(7)
    for _ in range(100):
        a = [rng.uniform(0.01, 1.0) for _ in range(rng.randint(1, 10))]
        b = [rng.uniform(0.01, 1.0) for _ in range(rng.randint(1, 10))]
        assert abs(sequence_nll(a + b) - (sequence_nll(a) + sequence_nll(b))) < 1e-9
