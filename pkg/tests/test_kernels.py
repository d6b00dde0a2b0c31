import numpy as np
import pytest

from sparsepq.kernels import ScoredId, dot, sq_l2, top_k


def test_sq_l2_hand_value():
    assert sq_l2([0.0, 0.0], [3.0, 4.0]) == 25.0
    assert sq_l2([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_dot_hand_value():
    assert dot([1.0, 2.0], [3.0, -1.0]) == 1.0


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        sq_l2([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        dot([1.0], [1.0, 2.0])


def test_scored_id_fields():
    s = ScoredId(id=3, score=0.5)
    assert s.id == 3 and s.score == 0.5


def test_top_k_basic_order():
    ids, scores = top_k(np.array([5.0, 1.0, 3.0]), 2)
    assert ids.tolist() == [1, 2]
    assert scores.tolist() == [1.0, 3.0]


def test_top_k_tie_goes_to_lower_id():
    ids, _ = top_k(np.array([2.0, 1.0, 1.0]), 1)
    assert ids.tolist() == [1]
    # ties exactly on the k-th boundary must also resolve by id
    ids, _ = top_k(np.array([1.0, 1.0, 1.0]), 2)
    assert ids.tolist() == [0, 1]


def test_top_k_tie_rule_is_permutation_invariant():
    scores = np.array([0.5, 0.25, 0.5, 0.25, 0.1])
    ids, _ = top_k(scores, 3)
    assert ids.tolist() == [4, 1, 3]
    perm = np.array([4, 3, 2, 1, 0])
    ids2, _ = top_k(scores[perm], 3, ids=perm)
    assert ids2.tolist() == [4, 1, 3]


def test_top_k_returns_everything_when_k_exceeds_n():
    ids, scores = top_k(np.array([3.0, 1.0]), 10)
    assert ids.tolist() == [1, 0]
    assert scores.tolist() == [1.0, 3.0]


def test_top_k_empty_scores():
    ids, scores = top_k(np.empty(0), 4)
    assert ids.size == 0 and scores.size == 0


def test_top_k_explicit_ids():
    ids, scores = top_k(np.array([9.0, 2.0, 4.0]), 2, ids=np.array([7, 5, 3]))
    assert ids.tolist() == [5, 3]
    assert scores.tolist() == [2.0, 4.0]


def test_top_k_input_validation():
    with pytest.raises(ValueError):
        top_k(np.array([1.0]), 0)
    with pytest.raises(ValueError):
        top_k(np.zeros((2, 2)), 1)
    with pytest.raises(ValueError):
        top_k(np.array([1.0, 2.0]), 1, ids=np.array([0]))


def test_top_k_matches_full_sort_oracle():
    # Quantized scores force plenty of exact ties; the oracle is a full
    # stable sort on (score, id).
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        k = int(rng.integers(1, n + 5))
        scores = rng.integers(0, 8, size=n).astype(np.float64) / 4.0
        ids, got_scores = top_k(scores, k)
        order = np.lexsort((np.arange(n), scores))[: min(k, n)]
        assert ids.tolist() == order.tolist()
        assert got_scores.tolist() == scores[order].tolist()
