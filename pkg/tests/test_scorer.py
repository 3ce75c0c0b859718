import numpy as np
import pytest

from redpanda.networks import Encoder
from redpanda.scorer import (CodeBank, ScoredSample, anomaly_score, build_bank, read_comment_metadata,
                             read_scores, score_codes, score_split, write_scores)
from redpanda.synthdata import BenchmarkSpec, build_benchmark
from redpanda.training import encode


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_self_match_scores_zero():
    rng = np.random.default_rng(0)
    codes = unit_rows(rng, 20, 8)
    bank = CodeBank.from_codes(codes)
    np.testing.assert_allclose(score_codes(bank, codes, k=1), 0.0, atol=1e-12)


def test_orthogonal_query_scores_one():
    bank = CodeBank.from_codes(np.eye(4)[:3])
    assert anomaly_score(bank, np.eye(4)[3], k=1) == pytest.approx(1.0)
    assert anomaly_score(bank, -np.eye(4)[0], k=1) == pytest.approx(1.0)
    assert anomaly_score(CodeBank.from_codes(np.eye(2)[:1]), -np.eye(2)[0]) == pytest.approx(2.0)


def test_matches_brute_force_k3():
    rng = np.random.default_rng(1)
    bank_codes, queries = unit_rows(rng, 50, 6), unit_rows(rng, 10, 6)
    bank = CodeBank.from_codes(bank_codes)
    got = score_codes(bank, queries, k=3)
    for q, g in zip(queries, got):
        dists = sorted(1.0 - float(q @ b) for b in bank_codes)
        assert g == pytest.approx(sum(dists[:3]) / 3, abs=1e-12)


def test_scores_grow_with_k_and_stay_in_range():
    rng = np.random.default_rng(2)
    bank = CodeBank.from_codes(unit_rows(rng, 30, 5))
    q = unit_rows(rng, 15, 5)
    prev = score_codes(bank, q, k=1)
    for k in (2, 5, 30):
        cur = score_codes(bank, q, k=k)
        assert np.all(cur >= prev - 1e-12)
        assert np.all((cur >= 0) & (cur <= 2))
        prev = cur
    with pytest.raises(ValueError):
        score_codes(bank, q, k=31)
    with pytest.raises(ValueError):
        score_codes(bank, q, k=0)


def test_bank_rejects_degenerate_input():
    with pytest.raises(ValueError):
        CodeBank.from_codes(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        CodeBank.from_codes(np.array([[1.0, 0.0], [0.0, 0.0]]))


@pytest.fixture(scope="module")
def toy():
    spec = BenchmarkSpec(domains=2, classes=4, per_cell=6, anomaly_classes=(3,), pseudo_pairs=((0, 1),),
                         image_size=16)
    return build_benchmark(spec), Encoder(16, (4, 8), 6, seed=0)


def test_bank_rows_equal_reencoding(toy):
    split, enc = toy
    bank = build_bank(enc, split.train_normal)
    assert bank.ids == tuple(s.id for s in split.train_normal)
    i = 3
    again = encode(enc, split.train_normal[i].image[None])[0]
    np.testing.assert_allclose(bank.codes[i], again, atol=1e-6)


def test_score_split_is_order_independent_and_pure(toy):
    split, enc = toy
    bank = build_bank(enc, split.train_normal)
    tests = split.test_samples()
    before = bank.codes.copy()
    a = {s.id: s.score for s in score_split(enc, bank, tests)}
    b = {s.id: s.score for s in score_split(enc, bank, tests[::-1])}
    assert a.keys() == b.keys()
    for key in a:
        assert a[key] == pytest.approx(b[key], abs=1e-6)
    assert np.array_equal(before, bank.codes)


def test_scores_csv_round_trip(tmp_path):
    scored = [ScoredSample("x1", "test_pseudo", 0.125), ScoredSample("x2", "test_anomaly", 1 / 3)]
    path = tmp_path / "scores.csv"
    write_scores(path, scored, "config_hash=abc;seed=2")
    assert read_scores(path) == scored
    assert read_comment_metadata(path) == {"config_hash": "abc", "seed": "2"}


def test_adding_bank_rows_never_raises_scores():
    rng = np.random.default_rng(3)
    codes, queries = unit_rows(rng, 40, 6), unit_rows(rng, 25, 6)
    for k in (1, 3):
        small = score_codes(CodeBank.from_codes(codes[:20]), queries, k)
        large = score_codes(CodeBank.from_codes(codes), queries, k)
        assert np.all(large <= small + 1e-12)


def test_duplicate_of_train_image_scores_zero(toy):
    split, enc = toy
    bank = build_bank(enc, split.train_normal)
    dup = split.train_normal[5]
    from redpanda.synthdata import LabeledSample
    fake = LabeledSample(id="dup", nuisance=dup.nuisance, relevant=dup.relevant, role="test_familiar",
                         image=dup.image)
    assert score_split(enc, bank, [fake])[0].score == pytest.approx(0.0, abs=1e-6)
    again = score_split(enc, bank, split.test_samples())
    assert again == score_split(enc, bank, split.test_samples())
