from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redpanda.metrics import ScoreReport, compute_report, format_table, roc_auc, roc_auc_pairwise
from redpanda.scorer import ScoredSample, read_scores

DATA = Path(__file__).parent / "data"


def test_perfect_and_inverted_separation():
    assert roc_auc([2, 3, 4], [0, 1]) == 1.0
    assert roc_auc([0, 1], [2, 3, 4]) == 0.0


def test_all_ties_give_half():
    assert roc_auc([0.3] * 4, [0.3] * 7) == 0.5


def test_empty_side_rejected():
    with pytest.raises(ValueError):
        roc_auc([], [1.0])


def test_rank_sum_matches_pairwise_on_large_tied_instance():
    rng = np.random.default_rng(0)
    pos = rng.integers(0, 20, size=500).astype(float)
    neg = rng.integers(0, 20, size=500).astype(float) - 2
    assert abs(roc_auc(pos, neg) - roc_auc_pairwise(pos, neg)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40), st.lists(st.integers(-5, 5), min_size=1, max_size=40))
def test_rank_sum_matches_pairwise(pos, neg):
    assert abs(roc_auc(pos, neg) - roc_auc_pairwise(pos, neg)) < 1e-12


def test_complement_and_monotone_invariance():
    rng = np.random.default_rng(1)
    pos, neg = rng.random(40), rng.random(60)
    assert roc_auc(pos, neg) + roc_auc(neg, pos) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(np.exp(3 * pos), np.exp(3 * neg)) == pytest.approx(roc_auc(pos, neg), abs=1e-12)


def _scored(fam, pseudo, anom):
    out = [ScoredSample(f"f{i}", "test_familiar", v) for i, v in enumerate(fam)]
    out += [ScoredSample(f"p{i}", "test_pseudo", v) for i, v in enumerate(pseudo)]
    out += [ScoredSample(f"a{i}", "test_anomaly", v) for i, v in enumerate(anom)]
    return out


def test_ideal_detector_scores():
    # pseudo-anomalies indistinguishable from familiar samples, anomalies all higher
    rep = compute_report(_scored([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], [0.8, 0.9]))
    assert (rep.ad_score, rep.pa_score, rep.ra_score) == (1.0, 0.5, 1.0)
    assert rep.pa_gap == 0.0


def test_attribute_blind_detector_scores():
    # flags pseudo-anomalies as strongly as true anomalies
    rep = compute_report(_scored([0.1, 0.2], [0.8, 0.9], [0.8, 0.9]))
    assert rep.pa_score == 1.0 and rep.ra_score == 0.5


def test_fixture_score_file():
    # hand counts: AD 8.5/10, PA 5/6, RA 3/4 (one anomaly ties a familiar score)
    rep = compute_report(read_scores(DATA / "scores_small.csv"))
    assert rep.ad_score == pytest.approx(0.85)
    assert rep.pa_score == pytest.approx(5 / 6)
    assert rep.ra_score == pytest.approx(0.75)
    assert rep.counts == {"test_familiar": 3, "test_pseudo": 2, "test_anomaly": 2}


def test_missing_role_is_named():
    with pytest.raises(ValueError, match="test_pseudo"):
        compute_report(_scored([0.1], [], [0.5]))


def test_report_json_round_trip_and_table():
    rep = compute_report(_scored([0.1, 0.4], [0.2], [0.9]), config_hash="h", seed=1, mode="redpanda")
    back = ScoreReport.from_dict(__import__("json").loads(rep.to_json()))
    assert back == rep
    table = format_table([("redpanda", rep.ad_score, rep.pa_score, rep.ra_score)])
    assert "AD-Score" in table and "1.000" in table
