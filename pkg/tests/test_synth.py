import numpy as np
import pytest
from scipy import stats

from backbone.bicm import EXACT, BicmFit
from backbone.bidcm import fit_bidcm
from backbone.core import degrees_bipartite, degrees_directed
from backbone.ingest import TweetRecord, default_keywords, keyword_filter
from backbone.projection import observed_vmotifs_directed
from backbone.synth import (
    BlockConfig, SynthConfig, background_activity, degree_weights, generate_corpus, inject_self_retweets,
    plant_blocks, plant_squad, sample_bicm, sample_counts,
)


def const_fit(value, n=10, m=10):
    return BicmFit(np.full(n, value), np.ones(m), EXACT, 0.0, 0, np.zeros(n, dtype=np.int64),
                   np.zeros(m, dtype=np.int64))


def test_sample_all_ones_and_zeros():
    assert sample_bicm(const_fit(np.inf), 0).m == 100
    assert sample_bicm(const_fit(0.0), 0).m == 0


def test_sample_half_edge_count():
    fit = const_fit(1.0)
    counts = np.array([sample_bicm(fit, s).m for s in range(10_000)])
    # mean of 10^4 Binomial(100, 1/2) draws: standard error 5 / 100
    assert abs(counts.mean() - 50) <= 3 * 5 / 100
    lo, hi = 38, 62
    observed = np.array([(counts <= lo).sum()] + [(counts == k).sum() for k in range(lo + 1, hi)]
                        + [(counts >= hi).sum()])
    pmf = stats.binom(100, 0.5)
    expected = np.array([pmf.cdf(lo)] + [pmf.pmf(k) for k in range(lo + 1, hi)] + [pmf.sf(hi - 1)]) * counts.size
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_sample_deterministic():
    fit = const_fit(0.5, 20, 30)
    a, b = sample_bicm(fit, 3), sample_bicm(fit, 3)
    assert a.rows.tolist() == b.rows.tolist() and a.cols.tolist() == b.cols.tolist()


@pytest.mark.parametrize("family, params", [("constant", {}), ("uniform", {"low": 1, "high": 5}),
                                            ("powerlaw", {"exponent": 2.5, "kmin": 1, "kmax": 50})])
def test_degree_weights_mean_one(family, params):
    w = degree_weights(family, 500, np.random.default_rng(0), **params)
    assert w.mean() == pytest.approx(1.0) and (w > 0).all()


def test_unknown_family():
    with pytest.raises(ValueError):
        degree_weights("gamma", 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_counts("gamma", 3, np.random.default_rng(0))


def test_block_config_validation():
    with pytest.raises(ValueError):
        BlockConfig(inflation=0.5)
    with pytest.raises(ValueError):
        BlockConfig(block_sizes=(10, 10))
    with pytest.raises(ValueError):
        BlockConfig(density=0.0)


def test_plant_blocks_inflation():
    g, lb, rb = plant_blocks(BlockConfig(n_left=40, n_right=400, inflation=10.0, density=0.3, seed=1))
    same = sum(lb[g.left_ids[r]] == rb[g.right_ids[c]] for r, c in zip(g.rows, g.cols))
    across = g.m - same
    # equal halves: within-block pairs are as many as across-block ones
    assert 7 < same / across < 14
    assert g.m / (40 * 400) == pytest.approx(0.3, rel=0.05)
    assert sorted(set(lb.values())) == [0, 1]


def test_plant_blocks_noise_uniform():
    g, _, _ = plant_blocks(BlockConfig(inflation=1.0, density=0.2, seed=2))
    k, kk = degrees_bipartite(g)
    assert g.m / (40 * 400) == pytest.approx(0.2, rel=0.05)


def test_background_activity_shape():
    g = background_activity(100, seed=0)
    d = degrees_directed(g)
    assert (d.post_in == 1).all()
    own = {(u, p) for u, p in zip(g.t_users, g.t_posts)}
    assert not own & set(zip(g.r_users, g.r_posts))


def test_plant_squad_rate_zero_unchanged():
    base = background_activity(50, seed=1)
    g, truth = plant_squad(base, 5, 5, 0.0, seed=0)
    assert g is base and truth.bots == []


def test_plant_squad_warns_on_invisible_rate():
    base = background_activity(50, seed=1, posts=("constant", {"value": 1}))
    with pytest.warns(RuntimeWarning, match="invisible"):
        plant_squad(base, 2, 2, 0.3, seed=0)


def test_plant_squad_observed_far_above_lambda():
    base = background_activity(300, seed=2)
    g, truth = plant_squad(base, 5, 5, 1.0, seed=0, posts_per_hub=30)
    assert len(truth.hubs) == 5 and len(truth.bots) == 5
    fit = fit_bidcm(g)
    u, v, obs = observed_vmotifs_directed(g)
    idx = {name: k for k, name in enumerate(g.user_ids)}
    lookup = {(int(a), int(b)): int(c) for a, b, c in zip(u, v, obs)}
    for h in truth.hubs:
        for b in truth.bots:
            lam = fit.q_author[idx[h]] * fit.user_in[idx[b]]
            assert lookup[(idx[h], idx[b])] >= 30 and lookup[(idx[h], idx[b])] > 5 * lam


def test_plant_squad_bad_rate():
    with pytest.raises(ValueError):
        plant_squad(background_activity(10, seed=0), 1, 1, 1.5, seed=0)


def test_inject_self_retweets():
    base = background_activity(40, seed=3)
    user = base.user_ids[int(np.argmax(degrees_directed(base).user_out))]
    g = inject_self_retweets(base, [user])
    u, v, obs = observed_vmotifs_directed(g)
    k = g.user_ids.index(user)
    assert any(a == b == k for a, b in zip(u, v))


def test_corpus_records_and_truth():
    records, truth = generate_corpus(SynthConfig(seed=5))
    assert all(isinstance(r, TweetRecord) for r in records)
    assert [r.timestamp for r in records] == sorted(r.timestamp for r in records)
    assert len(truth.squad_hubs) == 22 and len(truth.squad_bots) == 22
    assert set(truth.squad_bots) <= set(truth.bots)
    kept = list(keyword_filter(records, default_keywords()))
    assert 0 < len(kept) < len(records)


def test_corpus_deterministic():
    a, ta = generate_corpus(SynthConfig(seed=8))
    b, tb = generate_corpus(SynthConfig(seed=8))
    assert [r.tweet_id for r in a] == [r.tweet_id for r in b] and ta == tb


def test_config_roundtrip(tmp_path):
    import json
    cfg = SynthConfig(seed=9)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SynthConfig.load(path) == cfg
