"""Topic-model adapter: document handling, the per-document fixed point
against an exhaustive grid oracle, statistics, prediction, and symmetries."""

import numpy as np
import pytest

import grid_oracle
from popvb.expfam import dirichlet_expectation, dirichlet_kl
from popvb.models.lda import (Document, LdaGlobalState, LdaModel, LdaSpec,
                              lda_doc_elbo, lda_local_step,
                              lda_predictive_score, lda_suff_stats)

# Frozen grid-search optimum for one small document (K=2, V=3,
# elog_beta = log [[.7,.2,.1],[.2,.5,.3]], tokens {0:2, 1:1}, prior 0.1).
GRID_ELOG_BETA = np.log(np.array([[0.7, 0.2, 0.1], [0.2, 0.5, 0.3]]))
GRID_GAMMA = np.array([3.0990625, 0.1])
GRID_ELBO = -3.149431471535691


def spec2(V=3, gamma_doc=0.1, tol=1e-8, iters=1000, eta=0.1):
    return LdaSpec(K=2, V=V, eta=eta, gamma_doc=gamma_doc, local_tol=tol,
                   local_max_iters=iters)


def state_from_elog(elog):
    # params are unused by the local step; any positive table will do.
    return LdaGlobalState(np.ones(elog.shape), np.asarray(elog, float))


# -- documents ----------------------------------------------------------------


def test_document_from_pairs_merges_and_drops_zero():
    doc = Document.from_pairs([(3, 2), (1, 1), (3, 4), (7, 0)])
    assert doc.ids.tolist() == [1, 3]
    assert doc.counts.tolist() == [1, 6]
    assert doc.token_total == 7
    assert doc.n_distinct == 2


def test_document_from_tokens():
    doc = Document.from_tokens([4, 0, 4, 4])
    assert doc.ids.tolist() == [0, 4]
    assert doc.counts.tolist() == [1, 3]
    assert doc.token_total == 4


def test_document_validation_errors():
    with pytest.raises(ValueError):
        Document(np.array([2, 1]), np.array([1, 1]), 2)
    with pytest.raises(ValueError):
        Document(np.array([1, 1]), np.array([1, 1]), 2)
    with pytest.raises(ValueError):
        Document(np.array([-1, 2]), np.array([1, 1]), 2)
    with pytest.raises(ValueError):
        Document(np.array([0]), np.array([0]), 0)
    with pytest.raises(ValueError):
        Document(np.array([0]), np.array([2]), 3)
    with pytest.raises(ValueError):
        Document(np.array([[0]]), np.array([[2]]), 2)


def test_empty_document_is_allowed():
    doc = Document.from_pairs([])
    assert doc.token_total == 0 and doc.n_distinct == 0


# -- the local fixed point ----------------------------------------------------


def test_single_token_symmetric_state():
    state = LdaGlobalState.from_params(np.full((2, 4), 5.0))
    doc = Document.from_tokens([2])
    local = lda_local_step(doc, state, spec2(V=4))
    assert local.converged
    assert local.phi == pytest.approx(np.array([[0.5, 0.5]]), abs=1e-12)
    assert local.gamma == pytest.approx([0.6, 0.6], abs=1e-12)


def test_empty_document_local_step_and_elbo():
    spec = spec2()
    state = LdaGlobalState.from_params(np.ones((2, 3)))
    doc = Document.from_pairs([])
    local = lda_local_step(doc, state, spec)
    assert local.converged
    assert local.phi.shape == (0, 2)
    assert local.gamma == pytest.approx([0.1, 0.1], abs=0)
    # q(theta) equals its prior, so the objective contribution vanishes
    assert lda_doc_elbo(doc, local, state, spec) == pytest.approx(0.0,
                                                                  abs=1e-12)


def test_local_step_matches_grid_oracle_on_frozen_instance():
    doc = Document.from_pairs([(0, 2), (1, 1)])
    gamma, elbo = grid_oracle.grid_maximize(doc.ids, doc.counts,
                                            GRID_ELOG_BETA, 0.1)
    assert gamma == pytest.approx(GRID_GAMMA, abs=1e-9)
    assert elbo == pytest.approx(GRID_ELBO, abs=1e-12)
    state = state_from_elog(GRID_ELOG_BETA)
    local = lda_local_step(doc, state, spec2())
    assert local.converged
    pkg = lda_doc_elbo(doc, local, state, spec2())
    assert pkg == pytest.approx(GRID_ELBO, abs=1e-3)


def test_local_step_never_beats_grid_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        V = int(rng.integers(2, 6))
        n_tok = int(rng.integers(1, 7))
        doc = Document.from_tokens(rng.integers(0, V, n_tok))
        params = rng.uniform(0.2, 5.0, (2, V))
        state = LdaGlobalState.from_params(params)
        spec = spec2(V=V)
        local = lda_local_step(doc, state, spec)
        pkg = lda_doc_elbo(doc, local, state, spec)
        _, grid = grid_oracle.grid_maximize(doc.ids, doc.counts,
                                            state.elog_beta, 0.1)
        assert pkg <= grid + 1e-6


def test_objective_monotone_over_sweeps():
    rng = np.random.default_rng(2)
    doc = Document.from_tokens(rng.integers(0, 5, 12))
    state = LdaGlobalState.from_params(rng.uniform(0.2, 4.0, (2, 5)))
    values = []
    for iters in range(1, 12):
        spec = LdaSpec(K=2, V=5, eta=0.1, gamma_doc=0.3, local_tol=1e-300,
                       local_max_iters=iters)
        local = lda_local_step(doc, state, spec)
        values.append(lda_doc_elbo(doc, local, state, spec))
    diffs = np.diff(values)
    assert (diffs >= -1e-10).all()


def test_local_step_consistency_properties():
    rng = np.random.default_rng(3)
    spec = spec2(V=6)
    for _ in range(5):
        doc = Document.from_tokens(rng.integers(0, 6, 9))
        state = LdaGlobalState.from_params(rng.uniform(0.2, 5.0, (2, 6)))
        local = lda_local_step(doc, state, spec)
        assert local.phi.sum(axis=1) == pytest.approx(
            np.ones(doc.n_distinct), abs=1e-9)
        rebuilt = 0.1 + local.phi.T @ doc.counts
        assert local.gamma == pytest.approx(rebuilt, abs=1e-10)
        assert (local.phi >= 0).all()


def test_topic_permutation_equivariance():
    rng = np.random.default_rng(4)
    K, V = 4, 7
    params = rng.uniform(0.3, 4.0, (K, V))
    doc = Document.from_tokens(rng.integers(0, V, 11))
    spec = LdaSpec(K=K, V=V, eta=0.1, gamma_doc=0.2, local_tol=1e-10,
                   local_max_iters=500)
    perm = np.array([2, 0, 3, 1])
    base = lda_local_step(doc, LdaGlobalState.from_params(params), spec)
    swapped = lda_local_step(doc, LdaGlobalState.from_params(params[perm]),
                             spec)
    assert swapped.gamma == pytest.approx(base.gamma[perm], abs=1e-12)
    assert swapped.phi == pytest.approx(base.phi[:, perm], abs=1e-12)


# -- statistics ----------------------------------------------------------------


def test_suff_stats_layout_and_mass():
    spec = spec2(V=5)
    doc = Document.from_pairs([(1, 2), (4, 1)])
    state = LdaGlobalState.from_params(np.ones((2, 5)))
    local = lda_local_step(doc, state, spec)
    stats = lda_suff_stats(doc, local, spec)
    assert stats.values.shape == (2, 5)
    assert stats.weight == 1.0
    assert stats.values.sum() == pytest.approx(doc.token_total, abs=1e-9)
    assert stats.values[:, [0, 2, 3]] == pytest.approx(np.zeros((2, 3)),
                                                       abs=0)
    expected = (local.phi * doc.counts[:, None]).T
    assert stats.values[:, doc.ids] == pytest.approx(expected, abs=1e-12)


def test_batch_stats_adds_documents_and_counts_nonconverged():
    spec = spec2(V=5)
    model = LdaModel(spec)
    rng = np.random.default_rng(5)
    docs = [Document.from_tokens(rng.integers(0, 5, 8)) for _ in range(3)]
    state = LdaGlobalState.from_params(rng.uniform(0.5, 3.0, (2, 5)))
    stats, n_bad = model.batch_stats(docs, state)
    assert n_bad == 0
    by_hand = np.zeros((2, 5))
    for doc in docs:
        local = lda_local_step(doc, state, spec)
        by_hand += lda_suff_stats(doc, local, spec).values
    assert stats["topics"].values == pytest.approx(by_hand, abs=1e-12)
    assert stats["topics"].weight == 3.0
    # worker-chunked accumulation yields the same totals
    par, bad2 = model.batch_stats(docs, state, workers=3)
    assert par["topics"].values == pytest.approx(stats["topics"].values,
                                                 abs=1e-12)
    assert par["topics"].weight == 3.0 and bad2 == 0


def test_batch_stats_flags_nonconverged_documents():
    spec = LdaSpec(K=2, V=5, eta=0.1, gamma_doc=0.1, local_tol=1e-300,
                   local_max_iters=1)
    model = LdaModel(spec)
    rng = np.random.default_rng(6)
    docs = [Document.from_tokens(rng.integers(0, 5, 20)) for _ in range(2)]
    state = LdaGlobalState.from_params(rng.uniform(0.2, 5.0, (2, 5)))
    _, n_bad = model.batch_stats(docs, state)
    assert n_bad == 2


# -- prediction ----------------------------------------------------------------


def test_predictive_uniform_state_scores_log_uniform():
    V = 8
    spec = LdaSpec(K=3, V=V, eta=0.5, gamma_doc=0.1)
    state = LdaGlobalState.from_params(np.full((3, V), 2.0))
    infer = Document.from_tokens([0, 3, 5])
    score = Document.from_pairs([(1, 2), (6, 3)])
    total, n = lda_predictive_score(state, infer, score, spec)
    assert n == 5
    assert total == pytest.approx(5 * np.log(1.0 / V), abs=1e-12)


def test_predictive_distribution_normalizes():
    rng = np.random.default_rng(7)
    V = 6
    spec = LdaSpec(K=2, V=V, eta=0.1, gamma_doc=0.1)
    state = LdaGlobalState.from_params(rng.uniform(0.2, 3.0, (2, V)))
    infer = Document.from_tokens(rng.integers(0, V, 7))
    totals = [lda_predictive_score(
        state, infer, Document.from_pairs([(w, 1)]), spec)[0]
        for w in range(V)]
    assert np.exp(totals).sum() == pytest.approx(1.0, abs=1e-10)


def test_predictive_empty_scoring_half():
    spec = spec2()
    state = LdaGlobalState.from_params(np.ones((2, 3)))
    infer = Document.from_tokens([0])
    assert lda_predictive_score(state, infer, Document.from_pairs([]),
                                spec) == (0.0, 0)


# -- model plumbing -------------------------------------------------------------


def test_init_state_exact_and_jittered():
    spec = spec2(V=4, eta=0.25)
    model = LdaModel(spec)
    exact = model.init_state(np.random.default_rng(0),
                             from_prior_exactly=True)
    assert np.array_equal(exact.params, np.full((2, 4), 0.25))
    jit = model.init_state(np.random.default_rng(0))
    jit2 = model.init_state(np.random.default_rng(0))
    assert np.array_equal(jit.params, jit2.params)
    assert (jit.params >= 0.25).all() and (jit.params < 0.35).all()
    assert not np.array_equal(jit.params, exact.params)


def test_prior_and_state_blocks_round_trip():
    spec = spec2(V=4)
    model = LdaModel(spec)
    state = LdaGlobalState.from_params(
        np.random.default_rng(8).uniform(0.5, 2.0, (2, 4)))
    blocks = model.state_blocks(state)
    assert set(blocks) == {"topics"}
    assert model.positive_blocks() == frozenset(["topics"])
    rebuilt = model.rebuild_state({"topics": blocks["topics"]})
    assert np.array_equal(rebuilt.params, state.params)
    assert rebuilt.elog_beta == pytest.approx(
        dirichlet_expectation(state.params), abs=0)


def test_global_divergence_closed_form():
    spec = spec2(V=4, eta=0.3)
    model = LdaModel(spec)
    prior_state = LdaGlobalState.from_params(np.full((2, 4), 0.3))
    assert model.global_divergence(prior_state) == pytest.approx(0.0,
                                                                 abs=1e-12)
    params = np.array([[0.5, 1.0, 2.0, 0.3], [4.0, 0.3, 0.6, 1.2]])
    state = LdaGlobalState.from_params(params)
    expected = dirichlet_kl(params, np.full((2, 4), 0.3)).sum()
    assert model.global_divergence(state) == pytest.approx(expected,
                                                           abs=1e-12)


def test_global_divergence_mc_is_unbiased():
    spec = spec2(V=3, eta=0.5)
    model = LdaModel(spec)
    state = LdaGlobalState.from_params(
        np.array([[1.0, 2.0, 0.7], [0.6, 0.9, 1.4]]))
    closed = model.global_divergence(state)
    reps = np.array([
        model.global_divergence(state, mc_draws=600,
                                rng=np.random.default_rng(s))
        for s in range(10)
    ])
    stderr = reps.std(ddof=1) / np.sqrt(reps.size)
    assert abs(reps.mean() - closed) <= 3 * stderr + 1e-9


def test_datum_elbo_matches_explicit_pieces():
    spec = spec2(V=4)
    model = LdaModel(spec)
    doc = Document.from_tokens([0, 0, 3, 2])
    state = LdaGlobalState.from_params(
        np.random.default_rng(9).uniform(0.4, 3.0, (2, 4)))
    local = lda_local_step(doc, state, spec)
    assert model.datum_elbo(doc, state) == pytest.approx(
        lda_doc_elbo(doc, local, state, spec), abs=0)


def test_spec_validation_errors():
    for kwargs in (dict(K=0, V=3), dict(K=2, V=0), dict(K=2, V=3, eta=0.0),
                   dict(K=2, V=3, gamma_doc=-1.0),
                   dict(K=2, V=3, local_tol=0.0),
                   dict(K=2, V=3, local_max_iters=0)):
        with pytest.raises(ValueError):
            LdaSpec(**kwargs)
