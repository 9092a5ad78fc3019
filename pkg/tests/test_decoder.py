import itertools
import math
import random
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from editdecode.core import (
    Constraint,
    ConstraintSet,
    EditWeights,
    Hypothesis,
    SatisfactionState,
    Status,
    ZERO_WEIGHTS,
    contains_phrase,
)
from editdecode.decoder import (
    CandidateNode,
    DecoderConfig,
    DecoderError,
    decode,
    decode_corpus,
    edit_delta,
    expand,
    finish_state,
    group_and_select,
    plain_beam_search,
    prune,
)
from editdecode.scenarios import craftsmen_walkthrough
from editdecode.scorer import BOS, EOS, ScriptedScorer, Vocabulary

from oracle import brute_force_selection, exhaustive_best
from toy import HashedToyScorer, random_constraints

W = EditWeights(0.5, 0.5, 0.5)
P, S, V = Status.PENDING, Status.SATISFIED, Status.VIOLATED


def cset(*constraints, weights=W):
    return ConstraintSet(tuple(constraints), weights)


def root_for(cs):
    return Hypothesis((), 0.0, 0.0, SatisfactionState.initial(cs))


class TestConfig:
    def test_defaults(self):
        cfg = DecoderConfig()
        assert (cfg.beam_size, cfg.fanout, cfg.alpha, cfg.delta) == (20, 20, 400, 0.12)
        assert DecoderConfig(beam_size=3).alpha == 9

    @pytest.mark.parametrize("kw", [{"beam_size": 0}, {"max_len": 0}, {"delta": -1}, {"fanout": 0},
                                    {"length_norm_gamma": -0.5}])
    def test_invalid(self, kw):
        with pytest.raises(DecoderError):
            DecoderConfig(**kw)

    def test_normalize(self):
        cfg = DecoderConfig(length_norm_gamma=0.5)
        assert cfg.normalize(-4.0, 4) == -2.0
        assert cfg.normalize(-4.0, 0) == -4.0


class TestEditDelta:
    def test_insertion_reward_once(self):
        cs = cset(Constraint.insertion("old"))
        d, s = edit_delta("old", ["old", "are"], SatisfactionState.initial(cs), cs)
        assert d == 0.5 and s.statuses == (S,)
        d2, s2 = edit_delta("old", ["old"], s, cs)
        assert d2 == 0.0 and s2.statuses == (S,)

    def test_deletion_sibling_condition(self):
        cs = cset(Constraint.deletion("remain"))
        init = SatisfactionState.initial(cs)
        d, s = edit_delta("are", ["are", "remain", "."], init, cs)
        assert d == 0.0 and s.statuses == (S,)
        d, s = edit_delta("are", ["are", "."], init, cs)
        assert d == 0.0 and s.statuses == (P,)

    def test_deletion_penalty_every_time(self):
        cs = cset(Constraint.deletion("remain"))
        d, s = edit_delta("remain", ["remain", "are"], SatisfactionState.initial(cs), cs)
        assert d == -0.5 and s.statuses == (V,) and s.violations == (1,)
        d, s = edit_delta("remain", ["remain"], s, cs)
        assert d == -0.5 and s.violations == (2,)
        # a later sibling event does not clear the violation
        d, s = edit_delta("are", ["are", "remain"], s, cs)
        assert d == 0.0 and s.statuses == (V,)

    def test_substitution_pairs(self):
        cs = cset(Constraint.substitution("artisans", ["craftsmen"]))
        init = SatisfactionState.initial(cs)
        d, s = edit_delta("craftsmen", ["craftsmen", "artisans", "are"], init, cs)
        assert d == 0.5 and s.statuses == (S,)
        d, s = edit_delta("artisans", ["craftsmen", "artisans", "are"], init, cs)
        assert d == -0.5 and s.statuses == (P,)
        # one half of the pair missing: no reward nor penalty
        assert edit_delta("craftsmen", ["craftsmen", "are"], init, cs)[0] == 0.0
        assert edit_delta("artisans", ["artisans", "are"], init, cs)[0] == 0.0
        assert edit_delta("are", ["craftsmen", "artisans", "are"], init, cs)[0] == 0.0

    def test_substitution_penalty_after_satisfaction(self):
        cs = cset(Constraint.substitution("artisans", ["craftsmen"]))
        _, s = edit_delta("craftsmen", ["craftsmen", "artisans"], SatisfactionState.initial(cs), cs)
        d, s = edit_delta("artisans", ["craftsmen", "artisans"], s, cs)
        assert d == -0.5 and s.statuses == (S,)

    def test_or_group_either_alternative(self):
        cs = cset(Constraint.substitution("garrison", ["defend", "protect"]))
        init = SatisfactionState.initial(cs)
        for alt in ("defend", "protect"):
            d, s = edit_delta(alt, [alt, "garrison"], init, cs)
            assert d == 0.5 and s.statuses == (S,)
        d, _ = edit_delta("garrison", ["garrison", "protect"], init, cs)
        assert d == -0.5

    def test_insert_and_delete_same_token(self):
        w = EditWeights(0.11, 0.66, 0.23)
        cs = cset(Constraint.insertion("old"), Constraint.deletion("old"), weights=w)
        d, s = edit_delta("old", ["old", "are"], SatisfactionState.initial(cs), cs)
        ins = edit_delta("old", ["old", "are"], SatisfactionState.initial(cset(cs[0], weights=w)), cset(cs[0], weights=w))[0]
        dele = edit_delta("old", ["old", "are"], SatisfactionState.initial(cset(cs[1], weights=w)), cset(cs[1], weights=w))[0]
        assert d == pytest.approx(w.lambda_insert - w.lambda_delete, abs=1e-15)
        assert d == pytest.approx(ins + dele, abs=1e-15)
        assert s.statuses == (S, V)

    def test_multi_token_phrase_fires_on_completion(self):
        cs = cset(Constraint.deletion("very hard"))
        s = SatisfactionState.initial(cs)
        d, s = edit_delta("very", ["very", "hard"], s, cs)
        assert d == 0.0 and s.statuses == (P,)
        d, s2 = edit_delta("hard", ["hard", "easy"], s, cs)
        assert d == -0.5
        d, s3 = edit_delta("easy", ["hard", "easy"], s, cs)
        assert d == 0.0 and s3.statuses == (S,)

    def test_finish_marks_unmet_goals(self):
        cs = cset(Constraint.insertion("a"), Constraint.deletion("b"), Constraint.substitution("c", ["d"]))
        s = finish_state(SatisfactionState.initial(cs), cs)
        assert s.statuses == (V, P, V)


def tiny_scorer(table):
    words = sorted({t for row in table.values() for t in row if t != EOS} | {"x"})
    vocab = Vocabulary([BOS, EOS] + words, BOS, EOS)
    return ScriptedScorer.from_probs(vocab, table)


class TestExpand:
    def test_insertion_token_injected(self):
        scorer = tiny_scorer({(): {"a": 0.4, "b": 0.3, "c": 0.2, "old": 0.01}})
        cs = cset(Constraint.insertion("old"))
        nodes = expand(root_for(cs), scorer, cs, DecoderConfig(beam_size=3, fanout=3))
        assert [n.token for n in nodes] == ["a", "b", "c", "old"]
        assert [n.injected for n in nodes] == [False, False, False, True]
        assert nodes[3].edit_delta == 0.5
        assert len({n.sibling_set_id for n in nodes}) == 1
        assert all(n.parent is nodes[0].parent for n in nodes)

    def test_deletion_and_substitution_source_not_injected(self):
        scorer = tiny_scorer({(): {"a": 0.4, "b": 0.3, "c": 0.2, "remain": 0.01, "artisans": 0.01}})
        cs = cset(Constraint.deletion("remain"), Constraint.substitution("artisans", ["b"]))
        nodes = expand(root_for(cs), scorer, cs, DecoderConfig(beam_size=3, fanout=3))
        assert [n.token for n in nodes] == ["a", "b", "c"]
        assert all(n.edit_delta == 0 for n in nodes)

    def test_multi_token_injects_next_needed_token(self):
        scorer = tiny_scorer({(): {"a": 0.5, "b": 0.3, "very": 0.01, "hard": 0.01},
                              ("very",): {"a": 0.5, "b": 0.3, "very": 0.01, "hard": 0.01}})
        cs = cset(Constraint.insertion("very hard"))
        cfg = DecoderConfig(beam_size=2, fanout=2)
        first = expand(root_for(cs), scorer, cs, cfg)
        assert [n.token for n in first] == ["a", "b", "very"]
        second = expand(first[2].to_hypothesis(), scorer, cs, cfg)
        assert [n.token for n in second] == ["a", "b", "hard"]
        assert second[2].edit_delta == 0.5

    def test_finished_cannot_expand(self):
        scorer = tiny_scorer({(): {"a": 0.5}})
        h = Hypothesis((), 0.0, 0.0, SatisfactionState((), (), ()), finished=True)
        with pytest.raises(DecoderError):
            expand(h, scorer, ConstraintSet(), DecoderConfig())


def fake_node(rank, tid, incr, delta, statuses, length=1):
    parent = Hypothesis(("p",) * (length - 1), 0.0, 0.0, SatisfactionState((), (), ()))
    n = CandidateNode(parent, f"t{tid}", tid, incr, delta, SatisfactionState(tuple(statuses), (), ()),
                      rank, rank)
    n.norm = n.logprob / max(1, length)
    return n


class TestPrune:
    def test_delta_gap(self):
        a = fake_node(0, 1, -1.0, 0.5, [])
        b = fake_node(0, 2, -0.5, 0.0, [])
        assert prune([a, b], DecoderConfig(beam_size=2, delta=0.12)) == [a]
        assert set(prune([a, b], DecoderConfig(beam_size=2, delta=2.0))) == {a, b}

    def test_ties_only_alpha(self):
        nodes = [fake_node(0, i, -0.1 * i, 0.25, []) for i in range(6)]
        kept = prune(nodes, DecoderConfig(beam_size=2, fanout=2, alpha=3, delta=0.0))
        assert kept == nodes[:3]

    def test_alpha_then_gap(self):
        # the high-edit node is cut by alpha first, so it cannot raise the floor
        best_edit = fake_node(0, 9, -5.0, 1.0, [])
        others = [fake_node(0, i, -0.1 * i, 0.0, []) for i in range(3)]
        kept = prune(others + [best_edit], DecoderConfig(beam_size=1, fanout=1, alpha=3, delta=0.1))
        assert kept == others

    def test_always_keeps_one(self):
        n = fake_node(0, 1, -1.0, -3.0, [])
        assert prune([n], DecoderConfig(beam_size=1, delta=0.0)) == [n]


class TestGroupAndSelect:
    def test_two_groups_beam_three(self):
        g1 = [fake_node(0, 1, -0.1, 0.5, [S, P]), fake_node(0, 2, -0.2, 0.5, [S, P])]
        g2 = [fake_node(0, 3, -0.05, 0.0, [P, P]), fake_node(0, 4, -0.3, 0.0, [P, P])]
        chosen = group_and_select(g1 + g2, DecoderConfig(beam_size=3))
        assert [n.token_id for n in chosen] == [1, 3, 2]

    def test_single_group_is_sorted_by_edit_then_likelihood(self):
        nodes = [fake_node(0, i, -0.1 * i, (i % 3) * 0.1, [P]) for i in range(6)]
        chosen = group_and_select(nodes, DecoderConfig(beam_size=4))
        assert [n.token_id for n in chosen] == [2, 5, 1, 4]

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 20), st.integers(-20, 0), st.integers(-2, 2),
                              st.lists(st.sampled_from([P, S, V]), min_size=2, max_size=2),
                              st.integers(1, 4)),
                    min_size=1, max_size=25, unique_by=lambda t: (t[0], t[1])),
           st.integers(1, 12))
    def test_matches_brute_force(self, specs, beam):
        pool = [fake_node(r, tid, lp / 4, d / 4, stat, length) for r, tid, lp, d, stat, length in specs]
        got = group_and_select(pool, DecoderConfig(beam_size=beam))
        want = brute_force_selection(pool, beam, lambda n: n.new_sat.n_satisfied, lambda n: n.norm,
                                     lambda n: n.edit_score)
        assert got == want


class TestWalkthrough:
    def test_output_with_and_without_weights(self):
        sc = craftsmen_walkthrough()
        assert decode(sc.source, sc.scorer, sc.constraints, sc.config).text == "craftsmen are old ."
        sc0 = craftsmen_walkthrough(ZERO_WEIGHTS)
        assert decode(sc0.source, sc0.scorer, sc0.constraints, sc0.config).text == "are old ."

    def test_table_weights_also_recover(self):
        sc = craftsmen_walkthrough(EditWeights(0.11, 0.66, 0.23))
        assert decode(sc.source, sc.scorer, sc.constraints, sc.config).text == "craftsmen are old ."

    def test_trace_shape(self):
        sc = craftsmen_walkthrough()
        res = decode(sc.source, sc.scorer, sc.constraints, sc.config, trace=True)
        steps = [r["timestep"] for r in res.trace]
        assert steps == list(range(1, len(steps) + 1))
        assert res.trace[0]["selected"][0]["tokens"] == [BOS]
        t2 = res.trace[1]
        assert [s["tokens"] for s in t2["selected"]] == [["craftsmen"], ["old"], ["are"]]
        assert res.best in res.finished_pool and not res.truncated


class TestReductionAndOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_no_constraints_equals_plain_beam(self, seed):
        rng = random.Random(seed)
        scorer = HashedToyScorer(rng.randint(2, 8), seed)
        cfg = DecoderConfig(beam_size=rng.randint(1, 5), max_len=rng.randint(1, 7))
        a = decode([], scorer, ConstraintSet(), cfg)
        b = plain_beam_search([], scorer, cfg)
        assert a.tokens == b.tokens
        assert a.best.logprob == b.best.logprob
        assert a.truncated == b.truncated

    @pytest.mark.parametrize("seed", range(25))
    def test_full_space_matches_enumeration(self, seed):
        rng = random.Random(1000 + seed)
        scorer = HashedToyScorer(4, seed, eos_boost=0.2)
        cs = random_constraints(rng, scorer.words)
        cfg = DecoderConfig(beam_size=10 ** 6, fanout=len(scorer.vocab), alpha=10 ** 7,
                            delta=math.inf, max_len=4)
        res = decode([], scorer, cs, cfg)
        (edit, norm), seq = exhaustive_best([], scorer, cs, 4)
        assert res.tokens == list(seq)
        assert res.best.edit_score == pytest.approx(edit, abs=1e-12)
        assert cfg.normalize(res.best.logprob, res.best.length) == pytest.approx(norm, abs=1e-12)

    def test_plain_beam_one_is_greedy(self):
        scorer = HashedToyScorer(5, 3)
        res = plain_beam_search([], scorer, DecoderConfig(beam_size=1, max_len=8))
        prefix = []
        mask = scorer.vocab.generatable()
        while True:
            row = np.where(mask, scorer.score_next([], prefix), -np.inf)
            tok = scorer.vocab.token(int(np.argmax(row)))
            if tok == EOS or len(prefix) == 8:
                break
            prefix.append(tok)
        assert res.tokens == prefix

    def test_plain_beam_full_space_matches_enumeration(self):
        scorer = HashedToyScorer(3, 11, eos_boost=0.3)
        res = plain_beam_search([], scorer, DecoderConfig(beam_size=10 ** 5, max_len=4))
        (_, norm), seq = exhaustive_best([], scorer, ConstraintSet(), 4)
        assert res.tokens == list(seq)


class TestBookkeeping:
    @pytest.mark.parametrize("seed", range(10))
    def test_edit_score_is_sum_of_path_deltas(self, seed):
        rng = random.Random(seed)
        scorer = HashedToyScorer(6, seed)
        cs = random_constraints(rng, scorer.words, n_max=5)
        res = decode([], scorer, cs, DecoderConfig(beam_size=4, max_len=6), trace=True)
        for h in res.finished_pool:
            path = h.path()
            assert abs(sum(x.step_delta for x in path) - h.edit_score) <= 1e-12
            assert all(b.logprob <= a.logprob for a, b in zip(path, path[1:]))
        for rec in res.trace[1:]:
            for exp in rec["expansions"]:
                for node in exp["nodes"]:
                    assert abs(sum(e["score"] for e in node["events"]) - node["edit_delta"]) <= 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_substitution_reward_has_paired_sibling(self, seed):
        rng = random.Random(50 + seed)
        scorer = HashedToyScorer(4, seed)
        cs = ConstraintSet((Constraint.substitution((scorer.words[0],), [(scorer.words[1],)]),
                            Constraint.substitution((scorer.words[2], scorer.words[3]), [(scorer.words[1],)])),
                           W)
        res = decode([], scorer, cs, DecoderConfig(beam_size=3, max_len=6), trace=True)
        for rec in res.trace[1:]:
            for exp in rec["expansions"]:
                tokens = [n["token"] for n in exp["nodes"]]
                for node in exp["nodes"]:
                    for ev in node["events"]:
                        if ev["kind"] == "subst" and ev["event"] == "reward":
                            src = cs[ev["constraint"]].subst_from
                            assert any(t != node["token"] and contains_phrase(exp["prefix"] + [t], src)
                                       and tuple(exp["prefix"] + [t])[-len(src):] == src for t in tokens)

    def test_some_substitution_rewards_occur(self):
        hits = 0
        for seed in range(10):
            scorer = HashedToyScorer(4, seed)
            cs = ConstraintSet((Constraint.substitution((scorer.words[0],), [(scorer.words[1],)]),), W)
            res = decode([], scorer, cs, DecoderConfig(beam_size=3, max_len=6), trace=True)
            hits += any(ev["event"] == "reward" for rec in res.trace[1:] for exp in rec["expansions"]
                        for n in exp["nodes"] for ev in n["events"])
        assert hits > 0


class TestReachability:
    def test_injected_insertion_reaches_output(self):
        # "z" is never among the natural candidates, yet a positive weight puts it in the output
        table = {}
        words = ["a", "b", "c", "z"]
        for n in range(5):
            for prefix in itertools.product(words, repeat=n):
                table[prefix] = {"a": 0.35, "b": 0.3, "c": 0.15, "z": 0.001, EOS: 0.1 + 0.02 * n}
        vocab = Vocabulary([BOS, EOS] + words, BOS, EOS)
        scorer = ScriptedScorer.from_probs(vocab, table)
        cfg = DecoderConfig(beam_size=2, fanout=2, max_len=4)
        cs = cset(Constraint.insertion("z"), weights=EditWeights(0.05, 0, 0))
        assert "z" in decode([], scorer, cs, cfg).tokens
        assert "z" not in decode([], scorer, cs.with_weights(ZERO_WEIGHTS), cfg).tokens


class TestMisc:
    def test_unreachable_constraint_warns(self):
        scorer = HashedToyScorer(3, 0)
        cs = cset(Constraint.insertion("nowhere"), Constraint.deletion("w0"))
        with pytest.warns(UserWarning, match="never be satisfied"):
            res = decode([], scorer, cs, DecoderConfig(beam_size=2, max_len=3))
        assert res.unreachable == [0]

    def test_truncated_flag(self):
        scorer = HashedToyScorer(3, 1, eos_boost=-50)
        res = decode([], scorer, ConstraintSet(), DecoderConfig(beam_size=2, max_len=3))
        assert res.truncated and len(res.tokens) == 3 and not res.finished_pool

    def test_casefold(self):
        scorer = tiny_scorer({(): {"Old": 0.5, "a": 0.3}})
        cs = cset(Constraint.insertion("old"))
        root = root_for(cs)
        strict = expand(root, scorer, cs, DecoderConfig(beam_size=1, fanout=1))
        folded = expand(root, scorer, cs, DecoderConfig(beam_size=1, fanout=1, casefold=True))
        assert strict[0].token == "Old" and strict[0].edit_delta == 0.0
        assert folded[0].token == "Old" and folded[0].edit_delta == 0.5

    def test_corpus_parallel_equals_sequential(self):
        scorer = HashedToyScorer(5, 4)
        rng = random.Random(4)
        sources = [[f"s{i}"] for i in range(6)]
        sets = [random_constraints(rng, scorer.words) for _ in sources]
        sets[2] = None
        cfg = DecoderConfig(beam_size=3, max_len=5)
        seq = decode_corpus(sources, scorer, sets, cfg)
        par = decode_corpus(sources, scorer, sets, cfg, workers=2)
        assert [r.tokens for r in seq] == [r.tokens for r in par]
        assert [r.best.edit_score for r in seq] == [r.best.edit_score for r in par]

    def test_corpus_misaligned(self):
        with pytest.raises(DecoderError):
            decode_corpus([["a"]], HashedToyScorer(2, 0), [], DecoderConfig())

    def test_deterministic(self):
        scorer = HashedToyScorer(6, 9)
        cs = random_constraints(random.Random(9), scorer.words)
        cfg = DecoderConfig(beam_size=4, max_len=6)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = decode([], scorer, cs, cfg, trace=True)
            b = decode([], scorer, cs, cfg, trace=True)
        assert a.tokens == b.tokens and a.trace == b.trace
