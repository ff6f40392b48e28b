import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import system
from rbmducc.ansatz import (
    AnsatzFactor,
    OrderedAnsatz,
    build_conventional,
    build_duccsd_pool,
    determinant_of,
    enumerate_excitations,
    excitation_rank,
    factorization_candidates,
    factorize_high_rank,
    insert_scatterer,
    reorder_by_probability,
    target_excitation,
)
from rbmducc.errors import AmbiguityError, PairingError, RankError, SectorError
from rbmducc.generators import Configuration, Generator
from rbmducc.integrals import mp2_amplitude, scatterer_mp2_measure
from rbmducc.oracle import dense_generator, verify_factorization
from rbmducc.qubit_map import number_operator, sz_operator


def _configs(ansatz, occ, probs):
    return [Configuration(determinant_of(g, occ), occ.n_spin, p) for g, p in zip(ansatz.generators, probs)]


class TestPool:
    def test_infinite_threshold_singles_only(self, h4):
        pool = build_duccsd_pool(h4.occ, h4.ints, np.inf)
        assert pool.count(rank=2) == 0
        assert pool.count(rank=1) == len(enumerate_excitations(h4.occ, 1))

    def test_zero_threshold_keeps_allowed_doubles(self, h4):
        pool = build_duccsd_pool(h4.occ, h4.ints, 0.0)
        nonzero = [d for d in enumerate_excitations(h4.occ, 2)
                   if abs(mp2_amplitude(h4.ints, h4.occ, d.destructions, d.creations)) > 0.0]
        assert pool.count(rank=2) == len(nonzero)
        assert build_duccsd_pool(h4.occ, h4.ints, None).count(rank=2) == len(enumerate_excitations(h4.occ, 2))

    def test_h2_pool(self, h2):
        pool = build_duccsd_pool(h2.occ, h2.ints, 1e-5)
        assert pool.count(rank=2) == 1
        assert pool.count(rank=1) == 2
        assert pool.generators[0].rank == 2

    def test_negative_threshold(self, h2):
        with pytest.raises(ValueError):
            build_duccsd_pool(h2.occ, h2.ints, -1.0)

    @pytest.mark.parametrize("asset", ["h2_0.735", "h4_1", "bh_2.25"])
    def test_conserves_number_and_sz(self, asset):
        s = system(asset)
        n_op = number_operator(s.occ.n_spin).to_sparse()
        sz = sz_operator(s.occ.n_spatial).to_sparse()
        pool = build_duccsd_pool(s.occ, s.ints, 1e-5)
        for g in pool.generators[:30]:
            d = dense_generator(g, s.occ.n_spin).matrix
            for m in (n_op, sz):
                c = d @ m - m @ d
                assert c.nnz == 0 or abs(c).max() <= 1e-12

    def test_conventional_order(self, h4):
        ans = build_conventional(h4.occ, 3)
        ranks = [g.rank for g in ans.generators]
        assert ranks == sorted(ranks, reverse=True)


class TestReorder:
    def test_descending_and_screened(self, h4):
        pool = build_duccsd_pool(h4.occ, h4.ints, 1e-5)
        rng = np.random.default_rng(3)
        probs = rng.random(len(pool)) * 1e-3
        probs[0] = 1e-6
        out = reorder_by_probability(pool, _configs(pool, h4.occ, probs), 1e-5, h4.occ)
        assert pool.generators[0] not in out.generators
        doubles = [f.probability for f in out if f.generator.rank == 2]
        singles = [f.probability for f in out if f.generator.rank == 1]
        assert doubles == sorted(doubles, reverse=True)
        assert singles == sorted(singles, reverse=True)
        assert all(f.generator.rank == 2 for f in out.factors[: len(doubles)])

    def test_ties_are_lexicographic(self, h4):
        pool = build_duccsd_pool(h4.occ, h4.ints, 1e-5)
        out = reorder_by_probability(pool, _configs(pool, h4.occ, [0.01] * len(pool)), 1e-5, h4.occ)
        doubles = [g for g in out.generators if g.rank == 2]
        assert doubles == sorted(doubles, key=lambda g: g.sort_key())

    def test_shuffle_invariant_and_idempotent(self, h4):
        pool = build_duccsd_pool(h4.occ, h4.ints, 1e-5)
        probs = np.random.default_rng(5).random(len(pool))
        configs = _configs(pool, h4.occ, probs)
        first = reorder_by_probability(pool, configs, 1e-5, h4.occ)
        doubles = [f for f in pool.factors if f.generator.rank == 2]
        singles = [f for f in pool.factors if f.generator.rank == 1]
        random.Random(0).shuffle(doubles)
        random.Random(1).shuffle(singles)
        shuffled = OrderedAnsatz(tuple(doubles + singles))
        again = reorder_by_probability(shuffled, list(reversed(configs)), 1e-5, h4.occ)
        assert again.generators == first.generators
        assert reorder_by_probability(first, configs, 1e-5, h4.occ).generators == first.generators

    def test_missing_config_removed(self, h2):
        pool = build_duccsd_pool(h2.occ, h2.ints, 1e-5)
        out = reorder_by_probability(pool, [], 1e-5, h2.occ)
        assert len(out) == 0

    def test_singles_kept_when_unscreened(self, h2):
        pool = build_duccsd_pool(h2.occ, h2.ints, 1e-5)
        out = reorder_by_probability(pool, [], 1e-5, h2.occ, screen_singles=False)
        assert out.count(rank=1) == 2 and out.count(rank=2) == 0

    def test_ambiguous_mapping(self, h2):
        # two generators reaching one determinant through index order
        a = OrderedAnsatz.from_generators([Generator.excitation((0, 2), (1, 3))])
        b = Generator.excitation((2, 0), (1, 3))
        dup = OrderedAnsatz(a.factors + (AnsatzFactor(b),))
        with pytest.raises(AmbiguityError):
            reorder_by_probability(dup, [], 0.0, h2.occ)

    def test_scatterers_travel_with_double(self, h4):
        d1 = Generator.excitation((0, 4), (2, 6))
        d2 = Generator.excitation((1, 5), (3, 7))
        s = Generator.scatterer((3, 0), (1, 5))
        ans = insert_scatterer(OrderedAnsatz.from_generators([d1, d2]), s, d1)
        configs = _configs(OrderedAnsatz.from_generators([d1, d2]), h4.occ, [0.1, 0.5])
        out = reorder_by_probability(ans, configs, 1e-5, h4.occ)
        assert out.generators == [d2, d1, s]


class TestRank:
    @pytest.mark.parametrize("config,ref,rank", [
        (0b0101, 0b0101, 0),
        (0b0110, 0b0101, 1),
        (0b1111100000, 0b0000011111, 5),
        (0b0011100011, 0b0000011111, 3),
    ])
    def test_rank(self, config, ref, rank):
        assert excitation_rank(config, ref) == rank

    def test_sector_mismatch(self):
        with pytest.raises(SectorError):
            excitation_rank(0b111, 0b011)

    @given(st.permutations(range(10)), st.integers(0, 5))
    @settings(max_examples=50)
    def test_matches_bit_diff(self, perm, k):
        ref = 0b0000011111
        holes = [p for p in perm if p < 5][:k]
        parts = [p for p in perm if p >= 5][:k]
        bits = ref
        for h, p in zip(holes, parts):
            bits ^= (1 << h) | (1 << p)
        assert excitation_rank(Configuration(bits, 10), Configuration(ref, 10)) == k


class TestFactorize:
    def test_rank_error(self, h4):
        ans = build_duccsd_pool(h4.occ, h4.ints, 1e-5)
        with pytest.raises(RankError):
            factorize_high_rank(determinant_of(ans.generators[0], h4.occ), ans, h4.ints, h4.occ, 1e-6)

    def test_no_contraction(self, bh):
        occ = bh.occ  # occupied (0,1,5,6)
        target = determinant_of(Generator.excitation((0, 1, 5), (2, 3, 7)), occ)
        # neither index set of the double nests inside the target's
        ans = OrderedAnsatz.from_generators([Generator.excitation((1, 6), (4, 9))])
        assert factorization_candidates(target, ans, bh.ints, occ) == []
        assert factorize_high_rank(target, ans, bh.ints, occ, 0.0) is None
        assert factorize_high_rank(target, OrderedAnsatz(), bh.ints, occ, 0.0) is None

    def test_selects_largest_measure(self, h4):
        occ = h4.occ
        pool = build_duccsd_pool(occ, h4.ints, 0.0)
        found = False
        for tgt in enumerate_excitations(occ, 3):
            bits = determinant_of(tgt, occ)
            cands = factorization_candidates(bits, pool, h4.ints, occ)
            if len(cands) < 2 or cands[0].measure == 0.0:
                continue
            oracle = [scatterer_mp2_measure(h4.ints, occ, c.scatterers[0]) for c in cands]
            best = factorize_high_rank(bits, pool, h4.ints, occ, 0.0)
            assert best is not None
            assert best.measure == pytest.approx(max(oracle), abs=1e-14)
            found = True
        assert found

    def test_threshold_drops(self, h4):
        occ = h4.occ
        pool = build_duccsd_pool(occ, h4.ints, 0.0)
        for tgt in enumerate_excitations(occ, 3):
            bits = determinant_of(tgt, occ)
            cands = factorization_candidates(bits, pool, h4.ints, occ)
            if cands and cands[0].measure > 0:
                m = cands[0].measure
                assert factorize_high_rank(bits, pool, h4.ints, occ, m) is None
                got = factorize_high_rank(bits, pool, h4.ints, occ, m * 0.999)
                assert got.measure == m
                return
        pytest.fail("no factorizable triple on H4")

    @pytest.mark.parametrize("asset,rank", [("h4_1", 3), ("bh_2.25", 3), ("bh_2.25", 4)])
    def test_every_candidate_passes_oracle(self, asset, rank):
        s = system(asset)
        occ = s.occ
        pool = build_duccsd_pool(occ, s.ints, 0.0)
        checked = 0
        for tgt in enumerate_excitations(occ, rank):
            bits = determinant_of(tgt, occ)
            for c in factorization_candidates(bits, pool, s.ints, occ):
                lam = verify_factorization(list(c.scatterers), c.double, target_excitation(bits, occ), occ.n_spin)
                assert lam is not None
                assert abs(abs(lam) - 1.0) <= 1e-10
                assert lam == pytest.approx(c.coupling, abs=1e-10)
                assert len(c.scatterers) == rank - 2
                checked += 1
        assert checked > 0

    def test_quadruple_unreachable_on_h4(self, h4):
        # every occupied orbital is a hole of the quadruple, so no scatterer can finish the chain
        pool = build_duccsd_pool(h4.occ, h4.ints, 0.0)
        for tgt in enumerate_excitations(h4.occ, 4):
            assert factorization_candidates(determinant_of(tgt, h4.occ), pool, h4.ints, h4.occ) == []


class TestInsert:
    def _base(self):
        d1 = Generator.excitation((0, 4), (2, 6))
        d2 = Generator.excitation((1, 5), (3, 7))
        s1 = Generator.excitation((0,), (2,))
        return OrderedAnsatz.from_generators([d1, d2, s1]), d1, d2, s1

    def test_one(self):
        ans, d1, d2, _ = self._base()
        sc = Generator.scatterer((3, 0), (1, 5))
        out = insert_scatterer(ans, sc, 0)
        assert len(out) == len(ans) + 1
        assert out.generators[1] == sc
        assert out.pairing == {1: 0}

    def test_two_stack_in_order(self):
        ans, d1, d2, _ = self._base()
        a = Generator.scatterer((3, 0), (1, 5))
        b = Generator.scatterer((7, 4), (1, 5))
        out = insert_scatterer(insert_scatterer(ans, a, d1), b, d1)
        assert out.generators[:3] == [d1, a, b]
        assert out.pairing == {1: 0, 2: 0}

    def test_duplicate_on_same_double_skipped(self):
        ans, d1, _, _ = self._base()
        a = Generator.scatterer((3, 0), (1, 5))
        once = insert_scatterer(ans, a, d1)
        assert insert_scatterer(once, a, d1) == once

    def test_same_scatterer_on_two_doubles(self):
        ans, d1, d2, _ = self._base()
        a = Generator.scatterer((3, 0), (1, 5))
        out = insert_scatterer(insert_scatterer(ans, a, d1), a, d2)
        assert out.scatterers == [a, a]
        assert out.keys[1] == (a, d1) and out.keys[3] == (a, d2)
        assert OrderedAnsatz.from_json(out.to_json()) == out

    def test_single_slot_rejected(self):
        ans, _, _, s1 = self._base()
        with pytest.raises(PairingError):
            insert_scatterer(ans, Generator.scatterer((3, 0), (1, 5)), s1)

    def test_invalid_layout_rejected(self):
        d = Generator.excitation((0, 4), (2, 6))
        s = Generator.scatterer((3, 0), (1, 5))
        with pytest.raises(PairingError):
            OrderedAnsatz((AnsatzFactor(s, paired_with=d), AnsatzFactor(d)))
        with pytest.raises(ValueError):
            OrderedAnsatz.from_generators([Generator.excitation((0,), (2,)), d])
