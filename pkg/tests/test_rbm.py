import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbmducc.errors import DivergenceError, EmptyTrainingError
from rbmducc.generators import Configuration
from rbmducc.rbm import (
    GenerationFilter,
    RbmHyper,
    RbmModel,
    TrainingSet,
    bits_to_vectors,
    conditional_hidden,
    conditional_visible,
    exact_marginals,
    free_energy,
    generate,
    gibbs_chains,
    tower_sample,
    train_cd,
    vectors_to_bits,
)


def random_model(nv, nh, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return RbmModel(rng.normal(scale=scale, size=(nh, nv)), rng.normal(scale=scale, size=nv),
                    rng.normal(scale=scale, size=nh))


def brute_force_marginal(model):
    """``p(v)`` from the joint energy summed over every hidden configuration."""
    nv, nh = model.n_visible, model.n_hidden
    vs = np.array(list(itertools.product([0.0, 1.0], repeat=nv)))[:, ::-1]
    hs = np.array(list(itertools.product([0.0, 1.0], repeat=nh)))
    # -E(v,h) = h W v + c.h + b.v
    neg_e = hs @ model.W @ vs.T + (hs @ model.c)[:, None] + (vs @ model.b)[None, :]
    joint = np.exp(neg_e - neg_e.max())
    p = joint.sum(axis=0)
    p = p / p.sum()
    order = vectors_to_bits(vs)
    out = np.empty_like(p)
    out[order] = p
    return out


def kl_on_support(bits, probs, model):
    m = exact_marginals(model)[bits]
    m = m / m.sum()
    return float(np.sum(probs * np.log(probs / m)))


class TestClosedForms:
    def test_zero_model_uniform(self):
        model = RbmModel.zeros(4, 3)
        v = bits_to_vectors(np.arange(16), 4)
        np.testing.assert_allclose(free_energy(model, v), -3 * np.log(2), atol=1e-14)

    def test_visible_bias(self):
        model = RbmModel.zeros(1, 1)
        model.b[0] = 1.0
        assert free_energy(model, np.array([1.0])) - free_energy(model, np.array([0.0])) == pytest.approx(-1.0)

    @pytest.mark.parametrize("nv,nh,seed", [(3, 2, 0), (4, 4, 1), (6, 6, 2), (5, 7, 3), (2, 10, 4)])
    def test_marginals_match_enumeration(self, nv, nh, seed):
        model = random_model(nv, nh, seed)
        np.testing.assert_allclose(exact_marginals(model), brute_force_marginal(model), atol=1e-10)

    def test_conditional_hidden(self):
        assert np.all(conditional_hidden(RbmModel.zeros(3, 2), np.ones(3)) == 0.5)
        model = RbmModel.zeros(2, 1)
        model.c[0] = 50.0
        assert conditional_hidden(model, np.zeros(2))[0] == pytest.approx(1.0)

    def test_conditional_hidden_matches_ratio(self):
        model = random_model(3, 2, 9)
        v = np.array([1.0, 0.0, 1.0])
        hs = np.array(list(itertools.product([0.0, 1.0], repeat=2)))
        w = np.exp(hs @ model.W @ v + hs @ model.c)
        p = w / w.sum()
        marg = np.array([p[hs[:, i] == 1].sum() for i in range(2)])
        np.testing.assert_allclose(conditional_hidden(model, v), marg, atol=1e-12)
        h = np.array([1.0, 0.0])
        vs = bits_to_vectors(np.arange(8), 3)
        wv = np.exp(vs @ model.W.T @ h + vs @ model.b)
        pv = wv / wv.sum()
        margv = np.array([pv[vs[:, j] == 1].sum() for j in range(3)])
        np.testing.assert_allclose(conditional_visible(model, h), margv, atol=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            RbmModel(np.zeros((2, 3)), np.zeros(2), np.zeros(2))
        with pytest.raises(DivergenceError):
            RbmModel(np.full((1, 1), np.nan), np.zeros(1), np.zeros(1))

    def test_serialization(self, tmp_path):
        model = random_model(4, 3, 5)
        model.save(tmp_path / "m.json")
        back = RbmModel.load(tmp_path / "m.json")
        np.testing.assert_array_equal(back.W, model.W)
        np.testing.assert_array_equal(back.b, model.b)
        np.testing.assert_array_equal(back.c, model.c)

    @given(st.lists(st.integers(0, 63), min_size=1, max_size=20))
    def test_bit_vector_round_trip(self, bits):
        np.testing.assert_array_equal(vectors_to_bits(bits_to_vectors(bits, 6)), bits)


class TestTrainingSet:
    def test_reference_excluded(self):
        ts = TrainingSet(4, reference_bits=0b0011)
        with pytest.raises(ValueError):
            ts.add(0b0011, 0.5)
        ts = TrainingSet.from_configurations([Configuration(0b0011, 4, 0.5), Configuration(0b0101, 4, 0.2)],
                                             4, reference_bits=0b0011)
        assert ts.bits == [0b0101]

    def test_normalize(self):
        ts = TrainingSet(4, [1, 2, 4], [0.2, 0.3, 0.1]).normalize()
        assert ts.normalized
        assert sum(ts.probabilities) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyTrainingError):
            TrainingSet(3).normalize()

    def test_negative_and_duplicate(self):
        with pytest.raises(ValueError):
            TrainingSet(3, [1], [-0.1])
        ts = TrainingSet(3, [1], [0.1])
        with pytest.raises(ValueError):
            ts.add(1, 0.2)

    def test_round_trip(self):
        ts = TrainingSet(4, [1, 2], [0.25, 0.75], reference_bits=3, normalized=True)
        assert TrainingSet.from_dict(ts.to_dict()) == ts


class TestTowerSampling:
    def test_frequencies(self):
        rng = np.random.default_rng(0)
        p = np.array([0.7, 0.2, 0.1])
        idx = tower_sample(p, 100_000, rng)
        np.testing.assert_allclose(np.bincount(idx, minlength=3) / 100_000, p, atol=0.01)

    def test_zero_weight_never_drawn(self):
        idx = tower_sample(np.array([0.0, 1.0, 0.0]), 1000, np.random.default_rng(1))
        assert set(idx.tolist()) == {1}


class TestTraining:
    def test_zero_learning_rate(self):
        model = RbmModel.initialize(4, RbmHyper(seed=3))
        data = TrainingSet(4, [3, 5], [0.5, 0.5]).normalize()
        out = train_cd(model, data, RbmHyper(learning_rate=0.0, epochs=20, seed=1))
        np.testing.assert_array_equal(out.W, model.W)
        np.testing.assert_array_equal(out.b, model.b)
        np.testing.assert_array_equal(out.c, model.c)

    def test_single_vector_becomes_argmax(self):
        target = 0b101001
        model = RbmModel.initialize(6, RbmHyper(seed=0))
        data = TrainingSet(6, [target], [1.0]).normalize()
        out = train_cd(model, data, RbmHyper(epochs=300, learning_rate=0.1, seed=4))
        assert int(np.argmax(exact_marginals(out))) == target

    def test_reproducible(self):
        data = TrainingSet(5, [3, 12, 17], [0.5, 0.3, 0.2]).normalize()
        model = RbmModel.initialize(5, RbmHyper(seed=2))
        a = train_cd(model, data, RbmHyper(epochs=50, seed=8))
        b = train_cd(model, data, RbmHyper(epochs=50, seed=8))
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.b, b.b)
        np.testing.assert_array_equal(a.c, b.c)
        # input left untouched
        np.testing.assert_array_equal(model.W, RbmModel.initialize(5, RbmHyper(seed=2)).W)

    def test_support_kl_decreases(self):
        """Seed-averaged support KL at checkpoints every 500 epochs of CD-5."""
        bits = np.array([0b000111, 0b011001])
        probs = np.array([0.7, 0.3])
        data = TrainingSet(6, bits.tolist(), probs.tolist()).normalize()
        rows = []
        for seed in range(5):
            model = RbmModel.initialize(6, RbmHyper(seed=seed))
            row = [kl_on_support(bits, probs, model)]
            for seg in range(4):
                model = train_cd(model, data, RbmHyper(epochs=500, cd_k=5, seed=1000 * seed + seg))
                row.append(kl_on_support(bits, probs, model))
            rows.append(row)
        mean = np.mean(rows, axis=0)
        assert mean[-1] < mean[0]
        # the dominant vector is learned first; afterwards the ratio relaxes monotonically
        peak = int(np.argmax(mean))
        assert np.all(np.diff(mean[peak:]) < 0)

    def test_cd1_full_kl_decreases(self):
        bits = np.array([0b000111, 0b011001])
        probs = np.array([0.7, 0.3])
        data = TrainingSet(6, bits.tolist(), probs.tolist()).normalize()
        before, after = [], []
        for seed in range(5):
            model = RbmModel.initialize(6, RbmHyper(seed=seed))
            before.append(np.sum(probs * np.log(probs / exact_marginals(model)[bits])))
            model = train_cd(model, data, RbmHyper(epochs=400, seed=100 + seed))
            after.append(np.sum(probs * np.log(probs / exact_marginals(model)[bits])))
        assert np.mean(after) < np.mean(before)

    def test_requires_normalized(self):
        with pytest.raises(ValueError):
            train_cd(RbmModel.zeros(3), TrainingSet(3, [1], [1.0]))
        with pytest.raises(EmptyTrainingError):
            train_cd(RbmModel.zeros(3), TrainingSet(3, normalized=True))

    def test_divergence(self):
        model = RbmModel.initialize(4, RbmHyper(seed=0))
        data = TrainingSet(4, [3], [1.0]).normalize()
        with pytest.raises(DivergenceError):
            with np.errstate(over="ignore", invalid="ignore"):
                train_cd(model, data, RbmHyper(learning_rate=1e308, epochs=5, seed=0))


class TestGibbs:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_chain_matches_marginal(self, seed):
        model = random_model(4, 3, 20 + seed, scale=0.8)
        rng = np.random.default_rng(seed)
        samples = gibbs_chains(model, np.zeros((50, 4)), 800, rng, burn_in=100)
        emp = np.bincount(vectors_to_bits(samples), minlength=16) / samples.shape[0]
        tv = 0.5 * np.abs(emp - exact_marginals(model)).sum()
        assert tv < 0.05


class TestGenerate:
    def test_impossible_filter(self):
        model = RbmModel.initialize(4, RbmHyper(seed=0))
        out = generate(model, 500, 10, 0, GenerationFilter(n_electrons=5))
        assert out == []

    def test_point_mass_double_yields_no_triples(self):
        ref = 0b0000011111
        double = ref ^ 0b0000000011 ^ 0b0001100000
        model = RbmModel.initialize(10, RbmHyper(seed=0))
        data = TrainingSet(10, [double], [1.0], reference_bits=ref).normalize()
        model = train_cd(model, data, RbmHyper(epochs=500, learning_rate=0.1, seed=1))
        filt = GenerationFilter(n_electrons=5, min_rank=3, reference_bits=ref)
        out = generate(model, 2000, 50, 3, filt, init=data)
        assert out == []
        near = generate(model, 2000, 50, 3, GenerationFilter(n_electrons=5, reference_bits=ref), init=data)
        assert near[0].bits == double

    def test_samples_pass_filters(self):
        model = random_model(8, 8, 3, scale=0.3)
        filt = GenerationFilter(n_electrons=4, ms2=0, min_rank=1, reference_bits=0b00110011, n_spatial=4)
        out = generate(model, 3000, 20, 5, filt)
        assert out
        for cfg in out:
            assert filt.accepts(cfg.bits)
            assert cfg.n_particles == 4 and cfg.ms2(4) == 0
        assert [c.probability for c in out] == sorted((c.probability for c in out), reverse=True)

    def test_seeded(self):
        model = random_model(6, 6, 4, scale=0.5)
        filt = GenerationFilter(n_electrons=3)
        assert generate(model, 1000, 10, 9, filt) == generate(model, 1000, 10, 9, filt)
