import numpy as np
import pytest

from hyperpred import autodiff as ad
from hyperpred.errors import DomainError, ParameterError
from hyperpred.generator import (
    GUIDANCE_PARAMS,
    GeneratorParams,
    GeneratorShape,
    decode_membership,
    encode_positive,
    generate,
    generate_batch,
    membership_indicator,
    select_topn,
)
from hyperpred.gradcheck import MODULE_CASES, check_case
from hyperpred.sampler import SizeDistribution


@pytest.fixture(params=[7, 20])
def gen(request):
    shape = GeneratorShape(num_nodes=request.param, channels=4, latent_dim=5, noise_dim=3)
    return GeneratorParams.init(shape, np.random.default_rng(0))


def indicator(nodes, n):
    return membership_indicator([nodes], n)[0]


def test_latent_shape_and_determinism(gen):
    x = indicator((0, 2, 3), gen.shape.num_nodes)
    q1, q2 = encode_positive(x, gen), encode_positive(x, gen)
    assert q1.shape == (gen.shape.latent_dim,)
    np.testing.assert_array_equal(q1.data, q2.data)


def test_disjoint_positives_get_different_latents(gen):
    n = gen.shape.num_nodes
    qa = encode_positive(indicator((0, 1), n), gen).data
    qb = encode_positive(indicator((n - 2, n - 1), n), gen).data
    assert not np.allclose(qa, qb)


@pytest.mark.parametrize("bad", [np.zeros(7), np.full(7, 0.5)])
def test_encode_rejects_bad_indicator(bad):
    gen = GeneratorParams.init(GeneratorShape(7, 4, 5, 3), np.random.default_rng(0))
    with pytest.raises(DomainError):
        encode_positive(bad, gen)


def test_membership_in_open_unit_interval(gen):
    q = encode_positive(indicator((1, 2), gen.shape.num_nodes), gen)
    c = decode_membership(q, np.random.default_rng(0).normal(size=3), gen)
    assert c.shape == (gen.shape.num_nodes,)
    assert np.all((c.data > 0) & (c.data < 1))


def test_noise_changes_membership(gen):
    q = encode_positive(indicator((1, 2), gen.shape.num_nodes), gen)
    rng = np.random.default_rng(1)
    outs = [decode_membership(q, rng.normal(size=3), gen).data for _ in range(10)]
    assert all(not np.array_equal(outs[0], o) for o in outs[1:])


def test_decode_deterministic(gen):
    q = encode_positive(indicator((1, 2), gen.shape.num_nodes), gen)
    z = np.ones(3)
    np.testing.assert_array_equal(decode_membership(q, z, gen).data, decode_membership(q, z, gen).data)


def test_batched_decode_matches_single(gen):
    n = gen.shape.num_nodes
    pos = [(0, 1, 2), (3, 4)]
    z = np.random.default_rng(2).normal(size=(2, 3))
    batch = decode_membership(encode_positive(membership_indicator(pos, n), gen), z, gen).data
    for b, e in enumerate(pos):
        single = decode_membership(encode_positive(indicator(e, n), gen), z[b], gen).data
        np.testing.assert_allclose(batch[b], single, atol=1e-12)


@pytest.mark.parametrize(
    "c, n, floor, expected",
    [([0.9, 0.1, 0.8, 0.3], 2, 2, (0, 2)), ([0.5, 0.5, 0.2], 1, 1, (0,)), ([0.2, 0.4, 0.1], 3, 2, (0, 1, 2))],
)
def test_select_topn(c, n, floor, expected):
    assert select_topn(c, n, min_size=floor) == expected


@pytest.mark.parametrize("n", [1, 5])
def test_select_topn_bounds(n):
    with pytest.raises(ParameterError):
        select_topn([0.1, 0.2, 0.3, 0.4], n)


def test_generate_size_contract_and_determinism(gen):
    sizes = SizeDistribution.from_sizes([2, 3, 3, 4])
    e1, c1 = generate((0, 1, 2), gen, np.random.default_rng(5), sizes)
    e2, c2 = generate((0, 1, 2), gen, np.random.default_rng(5), sizes)
    assert e1 == e2
    assert c1.shape == (gen.shape.num_nodes,)
    negs, _ = generate_batch([(0, 1)] * 40, gen, np.random.default_rng(6), sizes)
    assert {len(e) for e in negs} <= {2, 3, 4}


def test_membership_does_not_depend_on_n(gen):
    """Sizes are drawn before the noise, so c is the same whatever n comes out."""
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    _, ca = generate((0, 1), gen, rng_a, SizeDistribution.from_sizes([2]))
    _, cb = generate((0, 1), gen, rng_b, SizeDistribution.from_sizes([3]))
    np.testing.assert_array_equal(ca.data, cb.data)


def test_ablated_guidance_ignores_positive(gen):
    gen.ablate_guidance()
    n = gen.shape.num_nodes
    z = np.random.default_rng(0).normal(size=3)
    ca = decode_membership(encode_positive(indicator((0, 1), n), gen), z, gen).data
    cb = decode_membership(encode_positive(indicator((n - 3, n - 1), n), gen), z, gen).data
    np.testing.assert_array_equal(ca, cb)
    assert not set(GUIDANCE_PARAMS) & set(gen.trainable())


def test_every_generator_parameter_receives_gradient(gen):
    n = gen.shape.num_nodes
    x = membership_indicator([(0, 1, 2), (1, 4)], n)
    z = np.random.default_rng(0).normal(size=(2, 3))
    c = decode_membership(encode_positive(x, gen), z, gen)
    ad.sum(c * np.random.default_rng(1).normal(size=c.shape)).backward()
    silent = [k for k, v in gen.values.items() if not np.any(v.grad)]
    assert silent == []


def test_generator_gradients():
    assert check_case("generator", MODULE_CASES["generator"], points=2, seed=5, h=1e-7).passed
