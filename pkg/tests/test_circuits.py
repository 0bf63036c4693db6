import dataclasses

import numpy as np
import pytest

from zkfl.circuits import (
    COST_CHECKS,
    WEIGHT_CHECKS,
    CostCircuitParams,
    CostPublics,
    WeightCircuitParams,
    WeightPublics,
    Witness,
    WitnessError,
    build_cost_circuit,
    build_weight_circuit,
    count_cost_constraints,
    count_weight_constraints,
    cs_verify,
    fixed_point_cost,
    gen_cost_witness,
)
from zkfl.fieldcodec import ScaledMatrix, round_half_away
from zkfl.merklehash import HashAlg
from zkfl.pipeline import EncodedData, client_cost, cost_witness, perturb, prepare_client, weight_witness

from conftest import linear_data


def weight_publics(s, client, **kw):
    base = dict(k=s.k, n=s.n, d=s.d, root=client.commitment.root, table=tuple(s.table.ints()),
                d_L=s.d_L, block_hash=s.block_hash, w_noisy=tuple(client.w_noisy.ints()), bounds=s.bounds)
    base.update(kw)
    return WeightPublics(**base).vector()


def cost_publics(s, client, c, **kw):
    base = dict(c=c, k=s.k, n=s.n, n_test=s.n_test, d=s.d, root=client.commitment.root,
                root_test=s.rt_test, eps_w=s.bounds.eps_w)
    base.update(kw)
    return CostPublics(**base).vector()


def test_weight_public_layout(small):
    cs = build_weight_circuit(small.wp)
    assert cs.num_public == 12 + (small.d_L - 1) + (small.k + 1) == small.wp.num_public
    assert cs.public_names[:4] == ["k", "n", "d", "rt_train"]


def test_cost_public_layout(small):
    assert build_cost_circuit(small.cp).num_public == 8


def test_sections_in_order(small):
    seen = list(dict.fromkeys(l.split(":")[0] for l in build_weight_circuit(small.wp).labels))
    assert seen == list(WEIGHT_CHECKS)
    seen = list(dict.fromkeys(l.split(":")[0] for l in build_cost_circuit(small.cp).labels))
    assert seen == list(COST_CHECKS)


def test_count_only_matches_build(small):
    assert count_weight_constraints(small.wp) == build_weight_circuit(small.wp).num_constraints
    assert count_cost_constraints(small.cp) == build_cost_circuit(small.cp).num_constraints


def test_fixed_point_weight_tracks_float(small):
    got = small.client.w.to_array().ravel()
    assert np.allclose(got, small.client.model.w, atol=1e-3)


def test_honest_weight_proof(small):
    wit = weight_witness(small.client, small.wp, small.table, small.block_hash, small.bounds, strict=True)
    v = cs_verify(build_weight_circuit(small.wp), wit, weight_publics(small, small.client))
    assert v.ok and v.evaluated == build_weight_circuit(small.wp).num_constraints


def test_mutated_wire_rejected(small):
    wit = weight_witness(small.client, small.wp, small.table, small.block_hash, small.bounds)
    cs = build_weight_circuit(small.wp)
    pubs = set(cs.public_indices)
    rng = np.random.default_rng(0)
    for _ in range(10):
        i = int(rng.integers(1, cs.num_vars))
        if i in pubs:
            continue
        z = list(wit.assignment)
        z[i] = (z[i] + 1) % (2**254)
        assert not cs_verify(cs, Witness(z), weight_publics(small, small.client)).ok


def test_public_input_binding(small):
    wit = weight_witness(small.client, small.wp, small.table, small.block_hash, small.bounds)
    cs = build_weight_circuit(small.wp)
    bumped = list(small.client.w_noisy.ints())
    bumped[1] += 1000
    v = cs_verify(cs, wit, weight_publics(small, small.client, w_noisy=tuple(bumped)))
    assert not v.ok and v.check == "noisy_weight"
    v = cs_verify(cs, wit, weight_publics(small, small.client, block_hash=small.block_hash + 1))
    assert not v.ok and v.check == "noisy_weight"


def test_zero_bounds_name_the_mean_check(small):
    zero = dataclasses.replace(small.bounds, eps_mu=0, eps_sigma=0, eps_inverse=0)
    params = dataclasses.replace(small.wp, bounds=zero)
    with pytest.raises(WitnessError) as exc:
        weight_witness(small.client, params, small.table, small.block_hash, zero, strict=True)
    assert exc.value.check == "mean"


def test_honest_cost_proof(small):
    c = client_cost(small.client, small.test)
    assert c == fixed_point_cost(small.client.w, small.test.features, small.test.targets)
    wit = cost_witness(small.client, small.cp, small.test, c, small.bounds.eps_w, small.rt_test, strict=True)
    cs = build_cost_circuit(small.cp)
    assert cs_verify(cs, wit, cost_publics(small, small.client, c)).ok
    for forged in (c - 1, c + 1):
        v = cs_verify(cs, wit, cost_publics(small, small.client, forged))
        assert not v.ok and v.check == "cost"


def test_cost_uses_committed_dataset(small):
    other = prepare_client(linear_data(np.random.default_rng(99), small.k, small.n), small.d, small.alg)
    c = client_cost(other, small.test)
    wit = cost_witness(other, small.cp, small.test, c, small.bounds.eps_w, small.rt_test)
    v = cs_verify(build_cost_circuit(small.cp), wit, cost_publics(small, small.client, c))
    assert not v.ok and v.check == "merkle_train"


def test_weight_uses_committed_dataset(small):
    other = perturb(
        prepare_client(linear_data(np.random.default_rng(98), small.k, small.n), small.d, small.alg),
        small.block_hash, small.table, small.alg,
    )
    wit = weight_witness(other, small.wp, small.table, small.block_hash, small.bounds)
    v = cs_verify(build_weight_circuit(small.wp), wit,
                  weight_publics(small, other, root=small.client.commitment.root))
    assert not v.ok and v.check == "merkle_train"


def test_exact_fit_costs_zero(small):
    w = small.client.w
    scale = 10**small.d
    rng = np.random.default_rng(5)
    X = ScaledMatrix.from_array(rng.normal(size=(small.n_test, small.k)), small.d)
    wi = w.ints()
    y = [round_half_away(wi[0] * scale + sum(x * wj for x, wj in zip(row, wi[1:])), scale)
         for row in X.int_rows()]
    test = EncodedData(X, ScaledMatrix.column(y, small.d))
    assert client_cost(small.client, test) == 0
    wit = cost_witness(small.client, small.cp, test, 0, small.bounds.eps_w, test.commit(small.alg).root)
    pubs = cost_publics(small, small.client, 0, root_test=test.commit(small.alg).root)
    assert cs_verify(build_cost_circuit(small.cp), wit, pubs).ok


def test_wrong_weight_in_cost_circuit(small):
    cs = build_cost_circuit(small.cp)
    # past the Newman-derived tolerance, with c consistent with the bent weight
    bent = ScaledMatrix.column([v + 10 * 10**small.d for v in small.client.w.ints()], small.d)
    c = fixed_point_cost(bent, small.test.features, small.test.targets)
    wit = gen_cost_witness(small.cp, small.client.data.features, small.client.data.targets,
                           small.client.Z, bent, small.test.features, small.test.targets,
                           CostPublics(*cost_publics(small, small.client, c)), strict=False)
    v = cs_verify(cs, wit, cost_publics(small, small.client, c))
    assert not v.ok and v.check == "weight"


def test_constraint_growth_is_linear_in_n():
    counts = [count_weight_constraints(WeightCircuitParams(4, n, 5, 50)) for n in (100, 200, 300)]
    d1, d2 = counts[1] - counts[0], counts[2] - counts[1]
    assert abs(d1 - d2) <= 0.01 * max(d1, d2)


def test_mimc_costs_more_than_poseidon_lite():
    for k, n in [(1, 10), (2, 30)]:
        m = count_weight_constraints(WeightCircuitParams(k, n, 5, 50, HashAlg.MIMC7))
        p = count_weight_constraints(WeightCircuitParams(k, n, 5, 50, HashAlg.POSEIDON_LITE))
        assert m > p
        m = count_cost_constraints(CostCircuitParams(k, n, 5, 5, HashAlg.MIMC7))
        p = count_cost_constraints(CostCircuitParams(k, n, 5, 5, HashAlg.POSEIDON_LITE))
        assert m > p


def test_params_validation():
    with pytest.raises(ValueError):
        WeightCircuitParams(4, 5, 5, 100)
    with pytest.raises(ValueError):
        WeightCircuitParams(1, 10, 5, 100, depth_train=7)
    with pytest.raises(ValueError):
        CostCircuitParams(1, 10, 0, 5)
