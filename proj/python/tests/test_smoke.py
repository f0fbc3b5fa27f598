import itertools
import math

import numpy as np
import pytest

import lipfilter as lf


def pairwise_lipschitz(phi):
    g = phi.grid
    v = phi.values
    worst = 0.0
    for a, b in itertools.combinations(range(g.node_count), 2):
        worst = max(worst, abs(v[a] - v[b]) / g.distance(a, b))
    return worst


def test_grid_and_roundtrip():
    g = lf.GridSpec.torus(1, 4.0, 16)
    assert g.node_count == 16 and math.isclose(g.spacing, 0.25)
    phi = lf.random_lipschitz(g, 0.5, seed=3)
    back = lf.load_lfn(lf.save_lfn(phi))
    assert back.grid == g
    np.testing.assert_array_equal(back.values, phi.values)


def test_mcshane_matches_formula():
    g = lf.GridSpec.box(1, 1.0, 41)
    nodes, values, c = [0, 20, 40], [0.2, 0.9, 0.1], 1.0
    ext = lf.mcshane_extend(g, nodes, values, c)
    expect = [min(1.0, min(v + c * g.distance(t, u) for u, v in zip(nodes, values))) for t in range(41)]
    np.testing.assert_allclose(ext.values, expect, atol=1e-15)
    assert ext.values[20] == 0.9


def test_filter_contract():
    g = lf.GridSpec.torus(1, 16.0, 64)
    plan = lf.make_plan(g, epsilon=0.5, c=0.5, c_prime=1.0)
    phi = lf.random_lipschitz(g, 0.5, seed=1)
    out = lf.apply_filter(phi, plan)
    assert np.max(np.abs(out.values - phi.values)) < 0.5
    assert pairwise_lipschitz(out) <= 1.0 + 1e-9
    shifted = lf.apply_filter(lf.torus_shift(phi, [5]), plan)
    np.testing.assert_array_equal(shifted.values, lf.torus_shift(out, [5]).values)


def test_multibump_roundtrip():
    g = lf.GridSpec.box(2, 1.0, 129)
    phi = lf.random_lipschitz(g, 0.5, seed=2)
    layout = lf.make_layout(g, 3, epsilon=0.5, c=0.5, c_prime=1.0)
    s = [0.0, 0.75, 0.5]
    got = lf.multibump_decode(lf.multibump_encode(phi, s, layout, 0.5), layout)
    assert max(abs(a - b) for a, b in zip(got, s)) <= 0.05


def test_section_audit_rows():
    rows = lf.section_audit(lf.GridSpec.torus(1, 4.0, 128), r=1.0)
    assert {r["name"] for r in rows} == {"injectivity", "coverage", "monotonicity", "independence"}
    assert all(r["pass"] for r in rows)


def test_verify_subset():
    rows = lf.run_verify(seed=7, only=["grid.shift_compose", "filter.lipschitz"])
    assert [r["id"] for r in rows] == ["filter.lipschitz", "grid.shift_compose"]
    assert all(r["pass"] for r in rows)


def test_errors_map_to_value_error():
    g = lf.GridSpec.torus(1, 4.0, 16)
    with pytest.raises(ValueError):
        lf.make_plan(g, epsilon=1e-4, c=0.5, c_prime=1.0)
