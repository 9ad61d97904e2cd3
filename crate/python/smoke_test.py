"""Smoke test for the Python bindings.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/trimarkov-*.whl
"""

from fractions import Fraction

import trimarkov as tm


def main():
    ids = [c.id for c in tm.catalog()]
    assert "m1a" in ids and "m2d" in ids, ids

    f = tm.Cubic("m1a")
    assert f.orbit_length == 1
    assert f(Fraction(1, 2)) == Fraction(1, 2)
    assert f.select_model(3) == 4
    factors = f.factor_mod_p(3, 2, 7)
    assert sum(d for d, _ in factors) == 9

    marginal = tm.cycle_marginal(1, 4, 2)
    assert sum(marginal.values()) == 1
    data = tm.model_data(1, 2, 2)
    assert sum(data.values()) == 1

    m2 = tm.Group(1, "M", 2)
    assert m2.order == 648
    assert tm.Group(1, "Aut", 2).order == 1296
    assert m2.cycle_data() == tm.cycle_marginal(1, 4, 2)
    assert m2.index_of(tm.Group(1, "L", 2)) == 2
    assert tm.Group(1, "L", 3).quotient(tm.Group(1, "H", 3)) == "A4"

    y = tm.TreeAut.generator("y", 3)
    x = tm.TreeAut.generator("x", 3)
    assert y in tm.Group(1, "M", 3)
    assert x ** 27 == tm.TreeAut.identity(3) and x ** 9 != tm.TreeAut.identity(3)
    assert tm.TreeAut.from_text(y.to_text()) == y
    assert x.cycle_structure() == (27,)

    sw = tm.sweep("1,0,1,1", 0, 1, 2000, all_primes=True)
    assert sw["primes_used"] > 250

    report = tm.compare("m1a", 3, 2, 3000)
    assert report["model_group_exact_equal"] is True
    assert report["containment_pass"] is True

    assert abs(tm.hausdorff_ratio(1, 12) - tm.hausdorff_limit(1)) < 0.002
    assert tm.markov_order_formula(1, 2) == 648

    sim_a = tm.simulate(1, 4, 3, samples=5000, seed=3)
    sim_b = tm.simulate(1, 4, 3, samples=5000, seed=3)
    assert sim_a == sim_b

    try:
        tm.Group(1, "Q", 2)
    except ValueError:
        pass
    else:
        raise AssertionError("bad group kind accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
