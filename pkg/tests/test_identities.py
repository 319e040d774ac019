import numpy as np
import pytest

from ymh_lab import presets
from ymh_lab.fields import EndForm, random_bandlimited
from ymh_lab.grid import TorusGrid
from ymh_lab.identities import (SUITE, check_bianchi, check_conformal_shift,
                                check_functional_decomposition, check_kahler_identities,
                                check_laplacian_gap, check_strong_equivalence,
                                classify_exactness, fit_rates, merge, run_check, run_suite)

RES = (16, 32, 64)


def sweep(name):
    return merge([run_check(name, N) for N in RES], RES)


def in_window(rates):
    return all(1.7 <= r <= 2.3 for r in rates)


def test_fit_rates_and_classes():
    assert fit_rates([16, 32, 64], [1.0, 0.25, 0.0625]) == pytest.approx([2.0, 2.0])
    assert np.isnan(fit_rates([16, 32], [1.0, 0.0])[0])
    assert classify_exactness([1e-14, 1e-13], [1.0, 10.0], [np.nan]) == "machine-exact"
    assert classify_exactness([1.0, 0.25], [1.0, 1.0], [2.0]) == "order-2"
    assert classify_exactness([1.0, 4.0], [1.0, 1.0], [-2.0]) == "diverging"
    assert classify_exactness([1.0, 0.5], [1.0, 1.0], [1.0]) == "inconclusive"
    assert classify_exactness([1.0], [1.0], []) == "inconclusive"


def test_kahler_examples(surface16):
    tb = presets.trivial(surface16)
    const = EndForm.constant(surface16, (0, 1), {((), (0,)): presets.NILPOTENT})
    assert check_kahler_identities(tb, const).residual_norms[0] == 0.0
    wave = presets.plane_wave_deformation(surface16).alpha01
    rep = check_kahler_identities(tb, wave)
    assert rep.residual_norms[0] <= 1e-12 * rep.scales[0]
    with pytest.raises(ValueError):
        check_kahler_identities(tb, EndForm.zeros(surface16, 2, (0, 0)))


@pytest.mark.parametrize("n,N", [(1, 16), (1, 32), (2, 4)])
def test_kahler_machine_exact_on_random_input(n, N):
    g = TorusGrid(n, N)
    pair = presets.random_pair(g, 2, 4, 1, 0.8)
    for test in (random_bandlimited(g, 2, (1, 0), 5, 1, 1.0) + random_bandlimited(g, 2, (0, 1), 6, 1, 1.0),
                 random_bandlimited(g, 2, (1, 1), 7, 1, 1.0)):
        assert check_kahler_identities(pair, test).exactness_class == "machine-exact"


def test_laplacian_gap_trivial(surface16):
    test = random_bandlimited(surface16, 2, (0, 0), 3, 2, 1.0)
    reps = check_laplacian_gap(presets.trivial(surface16), test)
    assert reps["s"].exactness_class == reps["sss"].exactness_class == "machine-exact"
    with pytest.raises(ValueError):
        check_laplacian_gap(presets.trivial(surface16), EndForm.zeros(surface16, 2, (1, 0)))


@pytest.mark.parametrize("name", ["laplacian_gap_s", "laplacian_gap_sss", "bianchi",
                                  "functional_decomposition", "conformal_shift"])
def test_order_two_identities(name):
    rep = sweep(name)
    assert rep.exactness_class == "order-2", (rep.residual_norms, rep.rates)
    assert in_window(rep.rates)


def test_bianchi_examples(surface16):
    assert check_bianchi(presets.trivial(surface16)).residual_norms[0] == 0.0
    rep = check_bianchi(presets.nilpotent(surface16))
    assert rep.exactness_class == "machine-exact"
    assert not rep.flags["non_hitchin"]
    rep = check_bianchi(presets.random_pair(surface16, 2, 1, 2, 0.5))
    assert rep.flags["non_hitchin"]


def test_strong_equivalence_examples(surface16):
    rep = check_strong_equivalence(presets.diagonal_higgs(surface16))
    assert rep.extra["reduced_norm"] == 0.0 and rep.extra["direct_norm"] == 0.0
    rep = check_strong_equivalence(presets.nilpotent(surface16))
    assert rep.extra["reduced_norm"] == pytest.approx(8.0)
    assert rep.extra["direct_norm"] == pytest.approx(8.0)
    assert rep.exactness_class == "machine-exact"


def test_strong_equivalence_on_random_pairs():
    # the two routes agree to rounding at every resolution on a surface
    assert sweep("strong_equivalence").exactness_class == "machine-exact"


def test_functional_decomposition_examples(surface16):
    rep = check_functional_decomposition(presets.trivial(surface16))
    assert rep.extra["lhs"] == rep.extra["rhs"] == 0.0
    rep = check_functional_decomposition(presets.nilpotent(surface16))
    assert rep.extra["lhs"] == pytest.approx(8.0) and rep.extra["rhs"] == pytest.approx(8.0)
    assert rep.exactness_class == "machine-exact"
    with pytest.raises(ValueError):
        check_functional_decomposition(presets.trivial(TorusGrid(2, 4)))


def test_conformal_examples(surface16):
    pair = presets.random_pair(surface16, 2, 1, 2, 0.5)
    assert check_conformal_shift(pair, np.zeros(surface16.shape)).residual_norms[0] == 0.0
    assert check_conformal_shift(pair, np.full(surface16.shape, 2.0)).residual_norms[0] == 0.0
    errs = []
    for N in RES:
        g = TorusGrid(1, N)
        u = np.broadcast_to(0.1 * np.cos(2 * np.pi * g.coordinate(0)), g.shape)
        errs.append(check_conformal_shift(presets.trivial(g), u).residual_norms[0])
    assert in_window(fit_rates(RES, errs))


def test_kahler_sweep_machine_exact():
    assert sweep("kahler").exactness_class == "machine-exact"


def test_run_suite_contract():
    reps = run_suite("kahler", [16])
    assert len(reps) == 1 and reps[0].rates == []
    rows = list(reps[0].rows())
    assert rows == [("kahler", 16, reps[0].residual_norms[0], "")]
    with pytest.raises(ValueError):
        run_suite("", RES)
    with pytest.raises(ValueError):
        run_suite("nope", RES)
    with pytest.raises(ValueError):
        run_suite("kahler", [])
    assert len(SUITE) == 7
    d = reps[0].to_dict()
    assert d["identity_name"] == "kahler"
