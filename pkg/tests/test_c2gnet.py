import numpy as np
import pytest

from c2ghof import (
    C2GLayout,
    C2GParams,
    c2g_eval,
    c2g_eval_batch,
    c2g_input_gradient,
    layout_for_robot,
    load_c2g_params,
    param_count,
    planar_arm,
    save_c2g_params,
    yaw_pitch_arm,
)
from c2ghof.c2gnet import embed_configs, inv_softplus, softplus
from reference_impls import c2g_eval_naive, central_difference, relative_errors


def small_layout(dof=2, n_basis=4, hidden=(5, 3), embed=True):
    return C2GLayout(
        dof=dof,
        n_basis=n_basis,
        hidden=hidden,
        periodic=tuple([True] * dof),
        lo=tuple([-np.pi] * dof),
        hi=tuple([np.pi] * dof),
        embed=embed,
    )


def random_params(layout, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return C2GParams(layout, rng.normal(0.0, scale, layout.total_params))


class TestParamCount:
    def test_raw_mode_formula_d2(self):
        # 64*4 + 64 + (64*64+64) + (64*64+64) + (64+1), by hand: 8705
        assert param_count(2, 64, (64, 64)) == 8705

    def test_hand_count_minimal(self):
        # d=1, B=1, H=(1,1): 2 + 1 + 2 + 2 + 2 = 9
        assert param_count(1, 1, (1, 1)) == 9

    def test_full_scale_basis_count(self):
        # 128 basis functions at dof 7, raw pair width 14
        n = param_count(7, 128, (64, 64))
        assert n == 128 * 14 + 128 + (128 * 64 + 64) + (64 * 64 + 64) + 65

    def test_layout_total_matches_param_count(self):
        lay = small_layout(dof=2, n_basis=8, hidden=(6, 4), embed=False)
        assert lay.total_params == param_count(2, 8, (6, 4))

    def test_embedded_layout_width(self):
        lay = small_layout(dof=2)  # two periodic joints -> pair width 8
        assert lay.input_dim == 8
        assert lay.total_params == param_count(2, lay.n_basis, lay.hidden, input_dim=8)

    def test_mixed_topology_width(self):
        m = yaw_pitch_arm([0.4, 0.4])
        lay = layout_for_robot(m, 8, (4, 4))
        # yaw -> (cos, sin); two limited pitches -> 1 each; pair doubles it
        assert lay.config_width == 4
        assert lay.input_dim == 8


class TestEval:
    def test_constant_network_outputs_ln2(self):
        lay = small_layout()
        p = random_params(lay, seed=1)
        v = p.views()
        v["w1"][...] = 0
        v["w2"][...] = 0
        v["w3"][...] = 0
        v["b3"][...] = 0
        rng = np.random.default_rng(2)
        for _ in range(10):
            q1, q2 = rng.uniform(-np.pi, np.pi, (2, 2))
            assert c2g_eval(p, q1, q2) == pytest.approx(np.log(2.0), abs=1e-15)

    def test_kernel_peak_at_center(self):
        lay = small_layout(dof=1, n_basis=1, hidden=(1, 1))
        p = random_params(lay, seed=3)
        q1, q2 = np.array([0.4]), np.array([-1.2])
        x = np.concatenate(
            [embed_configs(lay, q1[None])[0], embed_configs(lay, q2[None])[0]]
        )
        v = p.views()
        v["centers"][0] = x
        # phi = 1 regardless of bandwidth
        for raw in (-5.0, 0.0, 7.0):
            v["bandwidths"][0] = raw
            v["w1"][...] = 1.0
            v["b1"][...] = 0.0
            v["w2"][...] = 1.0
            v["b2"][...] = 0.0
            v["w3"][...] = 1.0
            v["b3"][...] = 0.0
            assert c2g_eval(p, q1, q2) == pytest.approx(softplus(1.0), abs=1e-14)

    def test_matches_naive_reimplementation(self):
        for seed in range(20):
            lay = small_layout(dof=2, n_basis=6, hidden=(7, 5))
            p = random_params(lay, seed=seed)
            rng = np.random.default_rng(1000 + seed)
            q1, q2 = rng.uniform(-2 * np.pi, 2 * np.pi, (2, 2))
            got = c2g_eval(p, q1, q2)
            want = c2g_eval_naive(p, q1, q2)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_matches_naive_raw_mode(self):
        lay = small_layout(dof=2, n_basis=5, hidden=(4, 4), embed=False)
        p = random_params(lay, seed=9, scale=0.3)
        rng = np.random.default_rng(11)
        for _ in range(10):
            q1, q2 = rng.uniform(-np.pi, np.pi, (2, 2))
            assert c2g_eval(p, q1, q2) == pytest.approx(
                c2g_eval_naive(p, q1, q2), rel=1e-12, abs=1e-12
            )

    def test_matches_naive_mixed_topology(self):
        m = yaw_pitch_arm([0.4, 0.4])
        lay = layout_for_robot(m, 5, (4, 3))
        p = random_params(lay, seed=13, scale=0.4)
        rng = np.random.default_rng(17)
        for _ in range(10):
            q1 = np.array([rng.uniform(-np.pi, np.pi), *rng.uniform(-1.5, 1.5, 2)])
            q2 = np.array([rng.uniform(-np.pi, np.pi), *rng.uniform(-1.5, 1.5, 2)])
            assert c2g_eval(p, q1, q2) == pytest.approx(
                c2g_eval_naive(p, q1, q2), rel=1e-12, abs=1e-12
            )

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            lay = small_layout(n_basis=3, hidden=(4, 4))
            p = random_params(lay, seed=seed, scale=2.0)
            Q1 = rng.uniform(-np.pi, np.pi, (50, 2))
            Q2 = rng.uniform(-np.pi, np.pi, (50, 2))
            assert np.all(c2g_eval_batch(p, Q1, Q2) >= 0.0)

    def test_batch_matches_scalar(self):
        lay = small_layout()
        p = random_params(lay, seed=21)
        rng = np.random.default_rng(23)
        Q1 = rng.uniform(-np.pi, np.pi, (20, 2))
        Q2 = rng.uniform(-np.pi, np.pi, (20, 2))
        batch = c2g_eval_batch(p, Q1, Q2)
        for i in range(20):
            assert batch[i] == c2g_eval(p, Q1[i], Q2[i])

    def test_dimension_mismatch(self):
        p = random_params(small_layout())
        with pytest.raises(ValueError):
            c2g_eval(p, np.zeros(3), np.zeros(2))


class TestPeriodicConsistency:
    def test_exact_shift_invariance(self):
        # floats where q + 2*pi is exactly representable wrap to identical
        # embeddings; eval and gradients must agree bitwise there.
        lay = small_layout()
        p = random_params(lay, seed=31)
        for q1 in (np.zeros(2), np.array([0.5, -0.25])):
            q2 = np.array([1.0, 1.0])
            shifted = q1 + np.array([2 * np.pi, 0.0])
            if not np.all((shifted - np.array([2 * np.pi, 0.0])) == q1):
                continue  # addition rounded; exactness not expected
            base = c2g_eval(p, q1, q2)
            same = c2g_eval(p, shifted, q2)
            if np.array_equal(
                embed_configs(lay, q1[None]), embed_configs(lay, shifted[None])
            ):
                assert base == same
                g_base = c2g_input_gradient(p, q1, q2)
                g_shift = c2g_input_gradient(p, shifted, q2)
                np.testing.assert_array_equal(g_base[0], g_shift[0])

    def test_approximate_shift_invariance_general(self):
        lay = small_layout()
        p = random_params(lay, seed=37)
        rng = np.random.default_rng(41)
        for _ in range(50):
            q1, q2 = rng.uniform(-np.pi, np.pi, (2, 2))
            a = c2g_eval(p, q1, q2)
            b = c2g_eval(p, q1 + 2 * np.pi, q2)
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestInputGradient:
    def test_constant_network_zero_gradient(self):
        lay = small_layout()
        p = random_params(lay, seed=43)
        v = p.views()
        v["w1"][...] = 0
        g1, g2 = c2g_input_gradient(p, np.zeros(2), np.ones(2))
        np.testing.assert_array_equal(g1, np.zeros(2))
        np.testing.assert_array_equal(g2, np.zeros(2))

    def test_matches_central_differences(self):
        h = 1e-5
        for seed in range(30):
            lay = small_layout(dof=2, n_basis=6, hidden=(6, 6))
            p = random_params(lay, seed=seed)
            rng = np.random.default_rng(2000 + seed)
            q1, q2 = rng.uniform(-np.pi, np.pi, (2, 2))
            g1, g2 = c2g_input_gradient(p, q1, q2)
            fd1 = central_difference(lambda x: c2g_eval(p, x, q2), q1, h)
            fd2 = central_difference(lambda x: c2g_eval(p, q1, x), q2, h)
            assert np.max(relative_errors(g1, fd1)) < 1e-4
            assert np.max(relative_errors(g2, fd2)) < 1e-4

    def test_matches_central_differences_limited_joints(self):
        m = yaw_pitch_arm([0.4, 0.4])
        lay = layout_for_robot(m, 6, (5, 5))
        h = 1e-5
        for seed in range(10):
            p = random_params(lay, seed=seed)
            rng = np.random.default_rng(3000 + seed)
            q1 = np.array([rng.uniform(-3, 3), *rng.uniform(-1.4, 1.4, 2)])
            q2 = np.array([rng.uniform(-3, 3), *rng.uniform(-1.4, 1.4, 2)])
            g1, _ = c2g_input_gradient(p, q1, q2)
            fd1 = central_difference(lambda x: c2g_eval(p, x, q2), q1, h)
            assert np.max(relative_errors(g1, fd1)) < 1e-4


class TestSerializationC2G:
    def test_roundtrip(self, tmp_path):
        lay = small_layout(n_basis=5, hidden=(4, 3))
        p = random_params(lay, seed=47)
        save_c2g_params(p, tmp_path / "net.c2gn")
        raw = (tmp_path / "net.c2gn").read_bytes()
        assert raw[:8] == b"C2GNETW\x00"
        p2 = load_c2g_params(tmp_path / "net.c2gn")
        assert p2.layout == lay
        np.testing.assert_array_equal(p2.theta, p.theta)


def test_inv_softplus_roundtrip():
    for y in (0.1, 0.35, 1.0, 3.0):
        assert softplus(inv_softplus(y)) == pytest.approx(y, rel=1e-12)
