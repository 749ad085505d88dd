import numpy as np

from relightkit import noise


class TestPerlin:
    def test_deterministic(self):
        t1 = noise.make_table(np.random.default_rng(7))
        t2 = noise.make_table(np.random.default_rng(7))
        x = np.linspace(0.1, 5.3, 40)
        y = np.linspace(0.2, 4.1, 40)
        v1, _, _ = noise.perlin_with_grad(x, y, t1)
        v2, _, _ = noise.perlin_with_grad(x, y, t2)
        assert np.array_equal(v1, v2)

    def test_zero_at_lattice_points(self):
        table = noise.make_table(np.random.default_rng(0))
        xi = np.arange(0.0, 8.0)
        v, _, _ = noise.perlin_with_grad(xi, xi, table)
        assert np.abs(v).max() < 1e-12

    def test_gradient_matches_finite_differences(self):
        table = noise.make_table(np.random.default_rng(3))
        rng = np.random.default_rng(11)
        x = rng.uniform(0.1, 7.9, size=200)
        y = rng.uniform(0.1, 7.9, size=200)
        # keep away from lattice lines where fade terms change cells
        x = np.where(np.abs(x - np.round(x)) < 0.02, x + 0.05, x)
        y = np.where(np.abs(y - np.round(y)) < 0.02, y + 0.05, y)
        _, dx, dy = noise.perlin_with_grad(x, y, table)
        h = 1e-6
        fx_p, _, _ = noise.perlin_with_grad(x + h, y, table)
        fx_m, _, _ = noise.perlin_with_grad(x - h, y, table)
        fy_p, _, _ = noise.perlin_with_grad(x, y + h, table)
        fy_m, _, _ = noise.perlin_with_grad(x, y - h, table)
        assert np.abs((fx_p - fx_m) / (2 * h) - dx).max() < 1e-6
        assert np.abs((fy_p - fy_m) / (2 * h) - dy).max() < 1e-6

    def test_continuity_across_cells(self):
        table = noise.make_table(np.random.default_rng(5))
        eps = 1e-9
        x = np.array([2.0 - eps, 2.0 + eps])
        y = np.array([1.5, 1.5])
        v, _, _ = noise.perlin_with_grad(x, y, table)
        assert abs(v[0] - v[1]) < 1e-6


class TestFractal:
    def test_gradient_matches_finite_differences(self):
        rng_val = 17
        x = np.linspace(0.05, 0.95, 30)
        y = np.linspace(0.1, 0.9, 30)

        def evaluate(xs, ys):
            return noise.fractal_with_grad(xs, ys, np.random.default_rng(rng_val),
                                           octaves=3, base_freq=2.5)

        v, dx, dy = evaluate(x, y)
        h = 1e-7
        vxp, _, _ = evaluate(x + h, y)
        vxm, _, _ = evaluate(x - h, y)
        fd = (vxp - vxm) / (2 * h)
        assert np.abs(fd - dx).max() < 1e-4

    def test_octaves_add_detail(self):
        x, y = np.meshgrid(np.linspace(0, 1, 32), np.linspace(0, 1, 32))
        v1, _, _ = noise.fractal_with_grad(x, y, np.random.default_rng(1), octaves=1)
        v4, _, _ = noise.fractal_with_grad(x, y, np.random.default_rng(1), octaves=4)
        # higher octaves contribute high-frequency energy
        def hf_energy(v):
            return float(((v[:, 1:] - v[:, :-1]) ** 2).mean())
        assert hf_energy(v4) > hf_energy(v1)
