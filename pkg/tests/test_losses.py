import numpy as np
import pytest

from conftest import random_scene
from oracles import distance_lab_loop, finite_difference, rel_err
from relightkit import losses, renderer, sh, synthgen
from relightkit.errors import InsufficientDataError, InvalidInputError
from relightkit.image import ImagePlane, Mask, NormalMap
from relightkit.losses import LossWeights, PairEstimate


def gt_estimate(sample):
    return PairEstimate(
        albedo_1=sample.albedo, normals_1=sample.normals, light_1=sample.lightings[0],
        albedo_2=sample.albedo, normals_2=sample.normals, light_2=sample.lightings[1])


def random_estimate(rng, sample):
    h, w = sample.mask.height, sample.mask.width
    u = rng.normal(size=(h, w, 3))
    u[..., 2] = np.abs(u[..., 2]) + 0.3
    n = NormalMap(u / np.linalg.norm(u, axis=-1, keepdims=True))
    a = ImagePlane(rng.uniform(0.1, 0.9, size=(h, w, 3)), "linear-rgb")
    return PairEstimate(
        albedo_1=a, normals_1=n, light_1=sh.ShLighting(rng.normal(scale=0.3, size=(9, 3))),
        albedo_2=a, normals_2=n, light_2=sh.ShLighting(rng.normal(scale=0.3, size=(9, 3))))


class TestDistanceLab:
    def test_identity(self, rng):
        x = ImagePlane(rng.uniform(0, 1, size=(6, 6, 3)), "linear-rgb")
        assert losses.distance_lab(x, x, Mask.full(6, 6)) == 0.0

    def test_symmetry(self, rng):
        x = ImagePlane(rng.uniform(0, 1, size=(6, 6, 3)), "linear-rgb")
        y = ImagePlane(rng.uniform(0, 1, size=(6, 6, 3)), "linear-rgb")
        m = Mask.full(6, 6)
        assert losses.distance_lab(x, y, m) == pytest.approx(
            losses.distance_lab(y, x, m), abs=1e-12)

    def test_black_white(self):
        b = ImagePlane(np.zeros((5, 5, 3)), "linear-rgb")
        w = ImagePlane(np.ones((5, 5, 3)), "linear-rgb")
        d = losses.distance_lab(b, w, Mask.full(5, 5))
        assert d == pytest.approx(100.0 / 3.0, abs=1e-3)

    def test_empty_mask(self, rng):
        x = ImagePlane(rng.uniform(0, 1, size=(4, 4, 3)), "linear-rgb")
        with pytest.raises(InsufficientDataError):
            losses.distance_lab(x, x, Mask(np.zeros((4, 4), dtype=bool)))

    def test_matches_loop_oracle(self, rng):
        x = rng.uniform(0, 1, size=(6, 6, 3))
        y = rng.uniform(0, 1, size=(6, 6, 3))
        bits = rng.random((6, 6)) > 0.3
        bits[0, 0] = True
        d = losses.distance_lab(ImagePlane(x, "linear-rgb"), ImagePlane(y, "linear-rgb"),
                                Mask(bits))
        assert d == pytest.approx(distance_lab_loop(x, y, bits), abs=1e-9)

    def test_mask_invariance(self, rng):
        x = rng.uniform(0, 1, size=(6, 6, 3))
        y = rng.uniform(0, 1, size=(6, 6, 3))
        bits = rng.random((6, 6)) > 0.4
        bits[0, 0] = True
        x2 = x.copy()
        x2[~bits] = 0.77  # off-mask content must not matter
        m = Mask(bits)
        assert losses.distance_lab(ImagePlane(x, "linear-rgb"),
                                   ImagePlane(y, "linear-rgb"), m) == pytest.approx(
            losses.distance_lab(ImagePlane(x2, "linear-rgb"),
                                ImagePlane(y, "linear-rgb"), m), abs=1e-12)

    def test_gradient_matches_fd(self, rng):
        x = rng.uniform(0.1, 0.9, size=(5, 5, 3))
        y = rng.uniform(0.1, 0.9, size=(5, 5, 3))
        bits = rng.random((5, 5)) > 0.3
        bits[0, 0] = True
        _, grad = losses.distance_lab_grad(x, y, bits)

        def f(x_):
            v, _ = losses.distance_lab_grad(x_, y, bits)
            return v

        fd = finite_difference(f, x.copy(), h=1e-6)
        assert rel_err(grad, fd, floor=1e-6) < 1e-3


class TestPairLosses:
    def test_rec_zero_at_ground_truth(self, sphere_sample):
        est = gt_estimate(sphere_sample)
        val = losses.loss_rec(est, sphere_sample.images[0], sphere_sample.images[1],
                              sphere_sample.mask)
        assert val <= 0.05

    def test_relit_zero_at_ground_truth(self, sphere_sample):
        est = gt_estimate(sphere_sample)
        val = losses.loss_relit(est, sphere_sample.images[0], sphere_sample.images[1],
                                sphere_sample.mask)
        assert val <= 0.05

    def test_swapped_lights_positive(self, sphere_sample):
        s = sphere_sample
        est = PairEstimate(albedo_1=s.albedo, normals_1=s.normals, light_1=s.lightings[1],
                           albedo_2=s.albedo, normals_2=s.normals, light_2=s.lightings[0])
        assert losses.loss_rec(est, s.images[0], s.images[1], s.mask) > 0.05

    def test_relit_is_rec_after_swap_under_shared_components(self, rng, sphere_sample):
        # with Â1 = Â2 and N̂1 = N̂2, swapping the lights turns the relit
        # terms into the rec terms, so the two losses coincide exactly
        s = sphere_sample
        est = random_estimate(rng, s)
        relit = losses.loss_relit(est, s.images[0], s.images[1], s.mask)
        rec = losses.loss_rec(est, s.images[0], s.images[1], s.mask)
        assert relit == pytest.approx(rec, abs=1e-12)

    def test_matches_oracle_recomputation(self, rng, sphere_sample):
        s = sphere_sample
        est = random_estimate(rng, s)
        r11 = renderer.render(est.albedo_1, est.normals_1, est.light_1, s.mask)
        r22 = renderer.render(est.albedo_2, est.normals_2, est.light_2, s.mask)
        expect = (distance_lab_loop(r11.data, s.images[0].data, s.mask.bits)
                  + distance_lab_loop(r22.data, s.images[1].data, s.mask.bits))
        got = losses.loss_rec(est, s.images[0], s.images[1], s.mask)
        assert got == pytest.approx(expect, abs=1e-6)


class TestSupervised:
    def test_zero_at_ground_truth(self, sphere_sample):
        s = sphere_sample
        est = gt_estimate(s)
        val = losses.loss_supervised(est, s.albedo, s.normals,
                                     (s.lightings[0], s.lightings[1]), s.mask,
                                     LossWeights())
        assert val == 0.0

    def test_unit_light_perturbation(self, sphere_sample):
        s = sphere_sample
        coeffs = s.lightings[0].coeffs.copy()
        coeffs[0, 0] += 1.0
        est = PairEstimate(albedo_1=s.albedo, normals_1=s.normals,
                           light_1=sh.ShLighting(coeffs),
                           albedo_2=s.albedo, normals_2=s.normals,
                           light_2=s.lightings[1])
        w = LossWeights(lambda_albedo=0.0, lambda_normal=0.0, lambda_light=0.25)
        val = losses.loss_supervised(est, s.albedo, s.normals,
                                     (s.lightings[0], s.lightings[1]), s.mask, w)
        assert val == pytest.approx(0.25, abs=1e-12)

    def test_matches_oracle(self, rng, sphere_sample):
        s = sphere_sample
        est = random_estimate(rng, s)
        w = LossWeights(lambda_albedo=0.7, lambda_normal=0.3, lambda_light=0.1)
        fg = s.mask.bits
        expect = 0.0
        for a in (est.albedo_1, est.albedo_2):
            expect += 0.7 * np.abs((a.data - s.albedo.data)[fg]).mean()
        for n in (est.normals_1, est.normals_2):
            expect += 0.3 * np.abs((n.data - s.normals.data)[fg]).mean()
        for l, gt in ((est.light_1, s.lightings[0]), (est.light_2, s.lightings[1])):
            expect += 0.1 * ((l.coeffs - gt.coeffs) ** 2).sum()
        got = losses.loss_supervised(est, s.albedo, s.normals,
                                     (s.lightings[0], s.lightings[1]), s.mask, w)
        assert got == pytest.approx(expect, rel=1e-9)


class TestTotalLoss:
    def test_zero_at_gt(self, sphere_sample):
        s = sphere_sample
        out = losses.total_loss(gt_estimate(s), s.images[0], s.images[1], s.mask,
                                LossWeights(), gt_albedo=s.albedo, gt_normals=s.normals,
                                gt_lights=(s.lightings[0], s.lightings[1]))
        assert out.total <= 0.1
        assert set(out.terms) == {"rec", "relit", "albedo", "normal", "light"}

    def test_monotone_in_weights(self, rng, sphere_sample):
        s = sphere_sample
        est = random_estimate(rng, s)
        kwargs = dict(gt_albedo=s.albedo, gt_normals=s.normals,
                      gt_lights=(s.lightings[0], s.lightings[1]))
        base = losses.total_loss(est, s.images[0], s.images[1], s.mask,
                                 LossWeights(), **kwargs)
        for name in ("lambda_albedo", "lambda_normal", "lambda_light",
                     "lambda_rec", "lambda_relit"):
            heavier = LossWeights(**{**vars(LossWeights()), name: 2.0})
            more = losses.total_loss(est, s.images[0], s.images[1], s.mask,
                                     heavier, **kwargs)
            assert more.total >= base.total

    def test_missing_gt_rejected(self, rng, sphere_sample):
        s = sphere_sample
        est = random_estimate(rng, s)
        with pytest.raises(InvalidInputError):
            losses.total_loss(est, s.images[0], s.images[1], s.mask, LossWeights())

    def test_weights_validation(self):
        with pytest.raises(InvalidInputError):
            LossWeights(lambda_rec=-1.0)
        with pytest.raises(InvalidInputError):
            LossWeights(lambda_light=float("nan"))


class TestObjectiveGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_full_gradient_vs_fd(self, seed):
        rng = np.random.default_rng(seed)
        albedo, normals, mask = random_scene(rng, size=8)
        sample_rng = np.random.default_rng(seed + 50)
        l_true_1 = synthgen.sample_lighting(sample_rng)
        l_true_2 = synthgen.sample_lighting(sample_rng)
        i1 = renderer.render_values(albedo.data, normals.data, l_true_1.coeffs, mask.bits)
        i2 = renderer.render_values(albedo.data, normals.data, l_true_2.coeffs, mask.bits)
        w = LossWeights(lambda_albedo=0.5, lambda_normal=0.5, lambda_light=0.1)

        a1 = rng.uniform(0.2, 0.8, size=albedo.data.shape)
        u1 = normals.data + rng.normal(scale=0.1, size=normals.data.shape)
        l1 = rng.normal(scale=0.3, size=(9, 3))
        a2 = rng.uniform(0.2, 0.8, size=albedo.data.shape)
        u2 = normals.data + rng.normal(scale=0.1, size=normals.data.shape)
        l2 = rng.normal(scale=0.3, size=(9, 3))

        def norm_rows(u):
            return u / np.linalg.norm(u, axis=-1, keepdims=True)

        def objective(a1_, u1_, l1_, a2_, u2_, l2_):
            loss, _ = losses.pair_objective(
                a1_, norm_rows(u1_), l1_, a2_, norm_rows(u2_), l2_, i1, i2,
                mask.bits, w, gt_albedo=albedo.data, gt_normals=normals.data,
                gt_lights=(l_true_1.coeffs, l_true_2.coeffs), want_grads=False)
            return loss.total

        n1 = norm_rows(u1)
        n2 = norm_rows(u2)
        _, grads = losses.pair_objective(
            a1, n1, l1, a2, n2, l2, i1, i2, mask.bits, w, gt_albedo=albedo.data,
            gt_normals=normals.data, gt_lights=(l_true_1.coeffs, l_true_2.coeffs))

        fd_a1 = finite_difference(lambda a: objective(a, u1, l1, a2, u2, l2),
                                  a1.copy(), h=1e-5)
        assert rel_err(grads.d_albedo_1, fd_a1, floor=1e-4) < 1e-3

        # chain the returned unit-normal gradient through normalize-on-use
        norms = np.linalg.norm(u1, axis=-1, keepdims=True)
        proj = (grads.d_normals_1
                - (grads.d_normals_1 * n1).sum(-1, keepdims=True) * n1) / norms
        fd_u1 = finite_difference(lambda u: objective(a1, u, l1, a2, u2, l2),
                                  u1.copy(), h=1e-5)
        assert rel_err(proj, fd_u1, floor=1e-4) < 1e-3

        fd_l2 = finite_difference(lambda l: objective(a1, u1, l1, a2, u2, l),
                                  l2.copy(), h=1e-5)
        assert rel_err(grads.d_light_2, fd_l2, floor=1e-4) < 1e-3
