import math

import numpy as np
import pytest

from topoinc.flow import FlowModel, gradient_wrt_input, loss_and_gradients, new_model
from topoinc.latent import LatentMixture, standard_mixture
from topoinc.rng import substream


def random_model(n_components=1, seed=0, scale=0.3):
    """A model with non-trivial output layers for gradient checks."""
    model = new_model(standard_mixture(n_components), substream(seed, "init"))
    rng = substream(seed, "perturb")
    for layer in model.layers:
        layer.w3 = rng.normal(0.0, scale, layer.w3.shape)
        layer.b3 = rng.normal(0.0, scale, layer.b3.shape)
    return model


class TestLatentMixture:
    def test_standard_normal_peak(self):
        lat = standard_mixture(1)
        assert abs(lat.log_pdf(np.zeros(2)) - math.log(1.0 / (2.0 * math.pi))) < 1e-12

    def test_two_component_means(self):
        lat = standard_mixture(2)
        assert np.allclose(lat.means[0], [0.0, -2.5], atol=1e-12)
        assert np.allclose(lat.means[1], [0.0, 2.5], atol=1e-12)
        assert np.allclose(lat.sigmas, 0.5)

    def test_component_domination_at_mean(self):
        lat = standard_mixture(2)
        z = lat.means[0]
        full = np.exp(lat.log_pdf(z))
        c0 = 0.5 * np.exp(lat.log_pdf_component(0, z))
        c1 = 0.5 * np.exp(lat.log_pdf_component(1, z))
        assert full >= c0
        assert c1 < 1e-10 * c0

    def test_circular_symmetry(self):
        for n in (2, 3):
            lat = standard_mixture(n)
            z = np.array([0.7, -0.3])
            # rotating the query by 2 pi / n permutes the components
            ang = 2.0 * math.pi / n
            rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
            assert abs(lat.log_pdf(z) - lat.log_pdf(rot @ z)) < 1e-9

    def test_rotation_full_turn(self):
        a = standard_mixture(2, rotation=0.0)
        b = standard_mixture(2, rotation=2.0 * math.pi)
        assert np.abs(a.means - b.means).max() < 1e-12

    def test_max_density(self):
        assert abs(standard_mixture(1).max_density - 1.0 / (2.0 * math.pi)) < 1e-15
        lat2 = standard_mixture(2)
        assert abs(lat2.max_density - 0.5 / (2.0 * math.pi * 0.25)) < 1e-15


class TestTransforms:
    def test_identity_at_init(self):
        model = new_model(standard_mixture(1), substream(1, "init"))
        z = substream(2, "z").standard_normal((100, 2))
        x, logdet = model.forward(z)
        assert np.array_equal(x, z)
        assert (logdet == 0.0).all()
        # density equals the latent density exactly
        assert np.allclose(model.log_pdf(z), model.latent.log_pdf(z), atol=0)

    def test_invertibility(self):
        model = random_model(seed=3)
        z = substream(4, "z").standard_normal((1000, 2))
        x, ld = model.forward(z)
        z2, ld2 = model.inverse(x)
        assert np.abs(z2 - z).max() < 1e-8
        assert np.abs(ld + ld2).max() < 1e-8

    def test_logdet_matches_finite_difference_jacobian(self):
        model = random_model(seed=5)
        rng = substream(6, "z")
        for _ in range(10):
            z0 = rng.standard_normal(2)
            h = 1e-5
            J = np.zeros((2, 2))
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                xp, _ = model.forward(z0 + e)
                xm, _ = model.forward(z0 - e)
                J[:, k] = (xp - xm) / (2 * h)
            _, ld = model.forward(z0)
            assert abs(math.log(abs(np.linalg.det(J))) - ld) < 1e-4


class TestDensities:
    def test_decomposition_identity(self):
        model = random_model(n_components=3, seed=7)
        x = substream(8, "x").standard_normal((50, 2))
        full = model.log_pdf(x)
        parts = np.stack(
            [math.log(1.0 / 3.0) + model.log_pdf_component(i, x) for i in range(3)]
        )
        hi = parts.max(axis=0)
        recomposed = hi + np.log(np.exp(parts - hi).sum(axis=0))
        assert np.abs(full - recomposed).max() < 1e-10

    def test_checkpoint_roundtrip_exact(self, tmp_path):
        from topoinc.dataio import load_model, save_model

        model = random_model(n_components=2, seed=9)
        path = tmp_path / "model.json"
        save_model(path, model)
        back = load_model(path)
        for a, b in zip(model.all_params(), back.all_params()):
            assert np.array_equal(a, b)
        x = substream(10, "x").standard_normal((20, 2))
        assert np.array_equal(model.log_pdf(x), back.log_pdf(x))


class TestGradients:
    def test_parameter_gradients_match_finite_differences(self):
        model = random_model(seed=11)
        pts = substream(12, "pts").normal(0.0, 1.5, (16, 2))
        labels = np.zeros(16, dtype=int)
        _, grads = loss_and_gradients(model, pts, labels, False)
        params = model.all_params()
        rng = substream(13, "sel")
        checked = 0
        while checked < 50:
            pi = int(rng.integers(len(params)))
            flat = params[pi].ravel()
            k = int(rng.integers(flat.size))
            an = grads[pi].ravel()[k]
            if abs(an) <= 1e-6:
                continue
            h = 1e-5
            old = flat[k]
            flat[k] = old + h
            lp, _ = loss_and_gradients(model, pts, labels, False)
            flat[k] = old - h
            lm, _ = loss_and_gradients(model, pts, labels, False)
            flat[k] = old
            assert abs((lp - lm) / (2 * h) - an) / abs(an) < 1e-4
            checked += 1

    def test_class_aware_gradients_match_finite_differences(self):
        model = random_model(n_components=2, seed=14, scale=0.2)
        pts = substream(15, "pts").normal(0.0, 1.5, (12, 2))
        labels = np.array([0, 1] * 6)
        _, grads = loss_and_gradients(model, pts, labels, True)
        params = model.all_params()
        rng = substream(16, "sel")
        checked = 0
        while checked < 30:
            pi = int(rng.integers(len(params)))
            flat = params[pi].ravel()
            k = int(rng.integers(flat.size))
            an = grads[pi].ravel()[k]
            if abs(an) <= 1e-6:
                continue
            h = 1e-5
            old = flat[k]
            flat[k] = old + h
            lp, _ = loss_and_gradients(model, pts, labels, True)
            flat[k] = old - h
            lm, _ = loss_and_gradients(model, pts, labels, True)
            flat[k] = old
            assert abs((lp - lm) / (2 * h) - an) / abs(an) < 1e-4
            checked += 1

    def test_input_gradient_sqdist_identity_flow(self):
        model = new_model(standard_mixture(1), substream(17, "init"))
        z = np.array([0.4, -0.7])
        t = np.array([1.0, 2.0])
        g = gradient_wrt_input(model, "sqdist", z, target=t)
        assert np.allclose(g, 2.0 * (z - t), atol=1e-12)
        assert np.allclose(gradient_wrt_input(model, "sqdist", t, target=t), 0.0, atol=1e-12)

    def test_input_gradient_inc_matches_finite_differences(self):
        model = random_model(seed=18)
        lat = model.latent
        q = np.array([0.3, -0.2])
        z0 = np.array([0.5, 0.8])
        g = gradient_wrt_input(model, "inc", z0, query=q, alpha=1.0)

        def obj(z):
            x, _ = model.forward(z[None, :])
            d = float(np.linalg.norm(x[0] - q))
            return d + (lat.max_density - float(np.exp(lat.log_pdf(z[None, :]))[0]))

        h = 1e-6
        fd = np.array(
            [
                (obj(z0 + np.array([h, 0])) - obj(z0 - np.array([h, 0]))) / (2 * h),
                (obj(z0 + np.array([0, h])) - obj(z0 - np.array([0, h]))) / (2 * h),
            ]
        )
        assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-4


class TestLoss:
    def test_class_aware_closed_form_at_identity(self):
        # identity flow, batch sitting exactly on the latent means with
        # matching labels: the loss is the mean of per-class component
        # log-densities at distance 0 and distance 5 pairs
        lat = standard_mixture(2)
        model = new_model(lat, substream(19, "init"))
        pts = np.stack([lat.means[0], lat.means[1]])
        labels = np.array([0, 1])
        loss, _ = loss_and_gradients(model, pts, labels, True)
        peak_log = -math.log(2.0 * math.pi * 0.25)
        want = -0.5 * (peak_log + peak_log)
        assert abs(loss - want) < 1e-12

    def test_class_ignorant_closed_form_at_identity(self):
        lat = standard_mixture(1)
        model = new_model(lat, substream(20, "init"))
        pts = substream(21, "pts").standard_normal((64, 2))
        loss, _ = loss_and_gradients(model, pts, np.zeros(64, dtype=int), False)
        want = -lat.log_pdf(pts).mean()
        assert abs(loss - want) < 1e-12

    def test_duplicated_batch_invariance(self):
        model = random_model(seed=22)
        pts = substream(23, "pts").standard_normal((10, 2))
        labels = np.zeros(10, dtype=int)
        l1, g1 = loss_and_gradients(model, pts, labels, False)
        l2, g2 = loss_and_gradients(model, np.tile(pts, (2, 1)), np.tile(labels, 2), False)
        assert abs(l1 - l2) < 1e-12
        for a, b in zip(g1, g2):
            assert np.abs(a - b).max() < 1e-12

    def test_empty_class_warns_and_contributes_zero(self):
        model = random_model(n_components=2, seed=24)
        pts = substream(25, "pts").standard_normal((8, 2))
        labels = np.zeros(8, dtype=int)  # class 1 absent
        with pytest.warns(UserWarning, match="class 1 absent"):
            loss, _ = loss_and_gradients(model, pts, labels, True)
        assert np.isfinite(loss)

    def test_non_finite_forward_raises(self):
        from topoinc.errors import NonFiniteError

        model = random_model(seed=26)
        model.layers[0].b3 = np.array([1e308, 0.0])  # shift overflows downstream
        with pytest.raises(NonFiniteError):
            with np.errstate(over="ignore", invalid="ignore"):
                model.forward(np.full((1, 2), 1e308))
