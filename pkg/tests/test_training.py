import numpy as np
import pytest

import oracles
from conftest import make_model, random_binary
from irbm.evaluation import (
    exact_cond_loglik,
    exact_generative_gradient,
    exact_loglik,
)
from irbm.model import ModelParams, apply_permutation, zero_model, z_posterior
from irbm.rng import stream
from irbm.sampling import PhaseSamples, run_label_cd
from irbm.training import (
    Gradients,
    OptimizerState,
    RegroupState,
    TrainConfig,
    Trainer,
    current_regroup_length,
    fraction_length,
    grad_discriminative_exact,
    grad_discriminative_sampled,
    grad_generative,
    growth_decision,
    hybrid_gradient,
    max_norm_project,
    regroup_schedule_update,
    sample_permutation,
    _permute_rows,
)


class TestSamplePermutation:
    def test_short_lengths_are_identity(self):
        rng = stream(0, "perm")
        assert np.array_equal(sample_permutation(0, rng), np.arange(0))
        assert np.array_equal(sample_permutation(1, rng), np.arange(1))

    def test_uniform_over_all_orders(self):
        rng = stream(1, "perm-uniform")
        counts = {}
        n = 60_000
        for _ in range(n):
            key = tuple(sample_permutation(3, rng))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        for freq in counts.values():
            assert abs(freq / n - 1 / 6) < 0.01


class TestGenerativeGradient:
    def test_identical_phases_cancel(self):
        m = zero_model(D=4)
        V = random_binary(0, 6, 4)
        z = np.ones(6, dtype=int)
        pos = PhaseSamples(v=V, z=z)
        neg = PhaseSamples(v=V.copy(), z=z.copy())
        g = grad_generative(m, pos, neg)
        for _, arr in g.blocks():
            assert np.allclose(arr, 0.0)

    def test_rows_beyond_both_cutoffs_are_zero(self):
        m = make_model(10, D=4, l=3)
        V = random_binary(1, 5, 4)
        pos = PhaseSamples(v=V, z=np.full(5, 2))
        neg = PhaseSamples(v=random_binary(2, 5, 4), z=np.full(5, 1))
        g = grad_generative(m, pos, neg)
        assert np.allclose(g.W[2], 0.0)
        assert g.c[2] == 0.0

    def test_token_mismatch_rejected(self):
        m = make_model(11, D=3, l=2)
        V = random_binary(3, 4, 3)
        pos = PhaseSamples(v=V, z=np.ones(4, dtype=int), step_token=1)
        neg = PhaseSamples(v=V, z=np.ones(4, dtype=int), step_token=2)
        with pytest.raises(ValueError):
            grad_generative(m, pos, neg)

    @pytest.mark.parametrize("seed,mode", [(21, "constant"), (22, "dynamic")])
    def test_exact_gradient_matches_finite_differences(self, seed, mode):
        m = make_model(seed, D=5, l=3, scale=0.8, mode=mode)
        X = random_binary(seed, 6, 5)

        def objective(theta):
            return -exact_loglik(oracles.unpack_params(m, theta), X)

        theta0 = oracles.pack_params(m)
        fd = oracles.finite_difference_gradient(objective, theta0, h=1e-5)
        analytic = oracles.pack_gradients(exact_generative_gradient(m, X))
        assert oracles.max_relative_error(analytic, fd, floor=1e-7) < 1e-6


class TestDiscriminativeGradient:
    def test_balanced_zero_model_has_zero_label_bias_gradient(self):
        m = zero_model(D=3, C=2)
        v = random_binary(5, 1, 3)[0]
        V = np.stack([v, v])
        Y = np.array([0, 1])
        g = grad_discriminative_exact(m, V, Y)
        assert np.allclose(g.d, 0.0, atol=1e-14)

    def test_first_row_uses_full_posterior_mass(self):
        # p(z >= 1) = 1, so the data term of row 1 is the bare sigmoid row
        m = make_model(30, D=4, l=1, C=2)
        v = random_binary(6, 1, 4)[0]
        zp = z_posterior(m, v, 0)
        assert zp.p_z_geq()[0] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed,mode", [(31, "constant"), (32, "dynamic")])
    def test_exact_gradient_matches_finite_differences(self, seed, mode):
        m = make_model(seed, D=5, l=3, C=3, scale=0.8, mode=mode)
        X = random_binary(seed, 6, 5)
        Y = np.array([0, 1, 2, 0, 1, 2])

        def objective(theta):
            return -exact_cond_loglik(oracles.unpack_params(m, theta), X, Y)

        theta0 = oracles.pack_params(m)
        fd = oracles.finite_difference_gradient(objective, theta0, h=1e-5)
        analytic = oracles.pack_gradients(grad_discriminative_exact(m, X, Y))
        assert oracles.max_relative_error(analytic, fd, floor=1e-7) < 1e-6

    def test_visible_bias_untouched(self):
        m = make_model(33, D=4, l=2, C=3)
        g = grad_discriminative_exact(m, random_binary(7, 5, 4),
                                      np.array([0, 1, 2, 1, 0]))
        assert np.allclose(g.b_v, 0.0)

    def test_missing_labels_rejected(self):
        m = make_model(34, D=3, l=2)
        with pytest.raises(ValueError):
            grad_discriminative_exact(m, random_binary(8, 4, 3), np.zeros(4, dtype=int))


class TestSampledDiscriminativeGradient:
    def test_single_class_label_bias_gradient_is_zero(self):
        m = make_model(40, D=3, l=2, C=1)
        V = random_binary(9, 4, 3)
        Y = np.zeros(4, dtype=int)
        neg = run_label_cd(m, V, Y, 2, stream(20, "lcd"))
        z_pos = z_posterior(m, V, Y).sample(stream(21, "zpos"))
        g = grad_discriminative_sampled(m, V, Y, z_pos, neg)
        assert np.allclose(g.d, 0.0)

    def test_clamp_respected_in_both_phases(self):
        m = make_model(41, D=4, l=2, C=2)
        V = random_binary(10, 8, 4)
        Y = np.zeros(8, dtype=int)
        z_pos = z_posterior(m, V, Y).sample(stream(22, "zpos2"))
        neg = run_label_cd(m, V, Y, 3, stream(23, "lcd2"))
        assert np.all(z_pos <= m.l + 1)
        assert np.all(neg.z <= m.l + 1)

    def test_mean_matches_exact_gradient(self):
        m = make_model(42, D=3, l=2, C=2, scale=0.7)
        V = random_binary(11, 4, 3)
        Y = np.array([0, 1, 1, 0])
        exact = oracles.pack_gradients(grad_discriminative_exact(m, V, Y))
        n_draws = 3000
        samples = np.empty((n_draws, exact.size))
        for i in range(n_draws):
            rng = stream(1000, "estimator", i)
            z_pos = z_posterior(m, V, Y).sample(rng)
            neg = run_label_cd(m, V, Y, 25, rng)
            g = grad_discriminative_sampled(m, V, Y, z_pos, neg)
            samples[i] = oracles.pack_gradients(g)
        mean = samples.mean(axis=0)
        se = samples.std(axis=0) / np.sqrt(n_draws)
        assert np.all(np.abs(mean - exact) <= 3 * se + 1e-9)


class TestHybridGradient:
    def _parts(self):
        m = make_model(50, D=4, l=2, C=2)
        V = random_binary(12, 5, 4)
        Y = np.array([0, 1, 0, 1, 0])
        dis = grad_discriminative_exact(m, V, Y)
        pos = PhaseSamples(v=V, z=np.full(5, 2), y=Y)
        neg = PhaseSamples(v=random_binary(13, 5, 4), z=np.full(5, 1),
                           y=np.array([1, 0, 1, 0, 1]))
        gen = grad_generative(m, pos, neg)
        return dis, gen

    def test_alpha_zero_is_pure_discriminative_up_to_convention(self):
        dis, gen = self._parts()
        h = hybrid_gradient(dis, gen, 0.0, "paper")
        assert np.allclose(h.W, dis.W)
        assert np.allclose(h.d, dis.d)

    def test_weighted_sum_of_parts(self):
        dis, gen = self._parts()
        alpha = 0.3
        h = hybrid_gradient(dis, gen, alpha, "paper")
        assert np.allclose(h.W, (1 + alpha) * dis.W + alpha * gen.W)
        h2 = hybrid_gradient(dis, gen, alpha, "larochelle")
        assert np.allclose(h2.W, dis.W + alpha * gen.W)

    def test_best_reported_mix_wiring(self):
        dis, gen = self._parts()
        h = hybrid_gradient(dis, gen, 0.005, "paper")
        assert np.allclose(h.c, 1.005 * dis.c + 0.005 * gen.c)


class TestGrowthRule:
    def test_decision_table(self):
        assert growth_decision(3, 3, 2) is True
        assert growth_decision(3, 2, 2) is False
        assert growth_decision(2, 3, 2) is False
        assert growth_decision(2, 2, 2) is False

    def test_growth_appends_zero_unit(self):
        # strong positive hidden biases force both phases past the pool
        params = ModelParams(W=np.zeros((2, 3)), b_v=np.zeros(3),
                             c=np.array([8.0, 8.0]))
        config = TrainConfig(objective="generative", lr_mode="decay",
                             global_lr=1e-12, l1_weight=0.0, l2_weight=0.0,
                             minibatch_size=4, seed=3)
        trainer = Trainer(params, config, n_train=4)
        V = random_binary(14, 4, 3)
        stats = trainer.update_step(V)
        assert stats["grew"] is True
        assert trainer.params.l == 3
        assert np.allclose(trainer.params.W[2], 0.0)
        assert trainer.params.c[2] == 0.0
        assert trainer.opt.unit_age[2] == 1  # ages tick at the end of the step

    def test_pool_growth_is_monotone_and_single_step(self):
        params = zero_model(D=4)
        config = TrainConfig(objective="generative", minibatch_size=8, seed=4)
        trainer = Trainer(params, config, n_train=8)
        sizes = [trainer.params.l]
        for _ in range(15):
            trainer.update_step(random_binary(15, 8, 4))
            sizes.append(trainer.params.l)
        diffs = np.diff(sizes)
        assert np.all(diffs >= 0)
        assert np.all(diffs <= 1)


class TestOptimizerStep:
    def test_zero_gradient_leaves_parameters_alone(self):
        m = make_model(60, D=4, l=3)
        config = TrainConfig(l1_weight=0.0, l2_weight=0.0, minibatch_size=4,
                             seed=5)
        trainer = Trainer(m.copy(), config, n_train=4)
        before = trainer.params.copy()
        trainer._apply_gradient(Gradients.zeros(trainer.params))
        assert np.array_equal(trainer.params.W, before.W)
        assert np.array_equal(trainer.params.b_v, before.b_v)

    def test_nonfinite_gradient_reports_block(self):
        m = make_model(61, D=3, l=2)
        config = TrainConfig(minibatch_size=2, seed=6)
        trainer = Trainer(m, config, n_train=2)
        bad = Gradients.zeros(trainer.params)
        bad.c[0] = np.nan
        with pytest.raises(FloatingPointError, match="c"):
            trainer._apply_gradient(bad)

    def test_max_norm_projection_is_exact(self):
        m = make_model(62, D=4, l=3, C=2)
        m.W[0] *= 100.0
        m.U[1] *= 100.0
        max_norm_project(m, 10.0, 5.0)
        norms_w = np.linalg.norm(m.W, axis=1)
        norms_u = np.linalg.norm(m.U, axis=1)
        assert norms_w.max() <= 10.0 + 1e-12
        assert norms_u.max() <= 5.0 + 1e-12
        assert norms_w[0] == pytest.approx(10.0, abs=1e-9)
        assert norms_u[1] == pytest.approx(5.0, abs=1e-9)

    def test_bounds_hold_after_updates(self):
        config = TrainConfig(objective="generative", global_lr=5.0,
                             w_bound=2.0, u_bound=1.0, minibatch_size=8, seed=7)
        trainer = Trainer(zero_model(D=5), config, n_train=8)
        for _ in range(10):
            trainer.update_step(random_binary(16, 8, 5))
            assert np.linalg.norm(trainer.params.W, axis=1).max() <= 2.0 + 1e-12

    def test_momentum_ramps_with_unit_age(self):
        config = TrainConfig(momentum_ramp_updates=10, minibatch_size=2, seed=8)
        trainer = Trainer(make_model(63, D=3, l=3), config, n_train=2)
        trainer.opt.unit_age = np.array([0, 5, 20])
        unit, glob = trainer._momentum()
        assert unit[0] == pytest.approx(0.5)
        assert unit[1] == pytest.approx(0.7)
        assert unit[2] == pytest.approx(0.9)
        assert glob == pytest.approx(0.5)


class TestPermutationBookkeeping:
    def test_round_trip_restores_params_and_optimizer(self):
        m = make_model(70, D=4, l=4, C=2)
        config = TrainConfig(minibatch_size=2, seed=9)
        trainer = Trainer(m.copy(), config, n_train=2)
        trainer.opt.acc.W += np.arange(16).reshape(4, 4)
        trainer.opt.vel.c += np.arange(4)
        trainer.opt.unit_age = np.array([3, 1, 4, 1])
        before_params = trainer.params.copy()
        before_acc = trainer.opt.acc.W.copy()
        before_age = trainer.opt.unit_age.copy()
        order = np.array([2, 0, 1])
        trainer.params = apply_permutation(trainer.params, order)
        _permute_rows(trainer.opt, order)
        inverse = np.argsort(order)
        trainer.params = apply_permutation(trainer.params, inverse)
        _permute_rows(trainer.opt, inverse)
        assert np.array_equal(trainer.params.W, before_params.W)
        assert np.array_equal(trainer.params.c, before_params.c)
        assert np.array_equal(trainer.opt.acc.W, before_acc)
        assert np.array_equal(trainer.opt.unit_age, before_age)


class TestRegroupSchedule:
    def test_fraction_examples(self):
        assert fraction_length(10, 0.8) == 8
        assert fraction_length(1, 0.8) == 0
        assert fraction_length(5, 0.0) == 0

    def test_adaptive_value_from_history(self):
        config = TrainConfig(regroup_mode="adaptive", adaptive_switch_epoch=1,
                             minibatch_size=2, seed=10)
        state = RegroupState(prev_l=200)
        for _ in range(5):
            state.mode_sum += 100.0 * 7
            state.mode_count += 7
            regroup_schedule_update(state, 200, config)
        assert state.phase == "adaptive"
        assert state.M_t == 90

    def test_adaptive_capped_below_pool(self):
        config = TrainConfig(regroup_mode="adaptive", adaptive_switch_epoch=0,
                             minibatch_size=2, seed=11)
        state = RegroupState(prev_l=12)
        state.mode_sum += 500.0
        state.mode_count += 1
        regroup_schedule_update(state, 12, config)
        assert state.M_t == 11

    def test_off_mode_never_regroups(self):
        config = TrainConfig(regroup_mode="off", minibatch_size=2, seed=12)
        assert current_regroup_length(RegroupState(), 50, config) == 0

    def test_mz_window_uses_last_fifth(self):
        config = TrainConfig(regroup_mode="adaptive", adaptive_switch_epoch=0,
                             minibatch_size=2, seed=13)
        state = RegroupState(prev_l=1000)
        # 10 epochs: first 8 at 100, last 2 at 200; window of 2 -> mean 200
        for value in [100.0] * 8 + [200.0] * 2:
            state.mode_sum = value
            state.mode_count = 1
            regroup_schedule_update(state, 1000, config)
        assert state.M_t == 190


class TestTrainerDeterminism:
    @pytest.mark.parametrize("use_pcd", [False, True])
    def test_same_seed_same_trajectory(self, use_pcd):
        X = random_binary(17, 40, 5)
        runs = []
        for _ in range(2):
            config = TrainConfig(objective="generative", use_pcd=use_pcd,
                                 cd_steps=2, minibatch_size=10,
                                 regroup_mode="fixed", regroup_rho=0.7, seed=21)
            trainer = Trainer(zero_model(D=5), config, n_train=40)
            for _ in range(3):
                trainer.run_epoch(X)
            runs.append(trainer.params)
        assert np.array_equal(runs[0].W, runs[1].W)
        assert np.array_equal(runs[0].b_v, runs[1].b_v)
        assert np.array_equal(runs[0].c, runs[1].c)

    def test_hybrid_runs_and_grows(self):
        ds_X = random_binary(18, 30, 4)
        ds_Y = (np.arange(30) % 3).astype(int)
        config = TrainConfig(objective="hybrid", alpha=0.01, cd_steps=1,
                             minibatch_size=10, seed=22)
        trainer = Trainer(zero_model(D=4, C=3), config, n_train=30)
        for _ in range(3):
            trainer.run_epoch(ds_X, ds_Y)
        assert trainer.params.l >= 1
        assert np.all(np.isfinite(trainer.params.W))

    def test_objective_requires_labels(self):
        config = TrainConfig(objective="discriminative", minibatch_size=4, seed=23)
        with pytest.raises(ValueError):
            Trainer(zero_model(D=4), config, n_train=4)

    @pytest.mark.parametrize("dis_grad", ["exact", "sampled"])
    def test_discriminative_objective_learns_separable_labels(self, dis_grad):
        from irbm.datasets import synth_shifted_patterns
        from irbm.evaluation import classification_metrics
        ds = synth_shifted_patterns(6, 2, 120, seed=24, labeled=True)
        X = ds.X.astype(float)
        config = TrainConfig(objective="discriminative", dis_grad=dis_grad,
                             lr_mode="adagrad", global_lr=0.1, cd_steps=2,
                             minibatch_size=30, seed=25)
        trainer = Trainer(zero_model(D=6, C=6), config, n_train=120)
        for _ in range(15):
            trainer.run_epoch(X, ds.y)
        error, _, _, _ = classification_metrics(trainer.params, X, ds.y)
        assert trainer.params.l >= 2          # growth driven by sampled cutoffs
        assert error < 0.5                    # far below the 5/6 chance level
