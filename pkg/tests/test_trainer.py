import logging

import numpy as np
import pytest

from graphtsne import (Graph, LabeledDataset, MalformedInputError,
                       TrainingError, TrainConfig, composite_loss_and_grad,
                       default_config, embed, joint_p, kl_loss_and_grad,
                       pairwise_sq_euclidean, train_full_batch,
                       train_minibatch)
from graphtsne.gcn import init_model
from graphtsne.graph import all_pairs_distances
from graphtsne.trainer import apply_overrides, read_config_file
from graphtsne.synthetic import random_dataset, sbm_dataset


def affinity_pair(rng, n=12):
    pg = joint_p(all_pairs_distances(random_dataset(n, 4 * n, seed=1).graph), 4.0)
    px = joint_p(pairwise_sq_euclidean(rng.normal(size=(n, 3))), 4.0)
    return pg, px


class TestCompositeLoss:
    def test_alpha_zero_equals_feature_loss(self, rng):
        pg, px = affinity_pair(rng)
        y = rng.normal(size=(12, 2))
        combo = composite_loss_and_grad(pg, px, y, alpha=0.0)
        loss_x, grad_x = kl_loss_and_grad(px, y)
        assert combo.total == loss_x
        assert np.array_equal(combo.grad, grad_x)

    def test_alpha_one_equals_graph_loss(self, rng):
        pg, px = affinity_pair(rng)
        y = rng.normal(size=(12, 2))
        combo = composite_loss_and_grad(pg, px, y, alpha=1.0)
        loss_g, grad_g = kl_loss_and_grad(pg, y)
        assert combo.total == loss_g
        assert np.array_equal(combo.grad, grad_g)

    def test_midpoint_matches_independent_recomposition(self, rng):
        pg, px = affinity_pair(rng)
        y = rng.normal(size=(12, 2))
        combo = composite_loss_and_grad(pg, px, y, alpha=0.5)
        loss_g, grad_g = kl_loss_and_grad(pg, y)
        loss_x, grad_x = kl_loss_and_grad(px, y)
        assert abs(combo.total - 0.5 * (loss_g + loss_x)) <= 1e-12
        assert np.abs(combo.grad - 0.5 * (grad_g + grad_x)).max() <= 1e-12

    def test_exactly_linear_in_alpha(self, rng):
        pg, px = affinity_pair(rng)
        y = rng.normal(size=(12, 2))
        at = [composite_loss_and_grad(pg, px, y, a).total
              for a in (0.0, 0.5, 1.0)]
        assert abs(at[1] - 0.5 * (at[0] + at[2])) <= 1e-12

    def test_alpha_out_of_range_rejected(self, rng):
        pg, px = affinity_pair(rng)
        y = rng.normal(size=(12, 2))
        with pytest.raises(ValueError):
            composite_loss_and_grad(pg, px, y, alpha=1.5)

    def test_size_mismatch_rejected(self, rng):
        pg, px = affinity_pair(rng)
        with pytest.raises(ValueError):
            composite_loss_and_grad(pg, px, rng.normal(size=(5, 2)), alpha=0.5)


class TestTrainConfig:
    def test_validation_catches_bad_fields(self):
        good = dict(alpha=0.5, epochs=5, hidden_dim=8, mode="full")
        TrainConfig(**good).validate()
        for bad in (dict(alpha=-0.1), dict(perplexity=1.0), dict(epochs=-1),
                    dict(mode="bogus"), dict(lr=0.0)):
            cfg = TrainConfig(**{**good, **bad})
            with pytest.raises(ValueError):
                cfg.validate()

    def test_preset_split_by_size(self):
        small = default_config(10000)
        assert (small.mode, small.hidden_dim, small.epochs) == ("full", 128, 360)
        large = default_config(10001)
        assert (large.mode, large.hidden_dim, large.epochs) == ("minibatch", 256, 5)
        assert large.batch_count == 1000
        assert large.fanouts == (10, 15)
        assert small.lr == large.lr == 0.00075
        assert small.perplexity == 30.0


class TestTrainFullBatch:
    def test_zero_epochs_returns_initial_model(self, small_sbm):
        cfg = TrainConfig(alpha=0.5, epochs=0, hidden_dim=8, mode="full", seed=5)
        model, report = train_full_batch(small_sbm, cfg)
        reference = init_model(small_sbm.features.shape[1], 8, seed=5)
        for (_, a), (_, b) in zip(model.named_state(), reference.named_state()):
            assert np.array_equal(a, b)
        assert report.num_epochs == 0

    def test_sbm_loss_halves_in_200_epochs(self):
        ds = sbm_dataset([30, 30, 30], p_intra=0.5, p_inter=0.005,
                         feature_dim=6, seed=3)
        cfg = TrainConfig(alpha=0.5, epochs=200, hidden_dim=16, mode="full",
                          lr=0.02, seed=4)
        _, report = train_full_batch(ds, cfg)
        assert report.total_losses[-1] <= 0.5 * report.total_losses[0]

    def test_same_seed_identical_loss_sequences(self, small_sbm):
        cfg = TrainConfig(alpha=0.3, epochs=8, hidden_dim=8, mode="full", seed=6)
        _, r1 = train_full_batch(small_sbm, cfg)
        _, r2 = train_full_batch(small_sbm, cfg)
        assert r1.total_losses == r2.total_losses
        assert r1.graph_losses == r2.graph_losses

    def test_report_has_one_record_per_epoch(self, small_sbm):
        cfg = TrainConfig(alpha=0.5, epochs=7, hidden_dim=8, mode="full", seed=1)
        _, report = train_full_batch(small_sbm, cfg)
        assert (len(report.total_losses) == len(report.graph_losses)
                == len(report.feature_losses) == 7)
        assert report.final_lr > 0 and report.wall_time_s >= 0

    def test_identical_features_raise_named_training_error(self):
        # uniform feature rows: no bandwidth can hit the target perplexity
        g = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
        data = LabeledDataset(graph=g, features=np.ones((6, 3)))
        cfg = TrainConfig(alpha=0.5, epochs=2, hidden_dim=4, mode="full",
                          perplexity=3.0)
        with pytest.raises(TrainingError, match="feature"):
            train_full_batch(data, cfg)

    def test_edgeless_graph_raises_named_training_error(self):
        g = Graph.from_edges(6, [])
        data = LabeledDataset(graph=g,
                              features=np.random.default_rng(0).normal(size=(6, 3)))
        cfg = TrainConfig(alpha=0.5, epochs=2, hidden_dim=4, mode="full")
        with pytest.raises(TrainingError, match="graph"):
            train_full_batch(data, cfg)

    def test_wrong_mode_rejected(self, small_sbm):
        cfg = TrainConfig(alpha=0.5, epochs=1, hidden_dim=8, mode="minibatch")
        with pytest.raises(ValueError):
            train_full_batch(small_sbm, cfg)


class TestTrainMinibatch:
    def test_toy_loss_decreases_by_epoch_three(self):
        ds = random_dataset(300, 1200, feature_dim=8, seed=9)
        cfg = TrainConfig(alpha=0.5, epochs=3, hidden_dim=16, mode="minibatch",
                          batch_count=8, fanouts=(4, 6), seed=10)
        _, report = train_minibatch(ds, cfg)
        assert report.total_losses[2] < report.total_losses[0]

    def test_single_batch_partition_contains_all_nodes(self):
        ds = random_dataset(40, 160, feature_dim=5, seed=12)
        cfg = TrainConfig(alpha=0.5, epochs=1, hidden_dim=8, mode="minibatch",
                          batch_count=1, fanouts=(3, 4), seed=13)
        seen = []
        _, report = train_minibatch(
            ds, cfg, on_batch=lambda e, b, sample, loss:
            seen.append(np.sort(sample.batch_nodes)))
        assert len(seen) == 1
        assert np.array_equal(seen[0], np.arange(40))

    def test_tiny_batches_skipped_with_warning(self, caplog):
        ds = random_dataset(8, 30, feature_dim=4, seed=14)
        # 8 nodes over 5 batches: sizes 2,2,2,1,1 -> all below 3, except none
        cfg = TrainConfig(alpha=0.5, epochs=1, hidden_dim=4, mode="minibatch",
                          batch_count=5, fanouts=(2, 2), seed=15)
        with caplog.at_level(logging.WARNING):
            with pytest.raises(TrainingError, match="skipped"):
                train_minibatch(ds, cfg)
        assert any("skipping batch" in rec.message for rec in caplog.records)

    def test_mixed_batch_sizes_executes_large_ones(self, caplog):
        ds = random_dataset(11, 40, feature_dim=4, seed=16)
        # 11 nodes over 3 batches: sizes 4,4,3 -> all execute
        cfg = TrainConfig(alpha=0.5, epochs=2, hidden_dim=4, mode="minibatch",
                          batch_count=3, fanouts=(2, 2), seed=17)
        counted = []
        _, report = train_minibatch(ds, cfg,
                                    on_batch=lambda e, b, s, l: counted.append(b))
        assert len(counted) == 6
        assert report.num_epochs == 2

    def test_determinism(self):
        ds = random_dataset(60, 240, feature_dim=5, seed=18)
        cfg = TrainConfig(alpha=0.4, epochs=2, hidden_dim=8, mode="minibatch",
                          batch_count=4, fanouts=(3, 3), seed=19)
        _, r1 = train_minibatch(ds, cfg)
        _, r2 = train_minibatch(ds, cfg)
        assert r1.total_losses == r2.total_losses

    def test_fanout_count_must_match_layers(self):
        ds = random_dataset(30, 100, feature_dim=4, seed=20)
        cfg = TrainConfig(alpha=0.5, epochs=1, hidden_dim=8, mode="minibatch",
                          batch_count=2, fanouts=(3,), seed=21)
        with pytest.raises(ValueError, match="fanout"):
            train_minibatch(ds, cfg)


class TestEmbed:
    def test_output_shape(self, small_sbm):
        model = init_model(small_sbm.features.shape[1], 8, seed=22)
        y = embed(model, small_sbm)
        assert y.shape == (small_sbm.graph.num_nodes, 2)

    def test_two_calls_bit_identical(self, small_sbm):
        model = init_model(small_sbm.features.shape[1], 8, seed=23)
        assert np.array_equal(embed(model, small_sbm), embed(model, small_sbm))

    def test_automorphism_equivariance_on_cycle(self):
        # a 4-cycle with identical features is vertex-transitive: rotating
        # node identity must permute coordinates, so the multiset of
        # coordinates (up to ordering) is invariant
        edges_a = [(0, 1), (1, 2), (2, 3), (0, 3)]
        edges_b = [(1, 2), (2, 3), (3, 0), (1, 0)]   # same cycle, relabeled
        x = np.ones((4, 3))
        ga = Graph.from_edges(4, edges_a)
        gb = Graph.from_edges(4, edges_b)
        model = init_model(3, 6, seed=24)
        ya = embed(model, LabeledDataset(graph=ga, features=x))
        yb = embed(model, LabeledDataset(graph=gb, features=x))
        sa = sorted(map(tuple, np.round(ya, 12)))
        sb = sorted(map(tuple, np.round(yb, 12)))
        assert sa == sb

    def test_feature_dim_mismatch_rejected(self, small_sbm):
        model = init_model(small_sbm.features.shape[1] + 1, 8, seed=25)
        with pytest.raises(ValueError):
            embed(model, small_sbm)


class TestConfigFile:
    def test_parse_and_apply(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "# training setup\n"
            "alpha = 0.25\n"
            "epochs = 12\n"
            "fanouts = 5,9\n"
            "mode = minibatch   # regime\n"
            "lr = 0.001\n")
        overrides = read_config_file(p)
        assert overrides == {"alpha": 0.25, "epochs": 12, "fanouts": (5, 9),
                             "mode": "minibatch", "lr": 0.001}
        cfg = apply_overrides(default_config(100), overrides)
        assert cfg.alpha == 0.25 and cfg.fanouts == (5, 9)

    def test_unknown_key_names_line(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("alpha = 0.5\nwat = 3\n")
        with pytest.raises(MalformedInputError, match=r"2"):
            read_config_file(p)

    def test_bad_value_names_line(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("epochs = soon\n")
        with pytest.raises(MalformedInputError, match=r"1"):
            read_config_file(p)

    def test_missing_equals_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("alpha 0.5\n")
        with pytest.raises(MalformedInputError):
            read_config_file(p)
