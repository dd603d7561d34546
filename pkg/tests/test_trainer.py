from dataclasses import replace

import numpy as np
import pytest

from hpunet.backend.gradcheck import check_gradients
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.errors import ConfigError, TrainingDivergedError, TruncatedArchiveError
from hpunet.model.params import build_parameters
from hpunet.synthdata.instances import gen_instances
from hpunet.synthdata.lesions import gen_ambiguous_lesions
from hpunet.trainer.batching import augment_pair, draw_batch
from hpunet.trainer.checkpoint import load_checkpoint, save_checkpoint
from hpunet.trainer.config import TrainConfig
from hpunet.trainer.loop import compute_loss, initial_geco, parameter_bytes, run_training
from hpunet.trainer.optimizer import AdamW, decays
from hpunet.trainer.session import checkpoint_name, run_files
from hpunet.trainer.trace import check_geco_trace, curve_header, read_curves


@pytest.fixture(scope="module")
def lesions():
    dataset, _ = gen_ambiguous_lesions(6, size=24, seed=3)
    return dataset


class TestTrainConfig:
    def test_schedule(self):
        cfg = TrainConfig()
        assert cfg.learning_rate(0) == 1e-3
        assert cfg.learning_rate(2999) == 1e-3
        assert cfg.learning_rate(3000) == 5e-4
        assert cfg.learning_rate(4500) == 2.5e-4

    @pytest.mark.parametrize("kwargs", [
        {"lr_schedule": ((5, 1e-3),)},
        {"lr_schedule": ((0, 1e-3), (0, 1e-4))},
        {"objective": "mse"},
        {"topk_k": 0.0},
        {"geco_lambda_init": 0.0},
        {"batch_size": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs).validate()


class TestOptimizer:
    def test_only_kernels_decay(self):
        assert decays("decoder/logits/kernel")
        assert not decays("decoder/scale2/prior_head/bias")

    def test_first_step_moves_by_lr(self, tiny_params):
        params = tiny_params.copy()
        before = {n: t.data.copy() for n, t in params.items()}
        for _, t in params.items():
            t.grad = np.ones_like(t.data)
        AdamW(params, weight_decay=0.0).step(params, lr=0.01)
        for n, t in params.items():
            np.testing.assert_allclose(before[n] - t.data, 0.01, rtol=1e-3)
            assert t.grad is None

    def test_weight_decay_with_zero_gradient(self, tiny_params):
        params = tiny_params.copy()
        kernel, bias = "decoder/logits/kernel", "decoder/logits/bias"
        before_k, before_b = params[kernel].data.copy(), params[bias].data.copy()
        for _, t in params.items():
            t.grad = np.zeros_like(t.data)
        AdamW(params, weight_decay=0.1).step(params, lr=1.0)
        np.testing.assert_allclose(params[kernel].data, 0.9 * before_k, rtol=1e-5)
        np.testing.assert_array_equal(params[bias].data, before_b)

    def test_missing_gradient(self, tiny_params):
        params = tiny_params.copy()
        with pytest.raises(ValueError):
            AdamW(params).step(params, lr=0.1)


class TestBatching:
    def test_shifted_in_pixels_are_ignored(self):
        image = np.ones((1, 6, 6), dtype=np.float32)
        target = np.ones((6, 6), dtype=np.int32)
        ignore = np.zeros((6, 6), dtype=bool)
        for seed in range(10):
            img, tgt, ign = augment_pair(image, target, ignore, RngState(seed), 2)
            np.testing.assert_array_equal(img[0] == 0, ign)
            np.testing.assert_array_equal(tgt == 0, ign)

    def test_deterministic(self, lesions):
        a = draw_batch(lesions, 4, RngState(5))
        b = draw_batch(lesions, 4, RngState(5))
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert a.images.shape == (4, 1, 24, 24) and a.targets.dtype == np.int32

    def test_instance_ids_are_redrawn(self):
        dataset = gen_instances(1, size=32, k_range=(3, 3), seed=0)
        targets = [draw_batch(dataset, 1, RngState(s), augment=False).targets[0] for s in range(8)]
        assert any(not np.array_equal(targets[0], t) for t in targets[1:])
        instances = dataset[0].instances
        for t in targets:
            np.testing.assert_array_equal(t > 0, instances > 0)


class TestTrace:
    def test_header(self):
        assert curve_header(2) == ["step", "ce_per_pixel", "lambda", "lr", "kl_total", "kl_scale_0", "kl_scale_1"]

    def test_rise_then_drop(self):
        rows = [{"step": s, "ce_per_pixel": ce, "lambda": lam}
                for s, ce, lam in [(0, 0.6, 1.0), (10, 0.2, 3.0), (20, 0.04, 8.0), (30, 0.03, 2.0)]]
        report = check_geco_trace(rows, kappa=0.05)
        assert report.crossing_step == 20 and report.peak_step == 20
        assert report.passed

    def test_never_crossing_fails(self):
        rows = [{"step": 0, "ce_per_pixel": 0.6, "lambda": 1.0}, {"step": 1, "ce_per_pixel": 0.5, "lambda": 2.0}]
        assert not check_geco_trace(rows, kappa=0.05).passed


class TestTraining:
    def test_incompatible_dataset(self, tiny_model_config, tiny_train_config):
        dataset = gen_instances(2, size=32, k_range=(2, 4), seed=0)
        with pytest.raises(ConfigError):
            run_training(tiny_model_config, tiny_train_config, dataset)

    def test_same_seed_is_bitwise_reproducible(self, tiny_model_config, tiny_train_config, lesions):
        a, rows_a = run_training(tiny_model_config, tiny_train_config, lesions)
        b, rows_b = run_training(tiny_model_config, tiny_train_config, lesions)
        assert parameter_bytes(a.params) == parameter_bytes(b.params)
        assert [r["loss"] for r in rows_a] == [r["loss"] for r in rows_b]
        assert a.geco == b.geco

    def test_different_seed_differs(self, tiny_model_config, tiny_train_config, lesions):
        a, _ = run_training(tiny_model_config, tiny_train_config, lesions)
        b, _ = run_training(tiny_model_config, replace(tiny_train_config, seed=8), lesions)
        assert parameter_bytes(a.params) != parameter_bytes(b.params)

    def test_run_directory_outputs(self, tmp_path, tiny_model_config, tiny_train_config, lesions):
        final, rows = run_training(tiny_model_config, tiny_train_config, lesions, run_dir=tmp_path)
        files = run_files(tmp_path)
        assert files["config"].exists() and files["final"].exists()
        assert (tmp_path / checkpoint_name(2)).exists()
        curves = read_curves(files["curves"])
        assert [r["step"] for r in curves] == [0, 1, 2, 3]
        assert len(curves[0]["kl_per_scale"]) == 2
        assert curves[-1]["lambda"] == pytest.approx(rows[-1]["lambda"])
        assert final.iteration == 4

    def test_resume_matches_uninterrupted(self, tmp_path, tiny_model_config, tiny_train_config, lesions):
        full, _ = run_training(tiny_model_config, tiny_train_config, lesions, run_dir=tmp_path / "full")
        partial = load_checkpoint(tmp_path / "full" / checkpoint_name(2))
        resumed, _ = run_training(tiny_model_config, tiny_train_config, lesions, resume=partial)
        assert parameter_bytes(resumed.params) == parameter_bytes(full.params)
        assert resumed.geco == full.geco

    def test_elbo_objective_keeps_lambda(self, tiny_model_config, tiny_train_config, lesions):
        cfg = replace(tiny_train_config, objective="elbo", iterations=2)
        final, rows = run_training(tiny_model_config, cfg, lesions)
        assert all(r["lambda"] == 1.0 for r in rows)
        assert final.geco.steps == 0

    def test_geco_loss_gradients(self, tiny_params64, tiny_train_config, lesions):
        batch = draw_batch(lesions, 2, RngState(0))
        batch = replace(batch, images=batch.images.astype(np.float64))
        geco = initial_geco(tiny_train_config)

        def fn():
            return compute_loss(tiny_params64, batch, geco, RngState(1), tiny_train_config)[0]

        names = ["decoder/logits/kernel", "decoder/scale1/prior_head/kernel",
                 "posterior/decoder/scale1/head/kernel", "encoder/scale2/block0/conv0/kernel"]
        worst = check_gradients(fn, [tiny_params64[n] for n in names], max_entries=5, rng=RngState(3))
        assert worst < 1e-4

    def test_nan_parameters_diverge(self, tiny_model_config, tiny_train_config, lesions):
        params = build_parameters(tiny_model_config, RngState(0))
        params["decoder/logits/bias"].data[:] = np.nan
        batch = draw_batch(lesions, 2, RngState(0))
        with pytest.raises(TrainingDivergedError) as info:
            compute_loss(params, batch, initial_geco(tiny_train_config), RngState(1), tiny_train_config)
        assert info.value.metrics is not None


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, tiny_model_config, tiny_train_config, lesions):
        final, _ = run_training(tiny_model_config, replace(tiny_train_config, iterations=1), lesions)
        path = tmp_path / "ckpt.hput"
        save_checkpoint(path, final)
        loaded = load_checkpoint(path)
        assert parameter_bytes(loaded.params) == parameter_bytes(final.params)
        assert loaded.geco == final.geco
        assert loaded.model_config == final.model_config
        assert loaded.train_config == final.train_config
        assert loaded.adam_t == final.adam_t
        for name, m in final.adam_m.items():
            np.testing.assert_array_equal(loaded.adam_m[name], m)

    def test_truncated(self, tmp_path, tiny_params, tiny_model_config, tiny_train_config):
        from hpunet.trainer.checkpoint import Checkpoint
        path = tmp_path / "ckpt.hput"
        save_checkpoint(path, Checkpoint(tiny_params, initial_geco(tiny_train_config), 0,
                                         tiny_model_config, tiny_train_config))
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(TruncatedArchiveError, match="truncated archive"):
            load_checkpoint(path)

    def test_parameters_are_float32_tensors(self, tmp_path, tiny_params, tiny_model_config, tiny_train_config):
        from hpunet.trainer.checkpoint import Checkpoint
        path = tmp_path / "ckpt.hput"
        save_checkpoint(path, Checkpoint(tiny_params, initial_geco(tiny_train_config), 0,
                                         tiny_model_config, tiny_train_config))
        loaded = load_checkpoint(path)
        t = loaded.params["decoder/logits/kernel"]
        assert isinstance(t, Tensor) and t.kind == "float32" and t.requires_grad
