import numpy as np
import pytest

from dssl import checkpoint
from dssl.errors import CheckpointError, ShapeError
from dssl.loss import DsslHyper, node_posteriors
from dssl.model import ModelDims, embed, init_params


@pytest.fixture
def params():
    return init_params(ModelDims(4, 5, 3, mlp_hidden=6), 2, seed=3, combine="product")


def test_save_and_load(tmp_path, params):
    path = checkpoint.save(tmp_path / "m.ckpt", checkpoint.from_params(params, "abc", 6))
    saved = checkpoint.load(path, method="dssl")
    assert saved.K == 2
    assert saved.config_hash == "abc"
    assert saved.feature_dim == 4
    assert saved.out_dim == 3
    for name, tensor in params.named_tensors().items():
        assert np.array_equal(saved.arrays[name], tensor.data)


def test_model_params_restore_behavior(tmp_path, params, tiny_graph):
    path = checkpoint.save(tmp_path / "m.ckpt", checkpoint.from_params(params, mlp_hidden=6))
    restored = checkpoint.load(path).model_params()
    assert restored.head.combine == "product"
    hyper = DsslHyper(K=2)
    assert np.allclose(
        node_posteriors(restored, tiny_graph, hyper), node_posteriors(params, tiny_graph, hyper)
    )


def test_encoder_checkpoint(tmp_path, params, tiny_graph):
    path = checkpoint.save(tmp_path / "gae.ckpt", checkpoint.from_encoder(params.online))
    saved = checkpoint.load(path, method="gae")
    assert np.allclose(embed(saved.encoder(), tiny_graph), embed(params.online, tiny_graph))
    with pytest.raises(CheckpointError):
        saved.model_params()


def test_method_mismatch(tmp_path, params):
    path = checkpoint.save(tmp_path / "gae.ckpt", checkpoint.from_encoder(params.online))
    with pytest.raises(CheckpointError):
        checkpoint.load(path, method="dssl")


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        checkpoint.load(path)


def test_truncated_file(tmp_path, params):
    path = checkpoint.save(tmp_path / "m.ckpt", checkpoint.from_params(params))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(CheckpointError) as e:
        checkpoint.load(path)
    assert "truncated" in str(e.value)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError):
        checkpoint.load(path)


def test_feature_dim_check(params):
    saved = checkpoint.from_params(params)
    saved.check_feature_dim(4)
    with pytest.raises(ShapeError) as e:
        saved.check_feature_dim(7)
    assert "7" in str(e.value) and "4" in str(e.value)
