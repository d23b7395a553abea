"""Equivariant message-passing encoder and decoder."""

import numpy as np
import pytest
import torch

from gfnode.codec import (Encoder, EquivariantLayer, GraphCodec, decode, encode,
                          frame_tensors, raw_node_features)
from gfnode.errors import InvalidArgumentError
from gfnode.graph import MolecularFrame, MolecularGraph, build_graph
from gfnode.synthetic import random_molecule


def rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def boosted(codec):
    """Make coordinate gates large so equivariance tests see real updates."""
    with torch.no_grad():
        for layer in codec.layers:
            for mlp in (layer.coord_gate, layer.velocity_gate, layer.velocity_scale):
                mlp.layers[-1].weight.normal_(0, 0.5)
    return codec


class TestRawFeatures:
    def test_zero_velocity(self):
        feats = raw_node_features(np.zeros((3, 3)), [1, 6, 8])
        np.testing.assert_array_equal(feats[:, 0], 0.0)

    def test_normalization(self):
        feats = raw_node_features(np.zeros((2, 3)), [9, 6], z_max=9.0)
        assert feats[0, 1] == 1.0
        assert abs(feats[1, 1] - 0.6667) < 1e-4

    def test_speed(self):
        feats = raw_node_features(np.array([[3.0, 4.0, 0.0]]), [1])
        assert feats[0, 0] == 5.0

    def test_bad_zmax(self):
        with pytest.raises(InvalidArgumentError):
            raw_node_features(np.zeros((1, 3)), [1], z_max=0.0)

    def test_encoder_uses_raw_features(self):
        torch.manual_seed(0)
        enc = Encoder(4)
        v = torch.tensor([[[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]]])
        z = torch.tensor([[6, 9]])
        expected = enc.embed(torch.as_tensor(raw_node_features(v[0].numpy(), [6, 9])))
        torch.testing.assert_close(enc.init_features(v, z)[0], expected)


class TestEquivariance:
    def setup_method(self):
        torch.manual_seed(0)
        self.rng = np.random.default_rng(0)
        self.encoder = Encoder(8, 2)
        boosted(self.encoder.gnn)
        self.frame = random_molecule(6, self.rng)
        self.graph = build_graph(self.frame)

    def test_rotation_translation(self):
        h, z = encode(self.encoder, self.frame, self.graph)
        for _ in range(5):
            R, t = rotation(self.rng), self.rng.standard_normal(3)
            moved = MolecularFrame(self.frame.positions @ R.T + t, self.frame.velocities @ R.T,
                                   self.frame.atomic_numbers)
            h2, z2 = encode(self.encoder, moved, self.graph)
            assert (h2 - h).abs().max() < 1e-8
            Rt = torch.as_tensor(R)
            assert (z2[:, 0] - (z[:, 0] @ Rt.T + torch.as_tensor(t))).abs().max() < 1e-8
            assert (z2[:, 1] - z[:, 1] @ Rt.T).abs().max() < 1e-8

    def test_permutation(self):
        perm = self.rng.permutation(6)
        moved = MolecularFrame(self.frame.positions[perm], self.frame.velocities[perm],
                               self.frame.atomic_numbers[perm])
        h, z = encode(self.encoder, self.frame, self.graph)
        h2, z2 = encode(self.encoder, moved, self.graph.permuted(perm))
        torch.testing.assert_close(h2, h[perm])
        torch.testing.assert_close(z2, z[perm])

    def test_mirror_symmetric_pair(self):
        pos = np.array([[-0.6, 0.0, 0.0], [0.6, 0.0, 0.0]])
        vel = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]])
        frame = MolecularFrame(pos, vel, [6, 6])
        h, _ = encode(self.encoder, frame, build_graph(frame))
        assert (h[0] - h[1]).abs().max() < 1e-10

    def test_decoder_equivariance(self):
        torch.manual_seed(2)
        dec = boosted(GraphCodec(8, 2))
        h = torch.randn(6, 8)
        z = torch.as_tensor(self.rng.standard_normal((6, 2, 3)))
        R = torch.as_tensor(rotation(self.rng))
        t = torch.as_tensor(self.rng.standard_normal(3))
        h1, z1 = decode(dec, h, z, self.graph)
        zr = torch.stack([z[:, 0] @ R.T + t, z[:, 1] @ R.T], dim=1)
        h2, z2 = decode(dec, h, zr, self.graph)
        assert (h2 - h1).abs().max() < 1e-8
        assert (z2[:, 0] - (z1[:, 0] @ R.T + t)).abs().max() < 1e-8
        assert (z2[:, 1] - z1[:, 1] @ R.T).abs().max() < 1e-8


class TestLayer:
    def test_zero_gates_keep_coordinates(self):
        torch.manual_seed(0)
        codec = boosted(GraphCodec(4, 3)).zero_coordinate_updates_()
        rng = np.random.default_rng(1)
        frame = random_molecule(5, rng)
        x, v, z, adj = frame_tensors(frame, build_graph(frame))
        h = torch.randn(1, 5, 4)
        _, x2, v2 = codec(h, x, v, adj)
        torch.testing.assert_close(x2, x, rtol=0, atol=0)
        torch.testing.assert_close(v2, v, rtol=0, atol=0)

    def test_isolated_node(self):
        torch.manual_seed(0)
        layer = EquivariantLayer(4)
        with torch.no_grad():
            layer.coord_gate.layers[-1].weight.fill_(1.0)
            layer.velocity_gate.layers[-1].weight.fill_(1.0)
            layer.velocity_scale.zero_output_()
        h = torch.randn(1, 3, 4)
        x = torch.randn(1, 3, 3)
        v = torch.randn(1, 3, 3)
        adj = torch.zeros(1, 3, 3)
        adj[0, 0, 1] = adj[0, 1, 0] = 1.0
        _, x2, v2 = layer(h, x, v, adj)
        torch.testing.assert_close(x2[0, 2], x[0, 2], rtol=0, atol=0)
        torch.testing.assert_close(v2[0, 2], v[0, 2], rtol=0, atol=0)
        assert (x2[0, 0] - x[0, 0]).abs().max() > 0

    def test_messages_see_relative_positions_only(self):
        torch.manual_seed(0)
        layer = EquivariantLayer(4)
        h, x, v = torch.randn(1, 4, 4), torch.randn(1, 4, 3), torch.randn(1, 4, 3)
        adj = torch.ones(1, 4, 4) - torch.eye(4)
        shift = torch.tensor([1.0, -2.0, 0.5])
        h1, x1, v1 = layer(h, x, v, adj)
        h2, x2, v2 = layer(h, x + shift, v, adj)
        torch.testing.assert_close(h1, h2)
        torch.testing.assert_close(x1 + shift, x2)
        torch.testing.assert_close(v1, v2)

    def test_bad_sizes(self):
        with pytest.raises(InvalidArgumentError):
            GraphCodec(4, 0)
        frame = random_molecule(3, np.random.default_rng(0))
        with pytest.raises(InvalidArgumentError):
            frame_tensors(frame, MolecularGraph(4, ()))
