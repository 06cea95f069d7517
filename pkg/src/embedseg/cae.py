"""Stacked-autoencoder pretraining and correspondence training on frame pairs.

The network is a plain feedforward stack: tanh hidden layers and a linear
output layer, trained with minibatch SGD on squared error. Pretraining trains
one layer at a time as an autoencoder on the encodings of the layer below
(each layer's decoder is discarded once the next layer starts). For
correspondence training, discovered word pairs are DTW-aligned and the
network learns to map each frame onto its aligned counterpart; encodings from
a chosen hidden layer then serve as the learned feature representation.
"""

import logging

import numpy as np

from .corpus import Corpus, Utterance
from .dtw import dtw_align

logger = logging.getLogger(__name__)


class TrainConfig:
    """Minibatch SGD settings shared by pretraining and correspondence training."""

    def __init__(self, batch_size=256, epochs_pretrain=30, epochs_cae=120,
                 lr_pretrain=250e-6, lr_cae=2e-3, seed=0):
        for name, value in [
            ("batch_size", batch_size),
            ("epochs_pretrain", epochs_pretrain),
            ("epochs_cae", epochs_cae),
        ]:
            if value < 0 or (name == "batch_size" and value < 1):
                raise ValueError("%s must be positive" % name)
        if lr_pretrain <= 0 or lr_cae <= 0:
            raise ValueError("learning rates must be positive")
        self.batch_size = int(batch_size)
        self.epochs_pretrain = int(epochs_pretrain)
        self.epochs_cae = int(epochs_cae)
        self.lr_pretrain = float(lr_pretrain)
        self.lr_cae = float(lr_cae)
        self.seed = int(seed)


def _init_layer(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    b = np.zeros(fan_out)
    return W, b


class Mlp:
    """tanh hidden layers with a linear output layer.

    `layer_dims` is [input, hidden..., output]; weights[i] maps layer i to
    layer i+1.
    """

    def __init__(self, layer_dims, rng=None):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self.layer_dims = [int(d) for d in layer_dims]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            W, b = _init_layer(rng, fan_in, fan_out)
            self.weights.append(W)
            self.biases.append(b)
        self.loss_history = []

    @property
    def n_hidden(self):
        return len(self.layer_dims) - 2

    def forward(self, Y):
        """All layer activations for a batch: [a0, a1, ..., output].

        a0 is the input; intermediate entries are tanh activations; the last
        entry is the linear output.
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if Y.shape[1] != self.layer_dims[0]:
            raise ValueError(
                "input dim %d does not match network input %d"
                % (Y.shape[1], self.layer_dims[0])
            )
        activations = [Y]
        a = Y
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            a = z if i == last else np.tanh(z)
            activations.append(a)
        return activations

    def output(self, Y):
        return self.forward(Y)[-1]

    def encode(self, Y, layer_index):
        """Activations of hidden layer `layer_index` (1-based)."""
        if not 1 <= layer_index <= self.n_hidden:
            raise ValueError(
                "layer_index must be in [1, %d], got %d" % (self.n_hidden, layer_index)
            )
        return self.forward(Y)[layer_index]


def mlp_forward(net, y):
    """Single-frame forward pass; returns the activation list (1-D arrays)."""
    return [a[0] for a in net.forward(np.asarray(y)[None, :])]


def _backprop(net, Y, T):
    """Mean loss over the batch and gradients of it.

    Loss per sample is 0.5 * ||t - output||^2; returned gradients are for the
    batch mean.
    """
    n = Y.shape[0]
    activations = net.forward(Y)
    out = activations[-1]
    diff = out - T
    loss = 0.5 * float(np.sum(diff**2)) / n

    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    delta = diff / n
    for i in range(len(net.weights) - 1, -1, -1):
        a_prev = activations[i]
        grads_w[i] = delta.T @ a_prev
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (1.0 - activations[i] ** 2)
    return loss, grads_w, grads_b


def mlp_grad(net, y, target):
    """Exact gradients of 0.5 * ||target - output||^2 for one sample."""
    _, grads_w, grads_b = _backprop(
        net, np.asarray(y)[None, :], np.asarray(target)[None, :]
    )
    return grads_w, grads_b


def _sgd_epochs(net, X, T, epochs, lr, batch_size, rng):
    losses = []
    n = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads_w, grads_b = _backprop(net, X[idx], T[idx])
            epoch_loss += loss * len(idx)
            for W, b, gw, gb in zip(net.weights, net.biases, grads_w, grads_b):
                W -= lr * gw
                b -= lr * gb
        losses.append(epoch_loss / n)
    return losses


def pretrain_stacked(data, hidden_dims, config, rng):
    """Layer-wise autoencoder pretraining; returns the stacked encoder.

    Each hidden layer is trained as a single-layer autoencoder on the
    encodings of the layers below it; the layer's linear decoder is discarded
    when moving on. The returned network carries a fresh (untrained) linear
    output head mapping back to the input dimensionality.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise ValueError("pretraining data is empty")
    d_in = data.shape[1]

    encoder_weights, encoder_biases = [], []
    pretrain_losses = []
    current = data
    for width in hidden_dims:
        layer = Mlp([current.shape[1], width, current.shape[1]], rng=rng)
        losses = _sgd_epochs(
            layer, current, current,
            config.epochs_pretrain, config.lr_pretrain, config.batch_size, rng,
        )
        pretrain_losses.append(losses)
        encoder_weights.append(layer.weights[0])
        encoder_biases.append(layer.biases[0])
        current = np.tanh(current @ layer.weights[0].T + layer.biases[0])

    net = Mlp([d_in] + list(hidden_dims) + [d_in], rng=rng)
    for i in range(len(hidden_dims)):
        net.weights[i] = encoder_weights[i]
        net.biases[i] = encoder_biases[i]
    net.pretrain_losses = pretrain_losses
    return net


class FramePairSet:
    """Aligned frame pairs: inputs (rows of A) map to targets (rows of B)."""

    def __init__(self, a, b):
        self.a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        self.b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if self.a.shape != self.b.shape:
            raise ValueError("pair sides must have identical shape")

    def __len__(self):
        return self.a.shape[0]


def build_frame_pairs(word_pairs, corpus, both_directions=False):
    """DTW-align each word pair and emit one frame pair per path step.

    `word_pairs` holds ((utt1, start1, end1), (utt2, start2, end2)) segment
    pairs; alignment uses cosine frame distance. With `both_directions`, each
    aligned frame pair is also emitted swapped. The same frame may appear in
    several pairs (warping repeats frames).
    """
    a_rows, b_rows = [], []
    for (utt1, s1, e1), (utt2, s2, e2) in word_pairs:
        seg1 = corpus[utt1].frames[s1:e1]
        seg2 = corpus[utt2].frames[s2:e2]
        if seg1.shape[0] == 0 or seg2.shape[0] == 0:
            raise ValueError(
                "empty segment in word pair (%s,%d,%d)-(%s,%d,%d)"
                % (utt1, s1, e1, utt2, s2, e2)
            )
        for i, j in dtw_align(seg1, seg2, metric="cosine").path:
            a_rows.append(seg1[i])
            b_rows.append(seg2[j])
            if both_directions:
                a_rows.append(seg2[j])
                b_rows.append(seg1[i])
    return FramePairSet(np.array(a_rows), np.array(b_rows))


def train_cae(net, pairs, config, rng):
    """Minibatch SGD on the correspondence loss; returns the trained net.

    Per-epoch mean losses are recorded on `net.loss_history`.
    """
    if pairs.a.shape[1] != net.layer_dims[0] or pairs.b.shape[1] != net.layer_dims[-1]:
        raise ValueError("pair dimensionality does not match the network")
    net.loss_history = _sgd_epochs(
        net, pairs.a, pairs.b, config.epochs_cae, config.lr_cae,
        config.batch_size, rng,
    )
    if net.loss_history:
        logger.info(
            "correspondence training: first epoch loss %.6g, last %.6g",
            net.loss_history[0], net.loss_history[-1],
        )
    return net


def encode_corpus(net, corpus, layer_index):
    """Replace every frame with its hidden-layer encoding."""
    return Corpus(
        [
            Utterance(u.id, u.speaker, net.encode(u.frames, layer_index), u.frame_period_ms)
            for u in corpus
        ]
    )


def save_mlp(net, path):
    """Text dump: layer dims, then row-major weights and biases per layer."""
    with open(path, "w") as f:
        f.write(" ".join(str(d) for d in net.layer_dims) + "\n")
        for W, b in zip(net.weights, net.biases):
            for row in W:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
            f.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_mlp(path):
    with open(path) as f:
        dims = [int(d) for d in f.readline().split()]
        net = Mlp(dims)
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            rows = [
                [float(v) for v in f.readline().split()] for _ in range(fan_out)
            ]
            net.weights[i] = np.array(rows)
            net.biases[i] = np.array([float(v) for v in f.readline().split()])
    return net


def load_word_pairs(path):
    """Word-pair file: lines `utt1 start1 end1 utt2 start2 end2`."""
    pairs = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            p = text.split()
            if len(p) != 6:
                raise ValueError("%s line %d: expected 6 fields" % (path, lineno))
            pairs.append(
                ((p[0], int(p[1]), int(p[2])), (p[3], int(p[4]), int(p[5])))
            )
    return pairs


def save_word_pairs(pairs, path):
    with open(path, "w") as f:
        for (u1, s1, e1), (u2, s2, e2) in pairs:
            f.write("%s %d %d %s %d %d\n" % (u1, s1, e1, u2, s2, e2))
