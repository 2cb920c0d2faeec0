"""Convolutional front end and time-restricted self-attention encoder.

The front end runs two stride-2 3x3 convolutions with ReLU (4x frame-rate
reduction), flattens the channel/frequency axes per frame and projects to
the model width.  Sinusoidal positional encodings are added, then E
identical pre-norm transformer layers follow.  Each layer's self-attention
lets frame i see every past frame but only ``eps_enc`` future frames, so
the total encoder look-ahead grows linearly with depth.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .attention import MhaParams, lookahead_mask, multi_head_attention


@dataclass
class FeatureMatrix:
    """Acoustic feature frames: (T, d_feat) float32, one row per frame."""

    frames: np.ndarray
    frame_shift_ms: float = 10.0


@dataclass
class CnnParams:
    conv1_w: np.ndarray  # (ch1, 1, 3, 3)
    conv1_b: np.ndarray  # (ch1,)
    conv2_w: np.ndarray  # (ch2, ch1, 3, 3)
    conv2_b: np.ndarray  # (ch2,)
    proj_w: np.ndarray   # (ch2 * ceil(ceil(d_feat/2)/2), d_model)
    proj_b: np.ndarray   # (d_model,)


@dataclass
class EncoderLayerParams:
    mha: MhaParams
    norm1_g: np.ndarray
    norm1_b: np.ndarray
    ff1_w: np.ndarray
    ff1_b: np.ndarray
    ff2_w: np.ndarray
    ff2_b: np.ndarray
    norm2_g: np.ndarray
    norm2_b: np.ndarray


@dataclass
class EncoderParams:
    cnn: CnnParams
    layers: list = field(default_factory=list)
    final_norm_g: np.ndarray = None
    final_norm_b: np.ndarray = None

    @property
    def d_model(self):
        return self.cnn.proj_w.shape[1]


@dataclass
class EncoderStates:
    """Encoder output sequence: (N, d_model) float32, 40 ms per row at 10 ms input shift."""

    states: np.ndarray
    frame_duration_ms: float = 40.0


def positional_encoding(pos, d_model):
    """Sinusoidal position vector: sin/cos(pos / 10000^(2i/d_model))."""
    even = np.arange(0, d_model, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, even / d_model)
    out = np.empty(d_model, dtype=np.float64)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles[: d_model // 2])
    return out.astype(np.float32)


def positional_encoding_rows(start, count, d_model):
    if count == 0:
        return np.zeros((0, d_model), dtype=np.float32)
    return np.stack([positional_encoding(p, d_model) for p in range(start, start + count)])


def cnn_frame_count(t):
    """Output frame count of the two stride-2 convolutions for t input frames."""
    return math.ceil(math.ceil(t / 2) / 2)


def feed_forward(x, w1, b1, w2, b2):
    """Position-wise feed forward: ReLU(x W1 + b1) W2 + b2."""
    return kernels.matmul(kernels.relu(kernels.matmul(x, w1) + b1), w2) + b2


def enc_cnn(features, cnn):
    """Run the convolutional front end; returns the projected (N, d_model) matrix.

    Positional encodings are not added here; callers add them before the
    self-attention stack.
    """
    frames = features.frames if isinstance(features, FeatureMatrix) else np.asarray(features)
    if frames.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {frames.shape}")
    if frames.shape[0] < 1:
        raise ValueError("input too short")
    h = kernels.conv2d(frames[None, :, :], cnn.conv1_w, stride=2, pad=1)
    h = kernels.relu(h + cnn.conv1_b[:, None, None])
    h = kernels.conv2d(h, cnn.conv2_w, stride=2, pad=1)
    h = kernels.relu(h + cnn.conv2_b[:, None, None])
    n = h.shape[1]
    flat = h.transpose(1, 0, 2).reshape(n, -1)  # per frame: channels-major flatten
    return kernels.matmul(flat, cnn.proj_w) + cnn.proj_b


def encoder_layer(x, layer, mask):
    """One pre-norm encoder layer: self-attention then feed forward, both residual."""
    normed = kernels.layer_norm(x, layer.norm1_g, layer.norm1_b)
    x = x + multi_head_attention(normed, normed, normed, layer.mha, mask)
    normed = kernels.layer_norm(x, layer.norm2_g, layer.norm2_b)
    return x + feed_forward(normed, layer.ff1_w, layer.ff1_b, layer.ff2_w, layer.ff2_b)


def encoder_forward(x0, params, eps_enc, frame_shift_ms=10.0):
    """Run the self-attention stack over CNN+position-encoded input rows.

    eps_enc is the per-layer future visibility in encoder frames; math.inf
    removes the restriction entirely.
    """
    x = np.asarray(x0, dtype=np.float32)
    n = x.shape[0]
    mask = lookahead_mask(n, n, eps_enc)
    for layer in params.layers:
        x = encoder_layer(x, layer, mask)
    states = kernels.layer_norm(x, params.final_norm_g, params.final_norm_b)
    return EncoderStates(states, frame_duration_ms=4.0 * frame_shift_ms)


def encode(features, params, eps_enc):
    """Features -> encoder states: CNN front end, positional encoding, layer stack."""
    x0 = enc_cnn(features, params.cnn)
    x0 = x0 + positional_encoding_rows(0, x0.shape[0], params.d_model)
    shift = features.frame_shift_ms if isinstance(features, FeatureMatrix) else 10.0
    return encoder_forward(x0, params, eps_enc, frame_shift_ms=shift)
