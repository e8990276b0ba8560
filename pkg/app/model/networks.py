# ==============================================================================
# This file is part of the SkeletonSR project.
#
# This project is licensed under the Apache License 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at:
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""
集合到序列模型：ISAB + PMA 组成的置换不变集合编码器，以及自回归 Transformer 解码器。

Set-to-sequence network: a permutation-invariant set encoder (ISAB stack and
PMA pooling) and an autoregressive transformer decoder over skeleton tokens.
"""

import math
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from app.datagen.encoding import encode_points
from app.models.ConfigModels import ModelConfig
from app.symbolic import tokens


class MAB(nn.Module):
    """
    多头注意力块：A = LN(Q + Attn(Q, K, K))，输出 LN(A + FF(A))。

    Multihead attention block: A = LN(Q + Attn(Q, K, K)), output LN(A + FF(A)).
    """

    def __init__(self, hidden_dim: int, num_heads: int):
        super().__init__()
        self.attention = nn.MultiheadAttention(hidden_dim, num_heads, dropout=0.0, batch_first=True)
        self.feed_forward = nn.Sequential(
            nn.Linear(hidden_dim, 4 * hidden_dim),
            nn.GELU(),
            nn.Linear(4 * hidden_dim, hidden_dim),
        )
        self.norm_attention = nn.LayerNorm(hidden_dim)
        self.norm_output = nn.LayerNorm(hidden_dim)

    def forward(self, queries: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
        attended, _ = self.attention(queries, keys, keys, need_weights=False)
        hidden = self.norm_attention(queries + attended)
        return self.norm_output(hidden + self.feed_forward(hidden))


class ISAB(nn.Module):
    """
    诱导集合注意力块，代价随点数线性增长 | Induced set attention block, linear in the set size
    """

    def __init__(self, hidden_dim: int, num_heads: int, inducing_points: int):
        super().__init__()
        self.inducing = nn.Parameter(torch.empty(1, inducing_points, hidden_dim))
        self.summarize = MAB(hidden_dim, num_heads)
        self.broadcast = MAB(hidden_dim, num_heads)

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        inducing = self.inducing.expand(points.shape[0], -1, -1)
        return self.broadcast(points, self.summarize(inducing, points))


class PMA(nn.Module):
    """
    多头注意力池化，输出 d_z 行 | Pooling by multihead attention onto d_z seed rows
    """

    def __init__(self, hidden_dim: int, num_heads: int, seeds: int):
        super().__init__()
        self.seeds = nn.Parameter(torch.empty(1, seeds, hidden_dim))
        self.pool = MAB(hidden_dim, num_heads)

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        return self.pool(self.seeds.expand(points.shape[0], -1, -1), points)


class SetEncoder(nn.Module):

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.input_projection = nn.Linear(config.input_feature_dim, config.hidden_dim)
        self.blocks = nn.ModuleList(
            ISAB(config.hidden_dim, config.num_heads, config.inducing_points) for _ in range(config.num_isab))
        self.pooling = PMA(config.hidden_dim, config.num_heads, config.pma_seeds)

    def forward(self, encoded: torch.Tensor) -> torch.Tensor:
        # [B, features, n] -> [B, n, features]
        hidden = self.input_projection(encoded.transpose(1, 2))
        for block in self.blocks:
            hidden = block(hidden)
        return self.pooling(hidden)


class SkeletonDecoder(nn.Module):

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.position_embedding = nn.Embedding(config.max_target_len, config.hidden_dim)
        layer = nn.TransformerDecoderLayer(
            d_model=config.hidden_dim,
            nhead=config.num_heads,
            dim_feedforward=4 * config.hidden_dim,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
        )
        self.layers = nn.TransformerDecoder(layer, num_layers=config.decoder_layers)
        self.output_projection = nn.Linear(config.hidden_dim, config.vocab_size)

    def forward(self, latent: torch.Tensor, prefix: torch.Tensor) -> torch.Tensor:
        length = prefix.shape[1]
        positions = torch.arange(length, device=prefix.device)
        hidden = self.token_embedding(prefix) + self.position_embedding(positions)[None, :, :]
        # True 表示屏蔽 | True means masked
        causal_mask = torch.triu(torch.ones(length, length, dtype=torch.bool, device=prefix.device), diagonal=1)
        padding_mask = prefix == tokens.PAD
        hidden = self.layers(hidden, latent, tgt_mask=causal_mask, tgt_key_padding_mask=padding_mask)
        return self.output_projection(hidden)


class SetToSequenceModel(nn.Module):
    """
    完整模型：encode 得到潜变量 z，decode_logits 给出下一个 token 的分布。

    Full model: encode yields the latent z, decode_logits gives next-token logits.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.encoder = SetEncoder(config)
        self.decoder = SkeletonDecoder(config)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        """
        线性层按 fan-in 均匀初始化，偏置为 0，LayerNorm 增益为 1，诱导点、种子和嵌入取 N(0, 1/sqrt(H))。

        Fan-in scaled uniform for projections, zero biases, unit layer-norm
        gains, N(0, 1/sqrt(H)) for inducing points, seeds and embeddings.
        """
        generator = torch.Generator().manual_seed(seed)
        std = 1.0 / math.sqrt(self.config.hidden_dim)
        with torch.no_grad():
            for name, parameter in self.named_parameters():
                if _is_layer_norm(name):
                    parameter.fill_(1.0 if name.endswith("weight") else 0.0)
                elif name.endswith("bias"):
                    parameter.zero_()
                elif name.endswith(("inducing", "seeds")) or "embedding" in name:
                    parameter.normal_(0.0, std, generator=generator)
                else:
                    bound = 1.0 / math.sqrt(parameter.shape[-1])
                    parameter.uniform_(-bound, bound, generator=generator)

    @property
    def dtype(self) -> torch.dtype:
        return self.decoder.output_projection.weight.dtype

    def encode(self, encoded: torch.Tensor) -> torch.Tensor:
        """
        :param encoded: 多热编码的点集 [B, 64, n] | Multi-hot point sets [B, 64, n]
        :return: 潜变量 z [B, d_z, H] | Latent z [B, d_z, H]
        """
        return self.encoder(encoded.to(self.dtype))

    def decode_logits(self, latent: torch.Tensor, prefix: torch.Tensor) -> torch.Tensor:
        """
        第 k 行是第 k+1 个 token 的 logits | Row k holds the logits of token k+1

        :param latent: 潜变量 [B, d_z, H] | Latent [B, d_z, H]
        :param prefix: 以 sos 开头的 token [B, L] | Tokens starting with sos [B, L]
        :return: logits [B, L, vocab]
        """
        if prefix.shape[1] > self.config.max_target_len:
            raise ValueError(f"Prefix length {prefix.shape[1]} exceeds max_target_len={self.config.max_target_len}")
        return self.decoder(latent, prefix)

    def forward(self, encoded: torch.Tensor, prefix: torch.Tensor) -> torch.Tensor:
        return self.decode_logits(self.encode(encoded), prefix)


def _is_layer_norm(name: str) -> bool:
    parts = name.split(".")
    return len(parts) >= 2 and "norm" in parts[-2]


def point_features(points: np.ndarray, config: ModelConfig) -> np.ndarray:
    """
    选取模型使用的输入列和输出行并做多热编码 | Select the model's variables plus y and multi-hot encode

    :param points: [B, 4, n]，最后一行为 y | [B, 4, n], last row is y
    :return: [B, (d_x + d_y) * 16, n]
    """
    rows = list(range(config.dim_x)) + [tokens.MAX_VARIABLES]
    return encode_points(points[:, rows, :])


def parameter_count(model: nn.Module) -> int:
    return sum(parameter.numel() for parameter in model.parameters())


def build_model(config: ModelConfig, seed: int = 0, precision: Optional[str] = None) -> SetToSequenceModel:
    model = SetToSequenceModel(config, seed)
    if precision == "float64":
        model = model.double()
    return model
