"""Deterministic word-level text encoder used by the desk-scale host model.

Real hosts plug a proper tokenizer/encoder pair behind the same three-method
surface (``tokenize``, ``encode``, ``token_index``).
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch

BOS = "<start>"
EOS = "<end>"
PAD = "<pad>"


class TokenNotFoundError(KeyError):
    def __init__(self, token: str, available: list[str]):
        self.token = token
        self.available = available
        super().__init__(f"token '{token}' not in prompt; available tokens: {available}")


class StubTextEncoder:
    """Hashes each word to a fixed pseudo-random embedding.

    The same word always maps to the same vector, so encoding is a pure
    function of the prompt. A sinusoidal position term keeps padding rows
    from being exactly constant.
    """

    def __init__(self, embed_dim: int = 16, max_tokens: int = 8):
        self.embed_dim = embed_dim
        self.max_tokens = max_tokens
        self._cache: dict[str, np.ndarray] = {}

    def tokenize(self, prompt: str) -> list[str]:
        words = prompt.lower().split()
        words = words[: self.max_tokens - 2]
        tokens = [BOS] + words + [EOS]
        tokens += [PAD] * (self.max_tokens - len(tokens))
        return tokens

    def token_index(self, prompt: str, word: str) -> int:
        tokens = self.tokenize(prompt)
        target = word.lower()
        if target not in tokens:
            available = [t for t in tokens if t not in (BOS, EOS, PAD)]
            raise TokenNotFoundError(word, available)
        return tokens.index(target)

    def _word_vector(self, word: str) -> np.ndarray:
        if word not in self._cache:
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            self._cache[word] = rng.standard_normal(self.embed_dim).astype(np.float32)
        return self._cache[word]

    def encode(self, prompt: str) -> torch.Tensor:
        tokens = self.tokenize(prompt)
        rows = np.stack([self._word_vector(t) for t in tokens])
        pos = np.arange(self.max_tokens, dtype=np.float32)[:, None]
        dims = np.arange(self.embed_dim, dtype=np.float32)[None, :]
        rows = rows + 0.1 * np.sin(pos / (10.0 ** (dims / self.embed_dim)))
        return torch.from_numpy(rows.astype(np.float32))
