"""Word-level tokenizer over a plain-text base vocabulary.

The base vocabulary file is one token per line (the same format the
corpus pipeline emits); added-tokens files use the identical format.
Tokens are lowercase alphanumeric words; everything else maps to <unk>.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path
from typing import List, Optional, Sequence

from .errors import EmptyTokenListError, TokenizerExtensionConflictError

PAD, UNK = "<pad>", "<unk>"
_WORD = re.compile(r"[a-z0-9]+")


class WordTokenizer:
    def __init__(self, tokens: Sequence[str], n_base: Optional[int] = None):
        self.tokens: List[str] = [PAD, UNK] + list(tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise TokenizerExtensionConflictError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        # size of the original (pre-extension) vocabulary incl. specials
        self.n_base = n_base if n_base is not None else len(self.tokens)

    @classmethod
    def from_vocab_file(cls, path) -> "WordTokenizer":
        lines = [l.strip() for l in Path(path).read_text(encoding="utf-8").splitlines()]
        tokens = [l for l in lines if l]
        if not tokens:
            raise EmptyTokenListError(f"{path}: empty vocabulary file")
        return cls(tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    def encode(self, text: str, max_len: int) -> List[int]:
        unk = self.index[UNK]
        ids = [self.index.get(w, unk) for w in _WORD.findall(text.lower())]
        return ids[:max_len] if ids else [unk]

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()


def load_token_list(path) -> List[str]:
    lines = [l.strip() for l in Path(path).read_text(encoding="utf-8").splitlines()]
    return [l for l in lines if l]


def extend_tokenizer(tokenizer: WordTokenizer, added_tokens_path, strict: bool = True) -> WordTokenizer:
    """Grow the vocabulary by exactly the added-tokens list.

    A token already present is a conflict; an empty list errors in strict
    mode and returns the tokenizer unchanged otherwise.
    """
    added = load_token_list(added_tokens_path)
    if not added:
        if strict:
            raise EmptyTokenListError(f"{added_tokens_path}: no tokens to add")
        return tokenizer
    for token in added:
        if token in tokenizer.index:
            raise TokenizerExtensionConflictError(f"token {token!r} already in vocabulary")
    if len(set(added)) != len(added):
        raise TokenizerExtensionConflictError("duplicate token in added-tokens file")
    return WordTokenizer(tokenizer.tokens[2:] + added, n_base=len(tokenizer))
